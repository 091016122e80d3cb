"""Dense finite-dimensional operator algebra.

Operators carry an ordered list of labelled tensor factors. Bases are ordered
row-major (lexicographic in the factor indices). Channels are stored as
Choi-Jamiolkowski (CJ) operators on output factors followed by the starred
(dual) input factors, normalised so that tracing out the output leaves the
identity on the dual input.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidOperator, LabelError


@dataclass
class Tolerances:
    algebraic: float = 1e-9
    rank: float = 1e-6


TOL = Tolerances()


def set_tolerances(algebraic: float | None = None, rank: float | None = None) -> None:
    """Change the global tolerances used as defaults everywhere."""
    if algebraic is not None:
        TOL.algebraic = float(algebraic)
    if rank is not None:
        TOL.rank = float(rank)


def dual_label(label: str) -> str:
    return label[:-1] if label.endswith("*") else label + "*"


@dataclass(frozen=True)
class Dims:
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        facs = tuple((str(lab), int(d)) for lab, d in self.factors)
        object.__setattr__(self, "factors", facs)
        labels = [lab for lab, _ in facs]
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in {labels}")
        for lab, d in facs:
            if d < 1:
                raise InvalidOperator(f"factor {lab!r} has dimension {d}")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "Dims":
        return cls(tuple(pairs))

    @classmethod
    def qubits(cls, *labels: str) -> "Dims":
        return cls(tuple((lab, 2) for lab in labels))

    @property
    def labels(self) -> list[str]:
        return [lab for lab, _ in self.factors]

    @property
    def sizes(self) -> list[int]:
        return [d for _, d in self.factors]

    @property
    def total(self) -> int:
        return int(np.prod(self.sizes, dtype=int)) if self.factors else 1

    def __len__(self) -> int:
        return len(self.factors)

    def __add__(self, other: "Dims") -> "Dims":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LabelError(f"label collision: {sorted(clash)}")
        return Dims(self.factors + other.factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"unknown label {label!r}; have {self.labels}") from None

    def size_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def select(self, labels: Iterable[str]) -> "Dims":
        """Sub-dims for the given labels, kept in this object's order."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        return Dims(tuple(f for f in self.factors if f[0] in wanted))

    def without(self, labels: Iterable[str]) -> "Dims":
        drop = set(labels)
        for lab in drop:
            self.index(lab)
        return Dims(tuple(f for f in self.factors if f[0] not in drop))

    def dual(self) -> "Dims":
        return Dims(tuple((dual_label(lab), d) for lab, d in self.factors))

    def relabel(self, mapping: dict[str, str]) -> "Dims":
        return Dims(tuple((mapping.get(lab, lab), d) for lab, d in self.factors))


@dataclass(frozen=True)
class DenseOperator:
    dims: Dims
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        n = self.dims.total
        if mat.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {mat.shape} does not match total dimension {n}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def labels(self) -> list[str]:
        return self.dims.labels

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def dag(self) -> "DenseOperator":
        return DenseOperator(self.dims, self.matrix.conj().T)

    def relabel(self, mapping: dict[str, str]) -> "DenseOperator":
        return DenseOperator(self.dims.relabel(mapping), self.matrix)

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        if other.dims != self.dims:
            raise DimensionMismatch("operator product needs identical dims")
        return DenseOperator(self.dims, self.matrix @ other.matrix)

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        if other.dims != self.dims:
            raise DimensionMismatch("operator sum needs identical dims")
        return DenseOperator(self.dims, self.matrix + other.matrix)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        if other.dims != self.dims:
            raise DimensionMismatch("operator difference needs identical dims")
        return DenseOperator(self.dims, self.matrix - other.matrix)

    def scale(self, c: complex) -> "DenseOperator":
        return DenseOperator(self.dims, c * self.matrix)


@dataclass(frozen=True)
class PureState:
    dims: Dims
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if vec.shape[0] != self.dims.total:
            raise DimensionMismatch("amplitude count does not match total dimension")
        if abs(np.linalg.norm(vec) - 1.0) > TOL.algebraic:
            raise InvalidOperator(f"state norm {np.linalg.norm(vec)} is not 1")
        vec.flags.writeable = False
        object.__setattr__(self, "amplitudes", vec)

    def projector(self) -> DenseOperator:
        return DenseOperator(self.dims, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class Channel:
    input_dims: Dims
    output_dims: Dims
    cj: DenseOperator

    def __post_init__(self):
        expected = self.output_dims + self.input_dims.dual()
        if self.cj.dims != expected:
            raise DimensionMismatch(f"CJ dims {self.cj.dims.labels} should be {expected.labels}")

    @classmethod
    def from_matrix(cls, matrix, input_dims: Dims, output_dims: Dims) -> "Channel":
        return cls(input_dims, output_dims, DenseOperator(output_dims + input_dims.dual(), matrix))

    def violations(self, tol: float | None = None) -> list[str]:
        tol = TOL.algebraic if tol is None else tol
        out = []
        m = self.cj.matrix
        if np.linalg.norm(m - m.conj().T) > tol:
            out.append("CJ operator is not Hermitian")
        elif np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -tol:
            out.append("CJ operator is not positive semidefinite")
        marg = partial_trace(self.cj, self.input_dims.dual().labels).matrix
        if np.linalg.norm(marg - np.eye(self.input_dims.total)) > tol:
            out.append("output partial trace is not the identity")
        return out

    def is_valid(self, tol: float | None = None) -> bool:
        return not self.violations(tol)


@dataclass(frozen=True)
class Instrument:
    """Instrument arms as CJ operators (output first, then dual input) for a map from a
    space to itself. The arms sum to a channel."""

    dims: Dims
    arms: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        n = self.dims.total
        arms = []
        for lab, arm in self.arms:
            a = np.array(arm, dtype=complex)
            if a.shape != (n * n, n * n):
                raise DimensionMismatch(f"instrument arm {lab!r} has shape {a.shape}")
            arms.append((str(lab), a))
        object.__setattr__(self, "arms", tuple(arms))

    @property
    def outcomes(self) -> list[str]:
        return [lab for lab, _ in self.arms]

    def violations(self, tol: float | None = None) -> list[str]:
        tol = TOL.algebraic if tol is None else tol
        out = []
        n = self.dims.total
        for lab, a in self.arms:
            if np.linalg.norm(a - a.conj().T) > tol or np.linalg.eigvalsh((a + a.conj().T) / 2).min() < -tol:
                out.append(f"arm {lab!r} is not positive semidefinite")
        total = sum(a for _, a in self.arms)
        marg = np.einsum("oioj->ij", total.reshape(n, n, n, n))
        if np.linalg.norm(marg - np.eye(n)) > tol:
            out.append("arms do not sum to a trace-preserving map")
        return out


# ---------------------------------------------------------------- constructors


def identity(dims: Dims) -> DenseOperator:
    return DenseOperator(dims, np.eye(dims.total))


def basis_ket(dims: Dims, index: int | Sequence[int]) -> PureState:
    """Computational basis vector; index is either flat or one index per factor."""
    if not isinstance(index, (int, np.integer)):
        index = int(np.ravel_multi_index(tuple(index), dims.sizes)) if len(dims) else 0
    vec = np.zeros(dims.total, dtype=complex)
    vec[int(index)] = 1.0
    return PureState(dims, vec)


def state(dims: Dims, amplitudes, normalise: bool = True) -> PureState:
    vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if normalise:
        vec = vec / np.linalg.norm(vec)
    return PureState(dims, vec)


def density(dims: Dims, matrix) -> DenseOperator:
    return DenseOperator(dims, matrix)


def maximally_mixed(dims: Dims) -> DenseOperator:
    return DenseOperator(dims, np.eye(dims.total) / dims.total)


def is_density(op: DenseOperator, tol: float | None = None) -> bool:
    tol = TOL.algebraic if tol is None else tol
    m = op.matrix
    if np.linalg.norm(m - m.conj().T) > tol:
        return False
    if abs(np.trace(m) - 1) > tol:
        return False
    return np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -tol


def is_unitary(op: DenseOperator | np.ndarray, tol: float | None = None) -> bool:
    tol = TOL.algebraic if tol is None else tol
    m = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    return np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])) <= tol * max(1, m.shape[0])


# ---------------------------------------------------------------- tensor algebra


def tensor(a: DenseOperator, b: DenseOperator) -> DenseOperator:
    return DenseOperator(a.dims + b.dims, np.kron(a.matrix, b.matrix))


def tensor_all(*ops: DenseOperator) -> DenseOperator:
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def _letters(n: int) -> str:
    letters = string.ascii_letters
    if n > len(letters):
        raise InvalidOperator("too many tensor factors")
    return letters[:n]


def permute(op: DenseOperator, labels: Sequence[str]) -> DenseOperator:
    """Reorder the tensor factors of op into the given label order."""
    labels = list(labels)
    if sorted(labels) != sorted(op.labels):
        raise LabelError(f"{labels} is not a permutation of {op.labels}")
    if labels == op.labels:
        return op
    n = len(labels)
    perm = [op.dims.index(lab) for lab in labels]
    sizes = op.dims.sizes
    t = op.matrix.reshape(sizes + sizes)
    t = t.transpose(perm + [p + n for p in perm])
    new_dims = Dims(tuple(op.dims.factors[p] for p in perm))
    return DenseOperator(new_dims, t.reshape(new_dims.total, new_dims.total))


def partial_trace(op: DenseOperator, keep: Iterable[str]) -> DenseOperator:
    """Trace out every factor not listed in keep; kept factors stay in their original order."""
    keep = set(keep)
    for lab in keep:
        op.dims.index(lab)
    n = len(op.dims)
    if len(keep) == n:
        return op
    letters = _letters(2 * n)
    rows = list(letters[:n])
    cols = list(letters[n:])
    out_r, out_c = [], []
    for k, lab in enumerate(op.labels):
        if lab in keep:
            out_r.append(rows[k])
            out_c.append(cols[k])
        else:
            cols[k] = rows[k]
    sizes = op.dims.sizes
    expr = "".join(rows) + "".join(cols) + "->" + "".join(out_r) + "".join(out_c)
    res = np.einsum(expr, op.matrix.reshape(sizes + sizes))
    new_dims = op.dims.select(keep)
    return DenseOperator(new_dims, res.reshape(new_dims.total, new_dims.total))


def embed(op: DenseOperator, full: Dims) -> DenseOperator:
    """Tensor op with identities on the missing factors of full and order as in full."""
    rest = full.without(op.labels)
    out = tensor(op, identity(rest)) if len(rest) else op
    return permute(out, full.labels)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a @ b - b @ a))


# ---------------------------------------------------------------- channels


def link_operator(dims: Dims, out_labels: Sequence[str] | None = None) -> DenseOperator:
    """CJ operator of the identity channel, sum_ij |i><j| (x) |i><j|."""
    out_dims = dims if out_labels is None else Dims(tuple(zip(out_labels, dims.sizes)))
    n = dims.total
    v = np.eye(n).reshape(-1)
    return DenseOperator(out_dims + dims.dual(), np.outer(v, v))


def identity_channel(dims: Dims, output_dims: Dims | None = None) -> Channel:
    out = dims if output_dims is None else output_dims
    return Channel(dims, out, link_operator(dims, out.labels))


def cj_of_kraus(kraus: Sequence[np.ndarray], input_dims: Dims, output_dims: Dims) -> Channel:
    """CJ operator sum_k vec(K_k) vec(K_k)^dagger with row-major vec (output index first)."""
    n_out, n_in = output_dims.total, input_dims.total
    m = np.zeros((n_out * n_in, n_out * n_in), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (n_out, n_in):
            raise DimensionMismatch(f"Kraus operator shape {k.shape} != {(n_out, n_in)}")
        v = k.reshape(-1)
        m += np.outer(v, v.conj())
    return Channel.from_matrix(m, input_dims, output_dims)


def cj_of_unitary(u: DenseOperator | np.ndarray, input_dims: Dims, output_dims: Dims) -> Channel:
    mat = u.matrix if isinstance(u, DenseOperator) else np.asarray(u, dtype=complex)
    if mat.shape != (output_dims.total, input_dims.total):
        raise DimensionMismatch("unitary size does not match input/output dims")
    if input_dims.total != output_dims.total or not is_unitary(mat):
        raise InvalidOperator("operator is not unitary within tolerance")
    return cj_of_kraus([mat], input_dims, output_dims)


def cj_of_map(fn, input_dims: Dims, output_dims: Dims) -> Channel:
    """CJ operator of a linear map given as a function on output-sized numpy matrices."""
    n_in, n_out = input_dims.total, output_dims.total
    m = np.zeros((n_out, n_in, n_out, n_in), dtype=complex)
    for i in range(n_in):
        for j in range(n_in):
            e = np.zeros((n_in, n_in), dtype=complex)
            e[i, j] = 1.0
            m[:, i, :, j] = fn(e)
    return Channel.from_matrix(m.reshape(n_out * n_in, n_out * n_in), input_dims, output_dims)


def depolarizing_channel(dims: Dims, strength: float = 1.0) -> Channel:
    """rho -> (1-p) rho + p Tr(rho) I/d; p=1 is the fully depolarizing channel."""
    d = dims.total
    return cj_of_map(lambda x: (1 - strength) * x + strength * np.trace(x) * np.eye(d) / d, dims, dims)


def dephasing_channel(dims: Dims) -> Channel:
    return cj_of_map(lambda x: np.diag(np.diag(x)), dims, dims)


def apply_channel(ch: Channel, rho: DenseOperator) -> DenseOperator:
    """Output state Tr_in*(cj (I (x) rho^T))."""
    if rho.dims.sizes != ch.input_dims.sizes:
        raise DimensionMismatch("state dims do not match channel input dims")
    n_out, n_in = ch.output_dims.total, ch.input_dims.total
    t = ch.cj.matrix.reshape(n_out, n_in, n_out, n_in)
    out = np.einsum("aibj,ij->ab", t, rho.matrix)
    return DenseOperator(ch.output_dims, out)


def compose_channels(first: Channel, second: Channel) -> Channel:
    """Channel applying first then second."""
    if first.output_dims.sizes != second.input_dims.sizes:
        raise DimensionMismatch("cannot compose channels with mismatched dims")
    a, b, c = first.input_dims.total, first.output_dims.total, second.output_dims.total
    t1 = first.cj.matrix.reshape(b, a, b, a)
    t2 = second.cj.matrix.reshape(c, b, c, b)
    out = np.einsum("xkyl,kilj->xiyj", t2, t1)
    return Channel.from_matrix(out.reshape(c * a, c * a), first.input_dims, second.output_dims)


def kraus_operators(ch: Channel, tol: float | None = None) -> list[np.ndarray]:
    tol = TOL.algebraic if tol is None else tol
    w, v = np.linalg.eigh(ch.cj.matrix)
    n_out, n_in = ch.output_dims.total, ch.input_dims.total
    return [np.sqrt(lam) * v[:, k].reshape(n_out, n_in) for k, lam in enumerate(w) if lam > tol]


def marginal_channel(ch: Channel, keep_outputs: Iterable[str]) -> Channel:
    keep_outputs = list(keep_outputs)
    out_dims = ch.output_dims.select(keep_outputs)
    cj = partial_trace(ch.cj, out_dims.labels + ch.input_dims.dual().labels)
    return Channel(ch.input_dims, out_dims, cj)


# ---------------------------------------------------------------- entropies and distances


def _eigvals_psd(m: np.ndarray, tol: float) -> np.ndarray:
    w = np.linalg.eigvalsh((m + m.conj().T) / 2)
    if w.min() < -tol:
        raise InvalidOperator(f"operator has negative eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None)


def von_neumann_entropy(rho: DenseOperator | np.ndarray, tol: float | None = None) -> float:
    """Entropy in bits with 0 log 0 = 0."""
    tol = TOL.algebraic if tol is None else tol
    m = rho.matrix if isinstance(rho, DenseOperator) else np.asarray(rho)
    w = _eigvals_psd(m, tol)
    w = w[w > 0]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def conditional_mutual_information(
    rho: DenseOperator, part_a: Iterable[str], part_b: Iterable[str], part_c: Iterable[str] = ()
) -> float:
    """I(A:B|C) = S(AC) + S(BC) - S(C) - S(ABC), in bits; unlisted factors are traced out."""
    a, b, c = set(part_a), set(part_b), set(part_c)
    if a & b or a & c or b & c:
        raise LabelError("label sets must be disjoint")

    def s(labels):
        return von_neumann_entropy(partial_trace(rho, labels)) if labels else 0.0

    return s(a | c) + s(b | c) - s(c) - s(a | b | c)


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(r: DenseOperator, s: DenseOperator) -> float:
    """Tr sqrt(sqrt(r) s sqrt(r)), computed as the trace norm of sqrt(r) sqrt(s)."""
    if r.dims.sizes != s.dims.sizes:
        raise DimensionMismatch("fidelity needs equal dims")
    sv = np.linalg.svd(_sqrt_psd(r.matrix) @ _sqrt_psd(s.matrix), compute_uv=False)
    return float(np.clip(sv.sum(), 0.0, 1.0))


def trace_distance(r: DenseOperator, s: DenseOperator) -> float:
    if r.dims.sizes != s.dims.sizes:
        raise DimensionMismatch("trace distance needs equal dims")
    return trace_norm(r.matrix - s.matrix) / 2


def trace_norm(m: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2)).sum())


# ---------------------------------------------------------------- random sampling


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_vector(dim: int, rng) -> np.ndarray:
    rng = as_rng(rng)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def haar_sample_pure(dim: int, seed=None, label: str = "S") -> PureState:
    """Unitarily invariant random pure state from normalised complex Gaussians."""
    return PureState(Dims.of((label, dim)), haar_vector(dim, seed))


def haar_unitary(dim: int, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density(dims: Dims, seed=None, rank: int | None = None) -> DenseOperator:
    rng = as_rng(seed)
    n = dims.total
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    m = g @ g.conj().T
    return DenseOperator(dims, m / np.trace(m))


def random_channel(input_dims: Dims, output_dims: Dims, seed=None, kraus_rank: int | None = None) -> Channel:
    """Random channel from a Haar isometry into output (x) environment."""
    rng = as_rng(seed)
    n_in, n_out = input_dims.total, output_dims.total
    k = max(int(kraus_rank or n_in * n_out), -(-n_in // n_out))
    u = haar_unitary(n_out * k, rng)[:, :n_in]
    kraus = [u.reshape(n_out, k, n_in)[:, e, :] for e in range(k)]
    return cj_of_kraus(kraus, input_dims, output_dims)


# ---------------------------------------------------------------- JSON


def dims_to_json(dims: Dims) -> list[dict]:
    return [{"label": lab, "d": d} for lab, d in dims.factors]


def dims_from_json(doc) -> Dims:
    from .errors import SchemaError

    try:
        return Dims(tuple((str(f["label"]), int(f["d"])) for f in doc))
    except (TypeError, KeyError, ValueError) as exc:
        raise SchemaError(f"bad dims: {exc}") from exc


def operator_to_json(op: DenseOperator) -> dict:
    flat = op.matrix.reshape(-1)
    return {
        "dims": dims_to_json(op.dims),
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }


def operator_from_json(doc) -> DenseOperator:
    from .errors import SchemaError

    if not isinstance(doc, dict) or "dims" not in doc or "entries" not in doc:
        raise SchemaError("operator needs 'dims' and 'entries'")
    dims = dims_from_json(doc["dims"])
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in doc["entries"]], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad entries: {exc}") from exc
    if arr.size != dims.total**2:
        raise SchemaError(f"expected {dims.total ** 2} entries, got {arr.size}")
    return DenseOperator(dims, arr.reshape(dims.total, dims.total))
