"""Quantum conditional independence of the outputs of a channel.

A channel from A to outputs B and C is conditionally independent when any of
the following equivalent conditions holds:

1. it has a unitary dilation in which the B-side ancilla has no causal
   influence on C and the C-side ancilla none on B;
2. its CJ operator factorises into the product of its two marginals;
3. the conditional mutual information I(B:C|A*) of cj/d_A vanishes;
4. the input space splits as a direct sum of tensor products L_i (x) R_i with
   B fed only by L_i and C only by R_i.

This module checks each condition numerically and constructs the objects of
condition 4 and 1 explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .core import (
    TOL,
    Channel,
    DenseOperator,
    Dims,
    as_rng,
    cj_of_kraus,
    conditional_mutual_information,
    embed,
    haar_unitary,
    kraus_operators,
    partial_trace,
    permute,
    random_channel,
)
from .errors import (
    DecompositionNumericallyDegenerate,
    DimensionMismatch,
    InvalidOperator,
    LabelError,
    NotConditionallyIndependent,
)

# ---------------------------------------------------------------- example channels


def _copy_dims(d: int, outputs: Sequence[str]) -> tuple[Dims, Dims]:
    return Dims.of(("A", d)), Dims(tuple((lab, d) for lab in outputs))


def coherent_copy_channel(d: int = 2, outputs: Sequence[str] = ("B", "C")) -> Channel:
    """Isometry |i> -> |i...i> onto every output."""
    in_dims, out_dims = _copy_dims(d, outputs)
    v = np.zeros((out_dims.total, d))
    for i in range(d):
        v[np.ravel_multi_index((i,) * len(outputs), out_dims.sizes), i] = 1.0
    return cj_of_kraus([v], in_dims, out_dims)


def incoherent_copy_channel(d: int = 2, outputs: Sequence[str] = ("B", "C")) -> Channel:
    """Measure in the computational basis and broadcast the outcome to every output."""
    in_dims, out_dims = _copy_dims(d, outputs)
    kraus = []
    for i in range(d):
        k = np.zeros((out_dims.total, d))
        k[np.ravel_multi_index((i,) * len(outputs), out_dims.sizes), i] = 1.0
        kraus.append(k)
    return cj_of_kraus(kraus, in_dims, out_dims)


def product_channel(left: Channel, right: Channel) -> Channel:
    """left (x) right acting on the concatenated inputs; outputs ordered left then right."""
    in_dims = left.input_dims + right.input_dims
    out_dims = left.output_dims + right.output_dims
    m = np.kron(left.cj.matrix, right.cj.matrix)
    op = DenseOperator(left.cj.dims + right.cj.dims, m)
    return Channel(in_dims, out_dims, permute(op, out_dims.labels + in_dims.dual().labels))


def block_channel_cj(blocks, in_dims: Dims, out_b: Dims, out_c: Dims) -> Channel:
    """Assemble sum_i (B-channel of L_i) (x) (C-channel of R_i) given blocks with an
    isometry on the input space and the two per-block channels."""
    db, dc, da = out_b.total, out_c.total, in_dims.total
    total = np.zeros((db * dc * da, db * dc * da), dtype=complex)
    for blk in blocks:
        total += _embed_block(blk.left_channel.cj.matrix, blk.right_channel.cj.matrix, db, dc, blk.isometry)
    return Channel.from_matrix(total, in_dims, out_b + out_c)


def _embed_block(cj_left, cj_right, db, dc, isometry):
    """Operator on B C A* for one block: (I (x) conj W)(cjL (x) cjR)(I (x) W^T)."""
    nl = cj_left.shape[0] // db
    nr = cj_right.shape[0] // dc
    t = np.einsum("bxBX,cyCY->bcxyBCXY", cj_left.reshape(db, nl, db, nl), cj_right.reshape(dc, nr, dc, nr))
    t = t.reshape(db * dc, nl * nr, db * dc, nl * nr)
    vt = np.conj(isometry)
    t = np.einsum("ax,pxqy,by->paqb", vt, t, vt.conj())
    n = isometry.shape[0]
    return t.reshape(db * dc * n, db * dc * n)


def random_conditionally_independent_channel(
    block_dims: Sequence[tuple[int, int]], db: int, dc: int, seed=None
) -> tuple[Channel, list[tuple[int, int]]]:
    """Random channel A -> B C satisfying the direct-sum factorisation, with a random
    rotation of the input blocks. Returns the channel and its block dimensions."""
    rng = as_rng(seed)
    da = sum(l * r for l, r in block_dims)
    rot = haar_unitary(da, rng)
    blocks = []
    start = 0
    out_b, out_c = Dims.of(("B", db)), Dims.of(("C", dc))
    for l, r in block_dims:
        iso = rot[:, start : start + l * r]
        start += l * r
        left = random_channel(Dims.of(("L", l)), out_b, rng, kraus_rank=rng.integers(1, l * db + 1))
        right = random_channel(Dims.of(("R", r)), out_c, rng, kraus_rank=rng.integers(1, r * dc + 1))
        blocks.append(Block((l, r), iso, left, right))
    return block_channel_cj(blocks, Dims.of(("A", da)), out_b, out_c), list(block_dims)


# ---------------------------------------------------------------- conditions 2 and 3


def _check_partition(ch: Channel, part_b: Sequence[str], part_c: Sequence[str]) -> None:
    b, c = list(part_b), list(part_c)
    outs = ch.output_dims.labels
    if not b or not c or set(b) & set(c) or sorted(b + c) != sorted(outs):
        raise LabelError(f"{b} | {c} is not a partition of outputs {outs}")


def _ordered(dims: Dims, labels) -> Dims:
    return Dims(tuple((lab, dims.size_of(lab)) for lab in labels))


def _marginals(ch: Channel, part_b, part_c):
    """Embedded marginals rho_{B|A} (x) I_C and I_B (x) rho_{C|A} on the full CJ space."""
    dual_in = ch.input_dims.dual().labels
    full = ch.cj.dims
    mb = embed(partial_trace(ch.cj, list(part_b) + dual_in), full).matrix
    mc = embed(partial_trace(ch.cj, list(part_c) + dual_in), full).matrix
    return mb, mc


def check_factorisation(ch: Channel, out_partition, tol: float | None = None) -> tuple[bool, float]:
    """Whether cj equals the product of its B and C marginals. Returns (verdict, residual)
    where the residual is the Frobenius norm of the difference."""
    tol = TOL.algebraic if tol is None else tol
    part_b, part_c = out_partition
    _check_partition(ch, part_b, part_c)
    mb, mc = _marginals(ch, part_b, part_c)
    residual = float(np.linalg.norm(ch.cj.matrix - mb @ mc))
    ok = residual <= tol
    if ok:
        # a Hermitian product of Hermitian factors forces the factors to commute
        assert np.linalg.norm(mb @ mc - mc @ mb) <= 10 * tol + 2 * residual
    return ok, residual


def marginal_commutator(ch: Channel, out_partition) -> float:
    mb, mc = _marginals(ch, *out_partition)
    return float(np.linalg.norm(mb @ mc - mc @ mb))


def check_cmi(ch: Channel, out_partition) -> float:
    """I(B:C|A*) in bits for the normalised CJ state cj/d_A."""
    part_b, part_c = out_partition
    _check_partition(ch, part_b, part_c)
    rho_hat = ch.cj.scale(1.0 / ch.input_dims.total)
    return conditional_mutual_information(rho_hat, part_b, part_c, ch.input_dims.dual().labels)


# ---------------------------------------------------------------- condition 4


@dataclass
class Block:
    """One summand L (x) R of the input space. isometry maps L (x) R (row-major) into the
    channel's input space; left_channel feeds the B outputs, right_channel the C outputs."""

    dims: tuple[int, ...]
    isometry: np.ndarray
    left_channel: Channel
    right_channel: Channel | None = None
    part_channels: list[Channel] = field(default_factory=list)

    @property
    def left_dim(self) -> int:
        return self.dims[0]

    @property
    def right_dim(self) -> int:
        return int(np.prod(self.dims[1:]))


@dataclass
class Decomposition:
    blocks: list[Block]
    residual: float

    def block_dims(self) -> list[tuple[int, ...]]:
        return [b.dims for b in self.blocks]


def _hermitian_generators(rho_marg: np.ndarray, d_out: int, n: int) -> list[np.ndarray]:
    """Hermitian spanning set of {Tr_out[(M (x) I) rho]} on the dual input."""
    t = rho_marg.reshape(d_out, n, d_out, n)
    gens = []
    for b in range(d_out):
        gens.append(t[b, :, b, :])
        for bb in range(b + 1, d_out):
            g = t[b, :, bb, :]
            gens.append(g + g.conj().T)
            gens.append(1j * (g - g.conj().T))
    gens = [(g + g.conj().T) / 2 for g in gens]
    return [g / np.linalg.norm(g) for g in gens if np.linalg.norm(g) > 1e-14]


def _commutant(gens: Sequence[np.ndarray], n: int, tol: float) -> list[np.ndarray]:
    """Orthonormal basis of matrices commuting with every generator."""
    eye = np.eye(n)
    gram = np.zeros((n * n, n * n), dtype=complex)
    for g in gens:
        lg = np.kron(g, eye) - np.kron(eye, g.T)
        gram += lg.conj().T @ lg
    w, v = np.linalg.eigh(gram)
    scale = max(w.max(), 1.0)
    return [v[:, k].reshape(n, n) for k in range(len(w)) if w[k] <= tol * scale]


def _generic_hermitian(basis: Sequence[np.ndarray], rng) -> np.ndarray:
    c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    x = sum(ci * b for ci, b in zip(c, basis))
    return (x + x.conj().T) / 2


def _clusters(values: np.ndarray, gap: float) -> list[np.ndarray]:
    order = np.argsort(values)
    groups, cur = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] > gap:
            groups.append(np.array(cur))
            cur = []
        cur.append(b)
    groups.append(np.array(cur))
    return groups


def _block_bases(gens, n, tol, rng):
    """Split the dual input into central blocks and tensor-factor each one.
    Returns a list of (nl, m, basis) with basis an n x (nl*m) matrix, columns (l, r)."""
    comm = _commutant(gens, n, tol**2)
    extra = [_generic_hermitian(comm, rng) for _ in range(3)]
    alg = _commutant(extra, n, tol**2)
    centre = _commutant(list(gens) + extra, n, tol**2)
    z = _generic_hermitian(centre, rng)
    z = z / max(np.linalg.norm(z), 1e-300)
    wz, vz = np.linalg.eigh(z)
    gap = max(tol, 1e3 * np.finfo(float).eps) * 10
    out = []
    a = _generic_hermitian(alg, rng)
    a = a / np.linalg.norm(a)
    g = sum((rng.standard_normal() + 1j * rng.standard_normal()) * x for x in alg)
    for grp in _clusters(wz, gap):
        q = vz[:, grp]
        wa, va = np.linalg.eigh(q.conj().T @ a @ q)
        parts = _clusters(wa, gap)
        sizes = {len(p) for p in parts}
        if len(sizes) != 1:
            raise DecompositionNumericallyDegenerate(f"unequal eigenspace sizes {sorted(len(p) for p in parts)}")
        m = sizes.pop()
        spaces = [q @ va[:, p] for p in parts]
        cols = [spaces[0]]
        for sp in spaces[1:]:
            t = sp.conj().T @ g @ spaces[0]
            scale = np.linalg.norm(t) / np.sqrt(m)
            if scale < tol:
                raise DecompositionNumericallyDegenerate("block transport map is numerically zero")
            t = t / scale
            if np.linalg.norm(t.conj().T @ t - np.eye(m)) > np.sqrt(tol):
                raise DecompositionNumericallyDegenerate("block transport map is not unitary")
            cols.append(sp @ t)
        out.append((len(parts), m, np.hstack(cols)))
    return out


def find_decomposition(ch: Channel, out_partition, tol: float | None = None, seed=0) -> Decomposition:
    """Direct-sum-of-products decomposition of the input space for a conditionally
    independent channel.

    Works in dual-input coordinates: the B marginal generates a *-algebra whose centre
    splits the space into blocks and whose action inside a block picks out the left
    tensor factor. Isometries are returned on the (non-dual) input space.
    """
    tol = TOL.rank if tol is None else tol
    part_b, part_c = out_partition
    ok, res = check_factorisation(ch, out_partition, tol=max(tol, TOL.algebraic))
    if not ok:
        raise NotConditionallyIndependent(f"channel does not factorise (residual {res:.3e})")
    rng = as_rng(seed)
    dual_in = ch.input_dims.dual().labels
    out_b = _ordered(ch.output_dims, part_b)
    out_c = _ordered(ch.output_dims, part_c)
    db, dc, n = out_b.total, out_c.total, ch.input_dims.total
    cj = permute(ch.cj, list(part_b) + list(part_c) + dual_in).matrix
    rho_b = partial_trace(ch.cj, list(part_b) + dual_in)
    rho_b = permute(rho_b, list(part_b) + dual_in).matrix
    gens = _hermitian_generators(rho_b, db, n)

    blocks = []
    t = cj.reshape(db * dc, n, db * dc, n)
    for nl, m, basis in _block_bases(gens, n, tol, rng):
        comp = np.einsum("ax,paqb,by->pxqy", basis.conj(), t, basis)
        comp = comp.reshape(db, dc, nl, m, db, dc, nl, m)
        left = np.einsum("bclrBcLr->blBL", comp) / m
        right = np.einsum("bclrbCld->crCd", comp) / nl
        left_ch = Channel.from_matrix(left.reshape(db * nl, db * nl), Dims.of(("L", nl)), out_b)
        right_ch = Channel.from_matrix(right.reshape(dc * m, dc * m), Dims.of(("R", m)), out_c)
        blocks.append(Block((nl, m), np.conj(basis), left_ch, right_ch))

    blocks.sort(key=lambda b: (b.left_dim, b.right_dim, _first_support(b.isometry)))
    rebuilt = sum(_embed_block(b.left_channel.cj.matrix, b.right_channel.cj.matrix, db, dc, b.isometry) for b in blocks)
    residual = float(np.linalg.norm(rebuilt - cj))
    if residual > tol * max(1.0, np.linalg.norm(cj)):
        raise DecompositionNumericallyDegenerate(f"reconstruction residual {residual:.3e} exceeds tolerance")
    return Decomposition(blocks, residual)


def _first_support(iso: np.ndarray) -> float:
    proj = np.real(np.einsum("ij,ij->i", iso, iso.conj()))
    return float(np.argmax(proj > 0.5 / len(proj)))


def reconstruct(dec: Decomposition, in_dims: Dims, out_b: Dims, out_c: Dims) -> Channel:
    return block_channel_cj(dec.blocks, in_dims, out_b, out_c)


# ---------------------------------------------------------------- condition 1


@dataclass
class Dilation:
    """Unitary with inputs (LB, A..., LC) and outputs (B..., C..., F). The ancillas LB and
    LC start in |0>; F is discarded."""

    unitary: DenseOperator
    input_dims: Dims
    output_dims: Dims
    ancilla_states: list[DenseOperator]
    commutator: float


def _stinespring(ch: Channel, ancilla_dim: int, env_dim: int) -> np.ndarray:
    """Unitary from (ancilla, input) to (output, env), ancilla index slowest, whose action
    with the ancilla in |0> and the environment traced out is the channel."""
    n_in, n_out = ch.input_dims.total, ch.output_dims.total
    if ancilla_dim * n_in != n_out * env_dim:
        raise DimensionMismatch("Stinespring dimensions do not balance")
    kraus = kraus_operators(ch, tol=1e-14)
    if len(kraus) > env_dim:
        raise InvalidOperator("environment too small for the Kraus rank")
    iso = np.zeros((n_out, env_dim, n_in), dtype=complex)
    for e, k in enumerate(kraus):
        iso[:, e, :] = k
    iso = iso.reshape(n_out * env_dim, n_in)
    # polish to an exact isometry
    u, _, vh = np.linalg.svd(iso, full_matrices=False)
    iso = u @ vh
    rest = null_space(iso.conj().T)
    return np.hstack([iso, rest])


def build_unitary_dilation(dec: Decomposition, in_dims: Dims, out_b: Dims, out_c: Dims) -> Dilation:
    """Unitary common cause built from the blocks: V acts on LB (x) L_i, W on R_i (x) LC,
    and the two commute on the direct sum of block spaces."""
    db, dc, da = out_b.total, out_c.total, in_dims.total
    dlb, dlc = db * db, dc * dc
    df = da * db * dc
    d_in = dlb * da * dlc
    u = np.zeros((db * dc * df, d_in), dtype=complex)
    v_big, w_big = [], []
    f_off = 0
    for blk in dec.blocks:
        nl, nr = blk.left_dim, blk.right_dim
        if blk.left_channel.input_dims.total != nl or blk.right_channel.input_dims.total != nr:
            raise InvalidOperator("block channel dims disagree with block dims")
        dfb, dfc = db * nl, dc * nr
        # V_i: columns indexed (lb, l) with the ancilla slowest
        vi = _stinespring(blk.left_channel, dlb, dfb)
        # W_i: columns indexed (r, lc) with the ancilla fastest
        wi = _columns_ancilla_fast(_stinespring(blk.right_channel, dlc, dfc), nr, dlc)
        v_big.append(np.kron(vi, np.eye(nr * dlc)))
        w_big.append(np.kron(np.eye(dlb * nl), wi))
        block_u = np.kron(vi, wi)  # rows (b, fb, c, fc); cols (lb, l, r, lc)
        # input map: |lb, a, lc> -> |lb> (W^dagger |a>) |lc>
        jin = np.kron(np.kron(np.eye(dlb), blk.isometry.conj().T), np.eye(dlc))
        # output map: (b, fb, c, fc) -> (b, c, f_off + fb*dfc + fc)
        rows = np.arange(db * dfb * dc * dfc).reshape(db, dfb, dc, dfc)
        b_i, fb_i, c_i, fc_i = np.indices((db, dfb, dc, dfc))
        target = (b_i * dc + c_i) * df + f_off + fb_i * dfc + fc_i
        jout = np.zeros((db * dc * df, db * dfb * dc * dfc))
        jout[target.reshape(-1), rows.reshape(-1)] = 1.0
        u += jout @ block_u @ jin
        f_off += dfb * dfc
    v = _direct_sum(v_big)
    w = _direct_sum(w_big)
    commutator = float(np.linalg.norm(v @ w - w @ v))
    input_dims = Dims.of(("LB", dlb)) + in_dims + Dims.of(("LC", dlc))
    output_dims = out_b + out_c + Dims.of(("F", df))
    ancillas = [
        DenseOperator(Dims.of(("LB", dlb)), np.diag(np.eye(dlb)[0])),
        DenseOperator(Dims.of(("LC", dlc)), np.diag(np.eye(dlc)[0])),
    ]
    unitary = DenseOperator(Dims.of(("U", d_in)), u)
    return Dilation(unitary, input_dims, output_dims, ancillas, commutator)


def _columns_ancilla_fast(w: np.ndarray, n: int, dl: int) -> np.ndarray:
    """Reorder columns from (ancilla, input) to (input, ancilla)."""
    rows = w.shape[0]
    return w.reshape(rows, dl, n).transpose(0, 2, 1).reshape(rows, n * dl)


def _direct_sum(mats: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n), dtype=complex)
    k = 0
    for m in mats:
        out[k : k + m.shape[0], k : k + m.shape[0]] = m
        k += m.shape[0]
    return out


def dilation_channel(dil: Dilation) -> Channel:
    """Channel on the A inputs obtained with both ancillas in |0> and F discarded."""
    dlb = dil.input_dims.size_of("LB")
    dlc = dil.input_dims.size_of("LC")
    in_dims = dil.input_dims.without(["LB", "LC"])
    out_dims = dil.output_dims.without(["F"])
    da, df = in_dims.total, dil.output_dims.size_of("F")
    u = dil.unitary.matrix.reshape(out_dims.total, df, dlb, da, dlc)
    iso = u[:, :, 0, :, 0]
    cj = np.einsum("pfa,qfb->paqb", iso, iso.conj()).reshape(out_dims.total * da, out_dims.total * da)
    return Channel.from_matrix(cj, in_dims, out_dims)


def check_no_causal_influence(
    u: DenseOperator | np.ndarray,
    input_dims: Dims,
    output_dims: Dims,
    from_labels,
    to_labels,
    tol: float | None = None,
) -> bool:
    """True when the marginal output at to_labels does not depend on the inputs at
    from_labels: rho_{to|all} = rho_{to|rest} (x) I_{from*}."""
    tol = TOL.algebraic if tol is None else tol
    mat = u.matrix if isinstance(u, DenseOperator) else np.asarray(u, dtype=complex)
    if mat.shape != (output_dims.total, input_dims.total):
        raise DimensionMismatch("unitary size does not match dims")
    if not np.allclose(mat.conj().T @ mat, np.eye(input_dims.total), atol=max(tol, 1e-12) * 10):
        raise InvalidOperator("operator is not unitary")
    from_labels = [from_labels] if isinstance(from_labels, str) else list(from_labels)
    to_labels = [to_labels] if isinstance(to_labels, str) else list(to_labels)
    for lab in from_labels:
        input_dims.index(lab)
    for lab in to_labels:
        output_dims.index(lab)
    n_out, n_in = len(output_dims), len(input_dims)
    t = mat.reshape(output_dims.sizes + input_dims.sizes)
    to_ax = [output_dims.index(lab) for lab in to_labels]
    rest_ax = [k for k in range(n_out) if k not in to_ax]
    from_ax = [n_out + input_dims.index(lab) for lab in from_labels]
    other_ax = [n_out + k for k in range(n_in) if n_out + k not in from_ax]
    t = t.transpose(to_ax + rest_ax + from_ax + other_ax)
    d_to = int(np.prod([output_dims.sizes[k] for k in to_ax]))
    d_from = int(np.prod([input_dims.sizes[k - n_out] for k in from_ax]))
    d_other = input_dims.total // d_from
    m = t.reshape(d_to, -1, d_from, d_other)
    # rho[t, (f,o), s, (g,p)] = sum_r m[t,r,f,o] conj(m[s,r,g,p])
    rho = np.einsum("trfo,srgp->tfosgp", m, m.conj())
    red = np.einsum("tfosfp->tosp", rho) / d_from
    expected = np.einsum("tosp,fg->tfosgp", red, np.eye(d_from))
    scale = max(1.0, np.linalg.norm(rho))
    return bool(np.linalg.norm(rho - expected) <= tol * scale)


# ---------------------------------------------------------------- reports


@dataclass
class QciReport:
    factorises: bool
    commutes: bool
    cmi_value: float
    decomposition: Decomposition | None = None
    dilation: Dilation | None = None
    residuals: dict = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    @property
    def all_conditions(self) -> bool:
        return (
            self.factorises
            and self.commutes
            and self.residuals.get("cmi_ok", False)
            and self.decomposition is not None
            and (self.dilation is not None or self.residuals.get("dilation_skipped", False))
        )


def qci_report(ch: Channel, out_partition, tol: float | None = None, build_dilation: bool = True) -> QciReport:
    """Evaluate all four conditions for a two-way split of the outputs."""
    tol_alg = TOL.algebraic if tol is None else tol
    part_b, part_c = out_partition
    fac, res = check_factorisation(ch, out_partition, tol=max(tol_alg, 1e-12))
    comm = marginal_commutator(ch, out_partition)
    cmi = check_cmi(ch, out_partition)
    report = QciReport(fac, comm <= max(tol_alg, 1e-12) * 10, cmi)
    report.residuals.update(factorisation=res, commutator=comm, cmi_ok=abs(cmi) <= TOL.rank)
    if not fac:
        return report
    try:
        dec = find_decomposition(ch, out_partition)
    except (NotConditionallyIndependent, DecompositionNumericallyDegenerate) as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
        return report
    report.decomposition = dec
    report.residuals["decomposition"] = dec.residual
    if build_dilation:
        out_b = _ordered(ch.output_dims, part_b)
        out_c = _ordered(ch.output_dims, part_c)
        dil = build_unitary_dilation(dec, ch.input_dims, out_b, out_c)
        re = dilation_channel(dil)
        target = permute(ch.cj, list(part_b) + list(part_c) + ch.input_dims.dual().labels).matrix
        report.dilation = dil
        report.residuals["dilation"] = float(np.linalg.norm(re.cj.matrix - target))
        report.residuals["dilation_commutator"] = dil.commutator
        report.residuals["no_influence_LB_to_C"] = check_no_causal_influence(
            dil.unitary, dil.input_dims, dil.output_dims, "LB", list(part_c), tol=1e-8
        )
        report.residuals["no_influence_LC_to_B"] = check_no_causal_influence(
            dil.unitary, dil.input_dims, dil.output_dims, "LC", list(part_b), tol=1e-8
        )
    else:
        report.residuals["dilation_skipped"] = True
    return report


# ---------------------------------------------------------------- k outputs


def _decompose_parts(ch: Channel, parts: list[list[str]], tol, seed) -> list[Block]:
    if len(parts) == 1:
        iso = np.eye(ch.input_dims.total)
        return [Block((ch.input_dims.total,), iso, ch, None, [ch])]
    first = parts[0]
    rest = [lab for p in parts[1:] for lab in p]
    dec = find_decomposition(ch, (first, rest), tol=tol, seed=seed)
    blocks = []
    for blk in dec.blocks:
        for sub in _decompose_parts(blk.right_channel, parts[1:], tol, seed):
            iso = blk.isometry @ np.kron(np.eye(blk.left_dim), sub.isometry)
            dims = (blk.left_dim,) + sub.dims
            blocks.append(Block(dims, iso, blk.left_channel, None, [blk.left_channel] + sub.part_channels))
    return blocks


def check_multipartite_qci(ch: Channel, output_parts: Sequence[Sequence[str]], tol: float | None = None) -> QciReport:
    """Conditions for k >= 2 output groups: commuting marginals whose product is cj,
    vanishing I(B_l : rest | A) for every group, and an iterated block decomposition."""
    tol_alg = TOL.algebraic if tol is None else tol
    parts = [list(p) for p in output_parts]
    if len(parts) < 2:
        raise LabelError("need at least two output groups")
    flat = [lab for p in parts for lab in p]
    if sorted(flat) != sorted(ch.output_dims.labels) or len(set(flat)) != len(flat):
        raise LabelError(f"{parts} is not a partition of {ch.output_dims.labels}")
    dual_in = ch.input_dims.dual().labels
    margs = [embed(partial_trace(ch.cj, p + dual_in), ch.cj.dims).matrix for p in parts]
    comm = max(
        (np.linalg.norm(a @ b - b @ a) for i, a in enumerate(margs) for b in margs[i + 1 :]),
        default=0.0,
    )
    prod = margs[0]
    for m in margs[1:]:
        prod = prod @ m
    res = float(np.linalg.norm(ch.cj.matrix - prod))
    rho_hat = ch.cj.scale(1.0 / ch.input_dims.total)
    cmis = []
    for i, p in enumerate(parts):
        others = [lab for j, q in enumerate(parts) if j != i for lab in q]
        cmis.append(conditional_mutual_information(rho_hat, p, others, dual_in))
    fac = res <= max(tol_alg, 1e-12)
    report = QciReport(fac, comm <= max(tol_alg, 1e-12) * 10, max(cmis))
    report.residuals.update(factorisation=res, commutator=float(comm), cmi_per_part=cmis)
    report.residuals["cmi_ok"] = max(cmis) <= TOL.rank
    report.residuals["dilation_skipped"] = True
    if fac:
        try:
            blocks = _decompose_parts(ch, parts, TOL.rank, 0)
        except (NotConditionallyIndependent, DecompositionNumericallyDegenerate) as exc:
            report.errors.append(f"{type(exc).__name__}: {exc}")
            return report
        rebuilt = _rebuild_multipartite(blocks, parts, ch)
        report.decomposition = Decomposition(blocks, rebuilt)
        report.residuals["decomposition"] = rebuilt
    return report


def _rebuild_multipartite(blocks: list[Block], parts, ch: Channel) -> float:
    n = ch.input_dims.total
    flat = [lab for p in parts for lab in p]
    target = permute(ch.cj, flat + ch.input_dims.dual().labels).matrix
    d_out = int(np.prod([ch.output_dims.size_of(lab) for lab in flat]))
    total = np.zeros_like(target)
    for blk in blocks:
        op = blk.part_channels[0].cj.matrix
        douts = [blk.part_channels[0].output_dims.total]
        dins = [blk.part_channels[0].input_dims.total]
        for pc in blk.part_channels[1:]:
            op = np.kron(op, pc.cj.matrix)
            douts.append(pc.output_dims.total)
            dins.append(pc.input_dims.total)
        k = len(douts)
        t = op.reshape([x for pair in zip(douts, dins) for x in pair] * 2)
        perm = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
        t = t.transpose(perm + [p + 2 * k for p in perm])
        r = int(np.prod(dins))
        t = t.reshape(d_out, r, d_out, r)
        vt = np.conj(blk.isometry)
        t = np.einsum("ax,pxqy,by->paqb", vt, t, vt.conj())
        total += t.reshape(d_out * n, d_out * n)
    return float(np.linalg.norm(total - target))
