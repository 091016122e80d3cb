"""Standard-form time-travel circuits and three models for their dynamics.

A standard-form circuit is a single unitary U on a chronology-respecting system
(CR) and a chronology-violating system (CV), together with an input state for CR.
Tensor order is always CR then CV.

* D-CTC: the CV state is a fixed point tau = Tr_CR(U (rho (x) tau) U^dagger).
* P-CTC: post-selected teleportation, rho_f proportional to P rho P^dagger with
  P = Tr_CV(U).
* T-CTC: transition-probability model, rho_f proportional to
  P rho P^dagger + d Tr_CV(U (rho (x) I/d) U^dagger).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .core import (
    DenseOperator,
    Dims,
    PureState,
    as_rng,
    haar_unitary,
    is_unitary,
    random_density,
    trace_distance,
    trace_norm,
    von_neumann_entropy,
)
from .errors import ConvergenceFailure, DimensionMismatch, DynamicalParadox, InvalidOperator, ParameterOutOfRange

PARADOX_THRESHOLD = 1e-12


@dataclass(frozen=True)
class StandardFormCircuit:
    u: DenseOperator
    cr_dims: Dims
    cv_dims: Dims
    input: DenseOperator

    def __post_init__(self):
        if self.u.dims.total != self.cr_dims.total * self.cv_dims.total:
            raise DimensionMismatch("unitary size does not match CR and CV dims")
        if self.input.dims.total != self.cr_dims.total:
            raise DimensionMismatch("input state does not live on CR")
        if not is_unitary(self.u):
            raise InvalidOperator("circuit operator is not unitary")

    @property
    def d_cr(self) -> int:
        return self.cr_dims.total

    @property
    def d_cv(self) -> int:
        return self.cv_dims.total

    def tensor(self) -> np.ndarray:
        """U as a four-index array (CR out, CV out, CR in, CV in)."""
        a, b = self.d_cr, self.d_cv
        return self.u.matrix.reshape(a, b, a, b)

    def with_input(self, rho: DenseOperator | np.ndarray) -> "StandardFormCircuit":
        mat = rho.matrix if isinstance(rho, DenseOperator) else np.asarray(rho)
        return StandardFormCircuit(self.u, self.cr_dims, self.cv_dims, DenseOperator(self.cr_dims, mat))


def make_circuit(u: np.ndarray, d_cr: int, d_cv: int, rho_in: np.ndarray | None = None) -> StandardFormCircuit:
    cr, cv = Dims.of(("CR", d_cr)), Dims.of(("CV", d_cv))
    if rho_in is None:
        rho_in = np.zeros((d_cr, d_cr))
        rho_in[0, 0] = 1.0
    return StandardFormCircuit(DenseOperator(cr + cv, u), cr, cv, DenseOperator(cr, rho_in))


def random_circuit(d_cr: int, d_cv: int, seed=None, pure_input: bool = False) -> StandardFormCircuit:
    rng = as_rng(seed)
    u = haar_unitary(d_cr * d_cv, rng)
    rho = random_density(Dims.of(("CR", d_cr)), rng, rank=1 if pure_input else None).matrix
    return make_circuit(u, d_cr, d_cv, rho)


# ---------------------------------------------------------------- built-in circuits


def _unproved_theorem_unitary(n_bits: int) -> np.ndarray:
    """Book B, mathematician M, time-travelling copy V (each n bits):
    V flips B (the book is written from the future copy), B flips M (the mathematician
    reads the book), then M and V swap (the mathematician goes back)."""
    k = 2**n_bits
    u = np.zeros((k**3, k**3))
    for b in range(k):
        for m in range(k):
            for v in range(k):
                b1 = b ^ v
                m1 = m ^ b1
                u[(b1 * k + v) * k + m1, (b * k + m) * k + v] = 1.0
    return u


def builtin_circuits(name: str, n_bits: int = 1) -> StandardFormCircuit:
    """grandfather, unproved_theorem, swap or identity."""
    if n_bits < 1:
        raise ParameterOutOfRange("n_bits must be at least 1")
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    if name == "grandfather":
        return make_circuit(x, 1, 2, np.eye(1))
    if name == "unproved_theorem":
        k = 2**n_bits
        cr = Dims.of(("B", k), ("M", k))
        cv = Dims.of(("CV", k))
        rho = np.zeros((k * k, k * k))
        rho[0, 0] = 1.0
        return StandardFormCircuit(DenseOperator(cr + cv, _unproved_theorem_unitary(n_bits)), cr, cv, DenseOperator(cr, rho))
    if name == "swap":
        return make_circuit(np.eye(4)[[0, 2, 1, 3]], 2, 2)
    if name == "identity":
        return make_circuit(np.eye(4), 2, 2)
    raise KeyError(f"unknown circuit {name!r}")


# ---------------------------------------------------------------- P-CTCs


def p_operator(c: StandardFormCircuit) -> DenseOperator:
    """P = Tr_CV(U) as an operator on CR."""
    return DenseOperator(c.cr_dims, np.einsum("iaja->ij", c.tensor()))


def pctc_evolve(c: StandardFormCircuit, threshold: float = PARADOX_THRESHOLD) -> DenseOperator:
    p = p_operator(c).matrix
    out = p @ c.input.matrix @ p.conj().T
    tr = float(np.real(np.trace(out)))
    if tr <= threshold:
        raise DynamicalParadox(f"post-selection succeeds with weight {tr:.3e}")
    return DenseOperator(c.cr_dims, out / tr)


# ---------------------------------------------------------------- T-CTCs


@dataclass
class TctcResult:
    rho_f: DenseOperator
    p_term_weight: float
    mix_term_weight: float


def _mix_term(c: StandardFormCircuit, rho: np.ndarray) -> np.ndarray:
    """Tr_CV(U (rho (x) I) U^dagger)."""
    t = c.tensor()
    return np.einsum("iasb,st,jatb->ij", t, rho, t.conj())


def tctc_evolve(c: StandardFormCircuit) -> TctcResult:
    p = p_operator(c).matrix
    first = p @ c.input.matrix @ p.conj().T
    second = _mix_term(c, c.input.matrix)
    z = float(np.real(np.trace(first) + np.trace(second)))
    rho_f = (first + second) / z
    w1 = float(np.real(np.trace(first))) / z
    return TctcResult(DenseOperator(c.cr_dims, rho_f), w1, 1.0 - w1)


def tctc_montecarlo_estimate(c: StandardFormCircuit, samples: int, seed=None, batch: int = 100_000):
    """Monte-Carlo average of U_phi rho U_phi^dagger over Haar-random CV states phi, with
    U_phi = <phi|U|phi>, normalised by its trace. Returns (estimate, standard error)."""
    if samples < 1:
        raise ParameterOutOfRange("samples must be positive")
    rng = as_rng(seed)
    t = c.tensor()
    rho = c.input.matrix
    d_cr, d_cv = c.d_cr, c.d_cv
    sum_x = np.zeros((d_cr, d_cr), dtype=complex)
    sum_xx = np.zeros((d_cr, d_cr))
    sum_t = 0.0
    sum_tt = 0.0
    sum_xt = np.zeros((d_cr, d_cr), dtype=complex)
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        phi = rng.standard_normal((n, d_cv)) + 1j * rng.standard_normal((n, d_cv))
        phi /= np.linalg.norm(phi, axis=1, keepdims=True)
        u_phi = np.einsum("na,iajb,nb->nij", phi.conj(), t, phi)
        x = np.einsum("nij,jk,nlk->nil", u_phi, rho, u_phi.conj())
        tr = np.real(np.einsum("nii->n", x))
        sum_x += x.sum(axis=0)
        sum_t += tr.sum()
        sum_tt += (tr**2).sum()
        sum_xt += (x * tr[:, None, None]).sum(axis=0)
        sum_xx += (np.abs(x) ** 2).sum(axis=0)
        done += n
    mean_x = sum_x / samples
    mean_t = sum_t / samples
    est = mean_x / mean_t
    # delta method for a ratio of means, applied to real and imaginary parts together
    var = (sum_xx - 2 * np.real(np.conj(est) * sum_xt) + np.abs(est) ** 2 * sum_tt) / samples
    var = var - np.abs(mean_x - est * mean_t) ** 2
    stderr = np.sqrt(np.clip(var, 0, None) / samples) / mean_t
    return DenseOperator(c.cr_dims, est), stderr


def tctc_montecarlo(c: StandardFormCircuit, samples: int, seed=None) -> DenseOperator:
    return tctc_montecarlo_estimate(c, samples, seed)[0]


def hurwitz_moments(dim: int, samples: int, seed=None, batch: int = 200_000) -> tuple[float, float, float]:
    """Monte-Carlo estimates of E|phi_0|^4 and E|phi_0|^2 |phi_1|^2 over Haar states and
    their ratio (exactly 2 for dim >= 2)."""
    if dim < 2:
        raise ParameterOutOfRange("need dim >= 2")
    rng = as_rng(seed)
    s4 = s22 = 0.0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        phi = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
        p = np.abs(phi) ** 2
        p /= p.sum(axis=1, keepdims=True)
        s4 += (p[:, 0] ** 2).sum()
        s22 += (p[:, 0] * p[:, 1]).sum()
        done += n
    return s4 / samples, s22 / samples, s4 / s22


def tctc_distinguishability_bound(c: StandardFormCircuit, a: PureState, b: PureState) -> tuple[float, float]:
    """(trace distance of the two T-CTC outputs, sqrt(1 - |<a|b>|^2 / (d_CV + 1)^2))."""
    if a.dims.total != c.d_cr or b.dims.total != c.d_cr:
        raise DimensionMismatch("input states must live on CR")
    ra = tctc_evolve(c.with_input(a.projector().matrix)).rho_f
    rb = tctc_evolve(c.with_input(b.projector().matrix)).rho_f
    overlap = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return trace_distance(ra, rb), float(np.sqrt(1 - overlap / (c.d_cv + 1) ** 2))


# ---------------------------------------------------------------- D-CTCs


@dataclass
class DctcSolution:
    tau: DenseOperator
    rho_f: DenseOperator
    fixed_point_residual: float
    entropy: float
    uniqueness_flag: str
    fixed_space_dim: int


def consistency_superoperator(c: StandardFormCircuit, noise: float = 0.0) -> np.ndarray:
    """Matrix of tau -> N(Tr_CR(U (rho (x) tau) U^dagger)) on row-major vec(tau), where N is
    depolarizing noise of the given strength."""
    t = c.tensor()
    d = c.d_cv
    s = np.einsum("rasb,st,rctd->acbd", t, c.input.matrix, t.conj()).reshape(d * d, d * d)
    if noise:
        eye = np.eye(d).reshape(-1)
        s = (1 - noise) * s + noise * np.outer(eye / d, eye)
    return s


def dctc_output(c: StandardFormCircuit, tau: np.ndarray) -> np.ndarray:
    """rho_f = Tr_CV(U (rho (x) tau) U^dagger)."""
    t = c.tensor()
    return np.einsum("iasb,st,bd,jatd->ij", t, c.input.matrix, tau, t.conj())


def _hermitian_basis(vectors: np.ndarray, d: int) -> list[np.ndarray]:
    """Real-orthonormal Hermitian basis for the complex span of the given vec'd matrices
    (the span must be closed under adjoint)."""
    herm = []
    for k in range(vectors.shape[1]):
        x = vectors[:, k].reshape(d, d)
        herm += [x + x.conj().T, 1j * (x - x.conj().T)]
    real = np.array([np.concatenate([h.real.ravel(), h.imag.ravel()]) for h in herm]).T
    u, s, _ = np.linalg.svd(real, full_matrices=False)
    rank = int(np.sum(s > 1e-8 * s.max()))
    out = []
    for k in range(rank):
        v = u[:, k]
        out.append(v[: d * d].reshape(d, d) + 1j * v[d * d :].reshape(d, d))
    return out


def _max_entropy(tau0: np.ndarray, directions: list[np.ndarray], tol: float, max_iter: int) -> np.ndarray:
    """Projected gradient ascent of the von Neumann entropy over tau0 + span(directions),
    kept inside the positive cone by backtracking."""
    if not directions:
        return tau0

    def entropy(t):
        w = np.clip(np.linalg.eigvalsh(t), 0, None)
        w = w[w > 0]
        return -np.sum(w * np.log(w))

    tau = tau0
    h = entropy(tau)
    step = 1.0
    for _ in range(max_iter):
        w, v = np.linalg.eigh(tau)
        logt = (v * np.log(np.clip(w, 1e-300, None))) @ v.conj().T
        g = np.array([-np.real(np.vdot(k, logt)) for k in directions])
        gnorm = np.linalg.norm(g)
        if gnorm < tol:
            return tau
        direction = sum(gk * k for gk, k in zip(g, directions))
        step = min(step * 4, 1.0 / gnorm)
        while step > 1e-18:
            cand = tau + step * direction
            cand = (cand + cand.conj().T) / 2
            if np.linalg.eigvalsh(cand).min() >= 0:
                hc = entropy(cand)
                if hc >= h + 1e-4 * step * gnorm**2:
                    tau, h = cand, hc
                    break
            step /= 2
        else:
            return tau
    raise ConvergenceFailure("maximum-entropy search did not converge")


def dctc_evolve(
    c: StandardFormCircuit,
    noise: float = 0.0,
    rule: str = "maxEntropy",
    seed=None,
    max_iter: int = 20_000,
) -> DctcSolution:
    """Fixed point of the D-CTC consistency condition.

    With noise > 0 the map is a strict contraction and the fixed point is reached by
    iteration from a (seeded, random when seed is given) initial state. With noise = 0
    the full fixed-point set is found from the null space of the superoperator minus
    the identity, and the maximum-entropy element is selected.
    """
    if rule != "maxEntropy":
        raise ParameterOutOfRange(f"unknown selection rule {rule!r}")
    if not 0 <= noise < 1:
        raise ParameterOutOfRange("noise must lie in [0, 1)")
    d = c.d_cv
    s = consistency_superoperator(c, noise)
    if noise > 0:
        if seed is None:
            tau = np.eye(d) / d
        else:
            tau = random_density(c.cv_dims, seed).matrix
        vec = tau.reshape(-1)
        for _ in range(max_iter):
            new = s @ vec
            if np.abs(new - vec).sum() < 1e-14:
                vec = new
                break
            vec = new
        else:
            raise ConvergenceFailure("noisy D-CTC iteration did not converge")
        tau = vec.reshape(d, d)
        fixed_dim = 1
    else:
        gap = s - np.eye(d * d)
        right = null_space(gap, rcond=1e-10)
        left = null_space(gap.conj().T, rcond=1e-10)
        if right.shape[1] == 0 or right.shape[1] != left.shape[1]:
            raise ConvergenceFailure("could not resolve the fixed-point space")
        proj = right @ np.linalg.solve(left.conj().T @ right, left.conj().T)
        tau0 = (proj @ (np.eye(d).reshape(-1) / d)).reshape(d, d)
        tau0 = (tau0 + tau0.conj().T) / 2
        tau0 = tau0 / np.real(np.trace(tau0))
        basis = _hermitian_basis(right, d)
        fixed_dim = len(basis)
        # traceless directions inside the fixed space
        traces = np.array([np.real(np.trace(b)) for b in basis])
        if fixed_dim > 1:
            coeffs = null_space(traces[None, :])
            dirs = [sum(cf * b for cf, b in zip(col, basis)) for col in coeffs.T]
            dirs = _hermitian_basis(np.array([x.reshape(-1) for x in dirs]).T, d)
        else:
            dirs = []
        tau = _max_entropy(tau0, dirs, 1e-10, max_iter)
    tau = (tau + tau.conj().T) / 2
    tau = tau / np.real(np.trace(tau))
    residual_vec = (s @ tau.reshape(-1)).reshape(d, d) - tau
    residual = trace_norm(residual_vec)
    rho_f = dctc_output(c, tau)
    return DctcSolution(
        DenseOperator(c.cv_dims, tau),
        DenseOperator(c.cr_dims, rho_f),
        residual,
        von_neumann_entropy(tau, tol=1e-8),
        "unique" if fixed_dim == 1 else "family",
        fixed_dim,
    )
