"""Finite ontological models, overlap measures and the overlap/macro-realism bound formulas."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, null_space

from .core import Dims, PureState
from .errors import LabelError, ModelInvalid, ParameterOutOfRange, SchemaError

SUPPORT_THRESHOLD = 1e-12
STRICT_MARGIN = 1e-12
EXHAUSTIVE_LIMIT = 20


@dataclass
class FiniteOntModel:
    """A finite ontic state space with preparations, transformations and responses.

    Conventions: preparations are probability vectors over the ontic states; a
    transform T is column-stochastic, T[j, i] = probability of moving from state i to
    state j, so the pushed-forward preparation is T @ mu; a response matrix R has
    R[k, i] = probability of outcome k given ontic state i (columns sum to one).
    """

    ontic_states: list[str]
    preparations: dict[str, np.ndarray]
    transforms: dict[str, np.ndarray] = field(default_factory=dict)
    responses: dict[str, tuple[tuple[str, ...], np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.ontic_states)
        if n == 0 or len(set(self.ontic_states)) != n:
            raise ModelInvalid("ontic state labels must be non-empty and distinct")
        self.preparations = {k: np.asarray(v, dtype=float) for k, v in self.preparations.items()}
        self.transforms = {k: np.asarray(v, dtype=float) for k, v in self.transforms.items()}
        self.responses = {k: (tuple(o), np.asarray(r, dtype=float)) for k, (o, r) in self.responses.items()}
        for name, p in self.preparations.items():
            if p.shape != (n,) or p.min() < -SUPPORT_THRESHOLD or abs(p.sum() - 1) > 1e-12:
                raise ModelInvalid(f"preparation {name!r} is not a probability vector on {n} states")
        for name, t in self.transforms.items():
            if t.shape != (n, n) or t.min() < -SUPPORT_THRESHOLD or np.abs(t.sum(axis=0) - 1).max() > 1e-12:
                raise ModelInvalid(f"transform {name!r} is not column-stochastic")
        for name, (outs, r) in self.responses.items():
            if r.shape != (len(outs), n) or r.min() < -SUPPORT_THRESHOLD or np.abs(r.sum(axis=0) - 1).max() > 1e-12:
                raise ModelInvalid(f"response {name!r} is not a valid response matrix")

    @property
    def size(self) -> int:
        return len(self.ontic_states)

    def preparation(self, label: str) -> np.ndarray:
        try:
            return self.preparations[label]
        except KeyError:
            raise LabelError(f"unknown preparation {label!r}") from None

    def transform(self, label: str) -> np.ndarray:
        try:
            return self.transforms[label]
        except KeyError:
            raise LabelError(f"unknown transform {label!r}") from None

    def response(self, label: str) -> tuple[tuple[str, ...], np.ndarray]:
        try:
            return self.responses[label]
        except KeyError:
            raise LabelError(f"unknown measurement {label!r}") from None


def random_model(n_states: int, n_preps: int, seed=None, sparsity: float = 0.3) -> FiniteOntModel:
    """Random model whose preparations have random supports (each entry zeroed with the
    given probability, at least one entry kept)."""
    rng = np.random.default_rng(seed)
    preps = {}
    for k in range(n_preps):
        p = rng.random(n_states)
        mask = rng.random(n_states) < sparsity
        mask[rng.integers(n_states)] = False
        p[mask] = 0.0
        preps[f"p{k}"] = p / p.sum()
    return FiniteOntModel([f"l{i}" for i in range(n_states)], preps)


def _targets(m: FiniteOntModel, target) -> list[np.ndarray]:
    labels = [target] if isinstance(target, str) else list(target)
    if not labels:
        raise LabelError("empty target set")
    return [m.preparation(t) for t in labels]


def asymmetric_overlap(m: FiniteOntModel, target, given: str) -> float:
    """mu(union of the supports of the target preparations), mu = the given preparation."""
    mu = m.preparation(given)
    support = np.zeros(m.size, dtype=bool)
    for nu in _targets(m, target):
        support |= nu > SUPPORT_THRESHOLD
    return float(mu[support].sum())


def symmetric_overlap(m: FiniteOntModel, prep_a: str, prep_b: str) -> float:
    return float(np.minimum(m.preparation(prep_a), m.preparation(prep_b)).sum())


def _kept_mass(mu: np.ndarray, excluded: np.ndarray) -> float:
    return float(mu[~excluded].sum())


def _eps_exhaustive(mu: np.ndarray, weights: np.ndarray, cap: float) -> np.ndarray:
    """Best excluded set by enumerating all subsets (weights: constraints x states)."""
    n = mu.size
    best_val, best_mask = -1.0, np.zeros(n, dtype=bool)
    bits = np.arange(n)
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n))
        masks = ((idx[:, None] >> bits) & 1).astype(bool)
        feasible = np.all(masks.astype(float) @ weights.T <= cap, axis=1)
        if not feasible.any():
            continue
        vals = np.where(feasible, masks.astype(float) @ mu, -1.0)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_mask = vals[k], masks[k]
    return best_mask


def _eps_branch_and_bound(mu: np.ndarray, weights: np.ndarray, cap: float) -> np.ndarray:
    """Depth-first branch and bound over states sorted by decreasing mu-mass; the bound is
    the current excluded mass plus all remaining mass."""
    order = np.argsort(-mu, kind="stable")
    vals = mu[order]
    w = weights[:, order]
    suffix = np.concatenate([np.cumsum(vals[::-1])[::-1], [0.0]])
    n = vals.size
    best = [-1.0, np.zeros(n, dtype=bool)]
    chosen = np.zeros(n, dtype=bool)

    def search(i: int, value: float, load: np.ndarray):
        if value + suffix[i] <= best[0]:
            return
        if i == n:
            best[0], best[1] = value, chosen.copy()
            return
        new_load = load + w[:, i]
        if np.all(new_load <= cap):
            chosen[i] = True
            search(i + 1, value + vals[i], new_load)
            chosen[i] = False
        search(i + 1, value, load)

    search(0, 0.0, np.zeros(w.shape[0]))
    mask = np.zeros(n, dtype=bool)
    mask[order] = best[1]
    return mask


def epsilon_asymmetric_overlap(m: FiniteOntModel, target, given: str, epsilon: float, method: str = "auto") -> float:
    """inf mu(Omega) over sets Omega with nu(Omega) > 1 - epsilon for every target nu.

    Solved exactly as a 0/1 knapsack on the complement: exclude states to maximise the
    excluded mu-mass while each target's excluded mass stays strictly below epsilon
    (implemented as <= epsilon - 1e-12; states outside every support are free).
    """
    if not 0 <= epsilon < 1:
        raise ParameterOutOfRange("epsilon must lie in [0, 1)")
    mu = m.preparation(given)
    weights = np.array(_targets(m, target))
    weights = np.where(weights > SUPPORT_THRESHOLD, weights, 0.0)
    cap = max(epsilon - STRICT_MARGIN, 0.0)
    free = np.all(weights == 0, axis=0)
    active = np.flatnonzero(~free)
    excluded = free.copy()
    if active.size:
        if method == "auto":
            method = "exhaustive" if active.size <= EXHAUSTIVE_LIMIT else "branch_and_bound"
        solver = {"exhaustive": _eps_exhaustive, "branch_and_bound": _eps_branch_and_bound}.get(method)
        if solver is None:
            raise ParameterOutOfRange(f"unknown method {method!r}")
        excluded[active] = solver(mu[active], weights[:, active], cap)
    return _kept_mass(mu, excluded)


def apply_transform(m: FiniteOntModel, prep: str, transform: str) -> np.ndarray:
    return m.transform(transform) @ m.preparation(prep)


def outcome_distribution(m: FiniteOntModel, prep: str, measurement: str, transform: str | None = None) -> np.ndarray:
    mu = m.preparation(prep) if transform is None else apply_transform(m, prep, transform)
    return m.response(measurement)[1] @ mu


@dataclass
class ReproductionReport:
    ok: bool
    max_deviation: float
    deviations: list[float]


def reproduces_quantum(m: FiniteOntModel, entries, epsilon: float) -> ReproductionReport:
    """entries: iterable of (preparation, transform or None, measurement, target probabilities).
    Each predicted outcome probability must lie within epsilon of its target."""
    devs = []
    for prep, transform, meas, target in entries:
        pred = outcome_distribution(m, prep, meas, transform)
        target = np.asarray(target, dtype=float)
        if target.shape != pred.shape:
            raise LabelError(f"target for {meas!r} has {target.size} entries, expected {pred.size}")
        devs.append(float(np.abs(pred - target).max()))
    worst = max(devs, default=0.0)
    return ReproductionReport(worst <= epsilon + 1e-12, worst, devs)


def model_to_json(m: FiniteOntModel) -> dict:
    return {
        "states": list(m.ontic_states),
        "preparations": {k: v.tolist() for k, v in m.preparations.items()},
        "transforms": {k: v.tolist() for k, v in m.transforms.items()},
        "responses": {k: {"outcomes": list(o), "matrix": r.tolist()} for k, (o, r) in m.responses.items()},
    }


def model_from_json(doc) -> FiniteOntModel:
    try:
        responses = {k: (v["outcomes"], v["matrix"]) for k, v in doc.get("responses", {}).items()}
        return FiniteOntModel(list(doc["states"]), dict(doc["preparations"]), dict(doc.get("transforms", {})), responses)
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed ontological model: {exc}") from None


# ---------------------------------------------------------------- anti-distinguishability


def anti_distinguishable_triple(a: float, b: float, c: float) -> bool:
    """Criterion for three pure states with pairwise squared overlaps a, b, c."""
    for x in (a, b, c):
        if not 0 <= x <= 1:
            raise ParameterOutOfRange("squared overlaps must lie in [0, 1]")
    s = a + b + c
    return s < 1 and (1 - s) ** 2 >= 4 * a * b * c


def construct_theorem_states(alpha: float, d: int) -> tuple[PureState, PureState, PureState]:
    """(psi, phi, |0>) in dimension d with <0|psi> = <phi|psi> = alpha and the triple
    anti-distinguishable.

    psi = alpha|0> + beta|1> + t|2>, beta = sqrt(2) alpha^2;
    phi = delta|0> + eta|1> + k|3>, delta = 1 - 2 alpha^2, eta = sqrt(2) alpha.
    """
    if not 0 < alpha < 1 / math.sqrt(2):
        raise ParameterOutOfRange("alpha must lie in (0, 1/sqrt(2))")
    if d < 4:
        raise ParameterOutOfRange("need d >= 4")
    beta = math.sqrt(2) * alpha**2
    t = math.sqrt(max(1 - alpha**2 - beta**2, 0.0))
    delta = 1 - 2 * alpha**2
    eta = math.sqrt(2) * alpha
    k = math.sqrt(max(1 - delta**2 - eta**2, 0.0))
    dims = Dims.of(("S", d))
    psi, phi, zero = np.zeros(d), np.zeros(d), np.zeros(d)
    psi[:3] = alpha, beta, t
    phi[[0, 1, 3]] = delta, eta, k
    zero[0] = 1.0
    return PureState(dims, psi), PureState(dims, phi), PureState(dims, zero)


def theorem_unitary(alpha: float, d: int) -> np.ndarray:
    """A unitary with U|0> = phi and U psi = psi for the constructed states."""
    psi, phi, zero = (s.amplitudes for s in construct_theorem_states(alpha, d))
    a = np.vdot(zero, psi)
    src_perp = psi - a * zero
    dst_perp = psi - a * phi
    src_perp = src_perp / np.linalg.norm(src_perp)
    dst_perp = dst_perp / np.linalg.norm(dst_perp)
    src = np.column_stack([zero, src_perp])
    dst = np.column_stack([phi, dst_perp])
    src = np.column_stack([src, null_space(src.conj().T)])
    dst = np.column_stack([dst, null_space(dst.conj().T)])
    return dst @ src.conj().T


# ---------------------------------------------------------------- bound formulas


@dataclass(frozen=True)
class BoundValue:
    name: str
    value: float
    applicable: bool
    note: str = ""


def bound_tables(alpha: float, d: int, epsilon: float = 0.0) -> dict[str, BoundValue]:
    """Overlap bounds for |<0|psi>| = alpha in dimension d with additive error epsilon.

    Each entry carries an applicability flag for the hypotheses under which it holds.
    """
    a2 = alpha**2
    big_d = d > 3
    small_alpha = 0 < alpha < 0.25
    out = {}
    out["maxEpistemic"] = BoundValue(
        "maxEpistemic", a2 * (0.5 + a2), big_d and 0 < a2 < 0.5, "needs d > 3 and |<0|psi>|^2 in (0, 1/2)"
    )
    large = a2 * (1 + 2 * alpha) / (d - 2) if d != 2 else math.inf
    out["largeD"] = BoundValue("largeD", large, big_d and small_alpha, "needs d > 3 and alpha in (0, 1/4)")
    coeff = (3 * d * d - 7 * d) / (2 * (d - 2)) if d != 2 else math.inf
    out["symmetricError"] = BoundValue(
        "symmetricError",
        large + coeff * epsilon,
        big_d and small_alpha and 0 <= epsilon <= 1,
        "needs d > 3, alpha in (0, 1/4) and epsilon in [0, 1]",
    )
    out["symmetricErrorEpsilonCoefficient"] = BoundValue("symmetricErrorEpsilonCoefficient", coeff, big_d)
    out["basic"] = BoundValue("basic", 1 - math.sqrt(max(1 - a2, 0.0)), 0 <= alpha <= 1, "needs alpha in [0, 1]")
    return out


def bound_rows(alpha: float, d: int, epsilon: float = 0.0) -> list[tuple]:
    """CSV-ready rows (alpha, d, epsilon, bound name, value, applicable)."""
    return [(alpha, d, epsilon, b.name, b.value, b.applicable) for b in bound_tables(alpha, d, epsilon).values()]


# ---------------------------------------------------------------- macro-realism inequality


@dataclass(frozen=True)
class MrResult:
    lhs: float
    rhs: float
    violated: bool


def mr_inequality(alpha: float, eta: float, tau: float, kappa: float, epsilon: float) -> MrResult:
    """Evaluate both sides of the inequality implied by a large overlap; a violation
    (lhs < rhs) is a contradiction."""
    if epsilon < 0:
        raise ParameterOutOfRange("epsilon must be nonnegative")
    if epsilon > 0:
        if not (kappa > 2 * epsilon and eta > epsilon and kappa > 0 and eta > 2 * epsilon / kappa):
            raise ParameterOutOfRange("need eta > 2 eps/kappa, eta > eps and kappa > 2 eps")
        ratio_k = epsilon / (kappa * eta)
        ratio = epsilon / eta
    else:
        if kappa < 0 or eta <= 0:
            raise ParameterOutOfRange("need kappa >= 0 and eta > 0")
        ratio_k = ratio = 0.0
    a2 = alpha**2
    lhs = a2 * (1 + 2 * a2) + epsilon * (3 - kappa)
    rhs = 2 * (1 - kappa) ** 2 * (1 - ratio_k) / (1 - ratio) * (a2 - epsilon - tau - ratio * (1 - tau))
    return MrResult(lhs, rhs, lhs - rhs < 0)


def mr_reduced(alpha: float, eta: float) -> float:
    """The zero-error, tau = eta form alpha^2 (2 alpha^2 - 1) + 2 eta; negative means violated."""
    a2 = alpha**2
    return a2 * (2 * a2 - 1) + 2 * eta


def mr_violation_interval(eta: float) -> tuple[float, float] | None:
    """Open interval of alpha^2 on which the reduced form is negative, or None."""
    disc = 1 - 16 * eta
    if disc <= 0:
        return None
    r = math.sqrt(disc)
    return (1 - r) / 4, (1 + r) / 4


# ---------------------------------------------------------------- Leggett-Garg


_Z_PROJ = (np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex))
_Y = np.array([[0, -1j], [1j, 0]])


def _rotation(theta: float) -> np.ndarray:
    return expm(-0.5j * theta * _Y)


def _two_time_correlator(rho: np.ndarray, first: np.ndarray, between: np.ndarray) -> float:
    """<Q_i Q_j> with Q = sigma_z measured at both times, Lueders collapse after the first."""
    total = 0.0
    for s1, p1 in zip((1, -1), _Z_PROJ):
        post = p1 @ first @ rho @ first.conj().T @ p1
        evolved = between @ post @ between.conj().T
        for s2, p2 in zip((1, -1), _Z_PROJ):
            total += s1 * s2 * float(np.real(np.trace(p2 @ evolved)))
    return total


def lgi_value(angles: tuple[float, float], initial: np.ndarray | None = None) -> float:
    """<Q1 Q2> + <Q1 Q3> + <Q2 Q3> for sigma_z measurements on a qubit rotated about y by
    the given angles between the three times. Each correlator is a separate experiment
    measuring only its two times."""
    if initial is None:
        initial = np.array([1.0, 0.0])
    initial = np.asarray(initial, dtype=complex)
    rho = np.outer(initial, initial.conj()) if initial.ndim == 1 else initial
    r12, r23 = _rotation(angles[0]), _rotation(angles[1])
    eye = np.eye(2)
    c12 = _two_time_correlator(rho, eye, r12)
    c13 = _two_time_correlator(rho, eye, r23 @ r12)
    c23 = _two_time_correlator(rho, r12, r23)
    return c12 + c13 + c23


def classical_lgi_values() -> set[int]:
    """Values of Q1Q2 + Q1Q3 + Q2Q3 over all deterministic +-1 assignments."""
    return {q1 * q2 + q1 * q3 + q2 * q3 for q1, q2, q3 in itertools.product((1, -1), repeat=3)}
