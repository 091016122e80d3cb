"""Quantum causal models on a directed acyclic graph.

Every node X has an input space labelled "X" (where its parents' channel delivers
the system) and an output space labelled "X*" (what it passes on to its
children). The channel at X is a CJ operator on X (x) (parents' output spaces),
which is exactly the Channel convention with the parents as inputs. The model
state is the product of all node channels, each padded with identities.

Instrument arms are given as ordinary CJ operators (output index first) of maps
from a node's input to its output. When linked into the model they enter
transposed, so that the identity map contributes the linking operator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    TOL,
    Channel,
    DenseOperator,
    Dims,
    Instrument,
    apply_channel,
    embed,
    link_operator,
    marginal_channel,
    partial_trace,
    permute,
    trace_distance,
)
from .errors import (
    DimensionMismatch,
    LabelError,
    ModelInvalid,
    NotDecohered,
    ZeroProbabilityOutcome,
)


@dataclass(frozen=True)
class CausalDag:
    nodes: tuple[tuple[str, int], ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        nodes = tuple((str(n), int(d)) for n, d in self.nodes)
        edges = tuple((str(a), str(b)) for a, b in self.edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        labels = [n for n, _ in nodes]
        if len(set(labels)) != len(labels):
            raise ModelInvalid("duplicate node labels")
        if any(lab.endswith("*") for lab in labels):
            raise ModelInvalid("node labels may not end with '*'")
        if len(set(edges)) != len(edges):
            raise ModelInvalid("duplicate edges")
        for a, b in edges:
            if a not in labels or b not in labels:
                raise ModelInvalid(f"edge {a}->{b} has an unknown endpoint")
        self.topological_order()

    @property
    def labels(self) -> list[str]:
        return [n for n, _ in self.nodes]

    def dim(self, label: str) -> int:
        for n, d in self.nodes:
            if n == label:
                return d
        raise LabelError(f"unknown node {label!r}")

    def parents(self, label: str) -> list[str]:
        self.dim(label)
        return [a for a, b in self.edges if b == label]

    def children(self, label: str) -> list[str]:
        self.dim(label)
        return [b for a, b in self.edges if a == label]

    def topological_order(self) -> list[str]:
        """Kahn's algorithm with alphabetical tie-break."""
        indeg = {n: 0 for n in self.labels}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted(n for n, k in indeg.items() if k == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in sorted(b for a, b in self.edges if a == n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != len(self.nodes):
            raise ModelInvalid("graph has a cycle")
        return order

    def full_dims(self) -> Dims:
        """Input and output space of every node, in topological order."""
        facs = []
        for n in self.topological_order():
            d = self.dim(n)
            facs += [(n, d), (n + "*", d)]
        return Dims(tuple(facs))

    def without(self, label: str) -> "CausalDag":
        self.dim(label)
        return CausalDag(
            tuple(f for f in self.nodes if f[0] != label),
            tuple(e for e in self.edges if label not in e),
        )


def node_channel_dims(dag: CausalDag, label: str) -> tuple[Dims, Dims]:
    """(input dims, output dims) of the channel at a node."""
    parents = sorted(dag.parents(label))
    return Dims(tuple((p, dag.dim(p)) for p in parents)), Dims.of((label, dag.dim(label)))


@dataclass
class QuantumCausalModel:
    dag: CausalDag
    channels: dict[str, Channel]


@dataclass
class ModelState:
    sigma: DenseOperator
    dag: CausalDag


def make_model(dag: CausalDag, channels: Mapping[str, Channel | np.ndarray]) -> QuantumCausalModel:
    """Build a model, accepting raw CJ matrices and relabelling channels to the node layout."""
    out = {}
    for n in dag.labels:
        if n not in channels:
            raise ModelInvalid(f"node {n!r} has no channel")
        in_dims, out_dims = node_channel_dims(dag, n)
        ch = channels[n]
        mat = ch.cj.matrix if isinstance(ch, Channel) else np.asarray(ch, dtype=complex)
        if isinstance(ch, Channel) and ch.input_dims.labels != in_dims.labels:
            # reorder inputs to sorted parent order when labels match parents
            if sorted(ch.input_dims.labels) == in_dims.labels:
                mat = permute(ch.cj, [n_ for n_ in ch.output_dims.labels] + in_dims.dual().labels).matrix
        if mat.shape != (out_dims.total * in_dims.total,) * 2:
            raise DimensionMismatch(f"channel at {n!r} has shape {mat.shape}")
        out[n] = Channel.from_matrix(mat, in_dims, out_dims)
    return QuantumCausalModel(dag, out)


def _embedded(m: QuantumCausalModel) -> dict[str, np.ndarray]:
    full = m.dag.full_dims()
    return {n: embed(m.channels[n].cj, full).matrix for n in m.dag.topological_order()}


def validate_model(m: QuantumCausalModel, tol: float | None = None) -> list[str]:
    """Problems that stop the model from satisfying the quantum Markov condition."""
    tol = TOL.algebraic if tol is None else tol
    issues = []
    for n in m.dag.labels:
        ch = m.channels.get(n)
        if ch is None:
            issues.append(f"node {n}: missing channel")
            continue
        in_dims, out_dims = node_channel_dims(m.dag, n)
        if ch.input_dims != in_dims or ch.output_dims != out_dims:
            issues.append(f"node {n}: channel dims do not match the graph")
            continue
        issues += [f"node {n}: {v}" for v in ch.violations(tol)]
    if issues:
        return issues
    emb = _embedded(m)
    order = m.dag.topological_order()
    for i, a in enumerate(order):
        for b in order[i + 1 :]:
            c = np.linalg.norm(emb[a] @ emb[b] - emb[b] @ emb[a])
            if c > tol:
                issues.append(f"channels at {a} and {b} do not commute (norm {c:.3e})")
    return issues


def model_state(m: QuantumCausalModel, tol: float | None = None) -> ModelState:
    issues = validate_model(m, tol)
    if issues:
        raise ModelInvalid("; ".join(issues))
    full = m.dag.full_dims()
    sigma = np.eye(full.total, dtype=complex)
    for mat in _embedded(m).values():
        sigma = sigma @ mat
    return ModelState(DenseOperator(full, sigma), m.dag)


# ---------------------------------------------------------------- instruments


def identity_instrument(label: str, d: int) -> Instrument:
    v = np.eye(d).reshape(-1)
    return Instrument(Dims.of((label, d)), (("id", np.outer(v, v)),))


def basis_instrument(label: str, d: int, basis: np.ndarray | None = None, outcomes=None) -> Instrument:
    """Projective measurement with Lueders update in the columns of basis."""
    basis = np.eye(d) if basis is None else np.asarray(basis, dtype=complex)
    outcomes = [str(k) for k in range(d)] if outcomes is None else list(outcomes)
    arms = []
    for k in range(d):
        proj = np.outer(basis[:, k], basis[:, k].conj())
        v = proj.reshape(-1)
        arms.append((outcomes[k], np.outer(v, v.conj())))
    return Instrument(Dims.of((label, d)), tuple(arms))


def _linked_arm(arm: np.ndarray, node: str, d: int) -> DenseOperator:
    """Arm transposed and laid out on (node input, node output)."""
    t = arm.T.reshape(d, d, d, d)  # rows (out, in), cols (out, in)
    t = t.transpose(1, 0, 3, 2).reshape(d * d, d * d)
    return DenseOperator(Dims.of((node, d), (node + "*", d)), t)


def predict(
    m: QuantumCausalModel | ModelState, instruments: Mapping[str, Instrument] | None = None
) -> dict[tuple[str, ...], float]:
    """Joint outcome distribution, keyed by outcome labels in topological node order.
    Nodes without an instrument get the identity ("id")."""
    st = m if isinstance(m, ModelState) else model_state(m)
    dag = st.dag
    instruments = dict(instruments or {})
    order = dag.topological_order()
    arms_per_node = []
    for n in order:
        d = dag.dim(n)
        inst = instruments.get(n, identity_instrument(n, d))
        if inst.dims.total != d:
            raise DimensionMismatch(f"instrument at {n} has dimension {inst.dims.total}, node has {d}")
        arms_per_node.append([(lab, _linked_arm(a, n, d)) for lab, a in inst.arms])
    sig_t = st.sigma.matrix.T
    probs = {}
    for combo in itertools.product(*arms_per_node):
        tau = np.eye(1)
        for _, arm in combo:
            tau = np.kron(tau, arm.matrix)
        probs[tuple(lab for lab, _ in combo)] = float(np.real(np.sum(sig_t * tau)))
    return probs


def link_out(s: ModelState, node: str) -> ModelState:
    """Ln_X sigma = Tr_{X, X*}(sigma tau_id) on the model with the node removed."""
    d = s.dag.dim(node)
    tau = embed(link_operator(Dims.of((node, d)), [node]), s.sigma.dims)
    prod = DenseOperator(s.sigma.dims, s.sigma.matrix @ tau.matrix)
    keep = [lab for lab in s.sigma.dims.labels if lab not in (node, node + "*")]
    if not keep:
        return ModelState(DenseOperator(Dims(()), np.array([[prod.trace()]])), s.dag.without(node))
    return ModelState(partial_trace(prod, keep), s.dag.without(node))


def extract_channels(s: ModelState) -> dict[str, Channel]:
    """Per-node channels re-derived from a model state, assuming the Markov condition."""
    dag = s.dag
    out = {}
    for n in dag.labels:
        pa = sorted(dag.parents(n))
        keep = [n] + [p + "*" for p in pa]
        traced_outs = [m for m in dag.labels if m not in pa]
        norm = float(np.prod([dag.dim(m) for m in traced_outs]))
        red = partial_trace(s.sigma, keep)
        red = permute(red, keep)
        in_dims, out_dims = node_channel_dims(dag, n)
        out[n] = Channel.from_matrix(red.matrix / norm, in_dims, out_dims)
    return out


def markov_violations(s: ModelState, tol: float | None = None) -> list[str]:
    """Empty when sigma is the commuting product of valid channels for its graph."""
    tol = TOL.algebraic if tol is None else tol
    chans = extract_channels(s)
    m = QuantumCausalModel(s.dag, chans)
    issues = validate_model(m, tol)
    if issues:
        return issues
    rebuilt = model_state(m, tol).sigma.matrix
    res = np.linalg.norm(rebuilt - s.sigma.matrix)
    if res > tol * max(1.0, np.linalg.norm(s.sigma.matrix)):
        issues.append(f"product of re-derived channels differs from sigma (residual {res:.3e})")
    return issues


# ---------------------------------------------------------------- classical limit


def classical_limit(
    m: QuantumCausalModel, bases: Mapping[str, np.ndarray] | None = None, tol: float | None = None
) -> dict[tuple[int, ...], float]:
    """Joint distribution over node values (topological order) from the diagonal of
    Tr_in(sigma tau_id ...). Requires every channel to be diagonal in the given bases."""
    tol = TOL.algebraic if tol is None else tol
    dag = m.dag
    bases = dict(bases or {})
    u = {n: np.asarray(bases.get(n, np.eye(dag.dim(n))), dtype=complex) for n in dag.labels}
    for n in dag.labels:
        pa = sorted(dag.parents(n))
        rot = u[n]
        for p in pa:
            rot = np.kron(rot, u[p].conj())
        cj = rot.conj().T @ m.channels[n].cj.matrix @ rot
        off = np.linalg.norm(cj - np.diag(np.diag(cj)))
        if off > tol:
            raise NotDecohered(f"channel at {n} has off-diagonal norm {off:.3e} in the given bases")
    st = model_state(m, tol)
    full = st.sigma.dims
    links = np.eye(1)
    order = dag.topological_order()
    for n in order:
        links = np.kron(links, link_operator(Dims.of((n, dag.dim(n)))).matrix)
    prod = DenseOperator(full, st.sigma.matrix @ links)
    varsigma = partial_trace(prod, [n + "*" for n in order]).matrix
    rot = np.eye(1)
    for n in order:
        rot = np.kron(rot, u[n].conj())
    diag = np.real(np.diag(rot.conj().T @ varsigma @ rot))
    shape = [dag.dim(n) for n in order]
    return {tuple(int(i) for i in idx): float(diag[k]) for k, idx in enumerate(np.ndindex(*shape))}


def classical_markov_product(
    m: QuantumCausalModel, bases: Mapping[str, np.ndarray] | None = None
) -> dict[tuple[int, ...], float]:
    """prod_i P(x_i | pa_i) read off the diagonals of the rotated channels."""
    dag = m.dag
    bases = dict(bases or {})
    u = {n: np.asarray(bases.get(n, np.eye(dag.dim(n))), dtype=complex) for n in dag.labels}
    order = dag.topological_order()
    cond = {}
    for n in order:
        pa = sorted(dag.parents(n))
        rot = u[n]
        for p in pa:
            rot = np.kron(rot, u[p].conj())
        diag = np.real(np.diag(rot.conj().T @ m.channels[n].cj.matrix @ rot))
        cond[n] = (pa, diag.reshape([dag.dim(n)] + [dag.dim(p) for p in pa]))
    out = {}
    for idx in np.ndindex(*[dag.dim(n) for n in order]):
        val = dict(zip(order, idx))
        p = 1.0
        for n in order:
            pa, table = cond[n]
            p *= table[(val[n],) + tuple(val[q] for q in pa)]
        out[tuple(int(i) for i in idx)] = float(p)
    return out


# ---------------------------------------------------------------- common-cause updating


@dataclass
class BayesUpdate:
    """Updated state at the common cause. state is None when the outcome cannot be
    explained by any input state (checked only when the joint channel is supplied)."""

    state: DenseOperator | None
    probability: float
    consistent: bool | None = None
    residual: float | None = None
    collapsed_marginal: DenseOperator | None = None
    predicted_marginal: DenseOperator | None = None
    notes: list[str] = field(default_factory=list)


def effect_operator(ch: Channel, effect_out: np.ndarray) -> np.ndarray:
    """Heisenberg-picture image of an effect on the output: E^dagger(M) on the input."""
    n_out, n_in = ch.output_dims.total, ch.input_dims.total
    t = ch.cj.matrix.reshape(n_out, n_in, n_out, n_in)
    return np.einsum("ba,aibj->ji", effect_out, t)


def _apply_arm(arm: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return np.einsum("aibj,ij->ab", arm.reshape(d, d, d, d), rho)


def bayes_update_common_cause(
    rho_a: DenseOperator,
    ch_b: Channel,
    outcome_arm: np.ndarray,
    ch_bc: Channel | None = None,
    part_c: Sequence[str] | None = None,
    tol: float | None = None,
) -> BayesUpdate:
    """Retrodict the outcome of an instrument arm at B onto the common cause A.

    The updated state is sqrt(E) rho_A sqrt(E) / Tr(rho_A E) with E the effect on A of
    the outcome pulled back through the channel to B. When the joint channel to B and C
    is given, the updated state is pushed forward to C and compared with the marginal
    obtained by collapsing the joint output directly.
    """
    tol = TOL.algebraic if tol is None else tol
    d_b = ch_b.output_dims.total
    arm = np.asarray(outcome_arm, dtype=complex)
    if arm.shape != (d_b * d_b, d_b * d_b):
        raise DimensionMismatch("outcome arm does not act on the B output")
    m_b = np.einsum("aiaj->ji", arm.reshape(d_b, d_b, d_b, d_b))
    effect = effect_operator(ch_b, m_b)
    effect = (effect + effect.conj().T) / 2
    prob = float(np.real(np.trace(rho_a.matrix @ effect)))
    if prob <= tol:
        raise ZeroProbabilityOutcome(f"outcome probability {prob:.3e}")
    w, v = np.linalg.eigh(effect)
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    new = root @ rho_a.matrix @ root / prob
    upd = BayesUpdate(DenseOperator(rho_a.dims, new), prob)
    if ch_bc is None:
        return upd
    part_c = list(part_c) if part_c is not None else [lab for lab in ch_bc.output_dims.labels if lab not in ch_b.output_dims.labels]
    part_b = [lab for lab in ch_bc.output_dims.labels if lab not in part_c]
    joint = permute(apply_channel(ch_bc, rho_a), part_b + part_c)
    dc = int(np.prod([ch_bc.output_dims.size_of(lab) for lab in part_c]))
    t = joint.matrix.reshape(d_b, dc, d_b, dc)
    # apply the arm on B, then trace B
    collapsed = np.einsum("aiaj,icjd->cd", arm.reshape(d_b, d_b, d_b, d_b), t)
    collapsed = collapsed / np.trace(collapsed)
    c_dims = Dims(tuple((lab, ch_bc.output_dims.size_of(lab)) for lab in part_c))
    predicted = apply_channel(marginal_channel(ch_bc, part_c), upd.state).matrix
    upd.collapsed_marginal = DenseOperator(c_dims, collapsed)
    upd.predicted_marginal = DenseOperator(c_dims, predicted)
    upd.residual = trace_distance(upd.collapsed_marginal, upd.predicted_marginal)
    upd.consistent = upd.residual <= max(tol, 1e-9)
    if not upd.consistent:
        upd.notes.append("no input state at A reproduces the collapsed marginal via this update")
        upd.state = None
    return upd
