import itertools
import math

import numpy as np

from qfound.causal import CausalDag, make_model
from qfound.core import haar_unitary


def random_classical_model(seed, n_nodes=None, rotate=True):
    """Random DAG whose channels are classical stochastic maps, optionally written in a
    random basis per node. Returns (model, bases, cpts) where cpts[node] has axes
    (value, parent values...) with parents in sorted order."""
    rng = np.random.default_rng(seed)
    n = int(n_nodes or rng.integers(2, 5))
    labels = [f"N{i}" for i in range(n)]
    dims = {lab: int(rng.integers(2, 4)) for lab in labels}
    while np.prod(list(dims.values())) > 16:
        dims[labels[int(rng.integers(n))]] = 2
    edges = [(labels[i], labels[j]) for i, j in itertools.combinations(range(n), 2) if rng.random() < 0.5]
    dag = CausalDag(tuple((lab, dims[lab]) for lab in labels), tuple(edges))
    bases = {lab: haar_unitary(dims[lab], rng) if rotate else np.eye(dims[lab]) for lab in labels}
    channels, cpts = {}, {}
    for lab in labels:
        pa = sorted(dag.parents(lab))
        shape = [dims[lab]] + [dims[p] for p in pa]
        table = rng.dirichlet(np.ones(dims[lab]), size=int(np.prod(shape[1:], dtype=int))).T.reshape(shape)
        cpts[lab] = table
        rot = bases[lab]
        for p in pa:
            rot = np.kron(rot, bases[p].conj())
        channels[lab] = rot @ np.diag(table.reshape(-1)) @ rot.conj().T
    return make_model(dag, channels), bases, cpts


def markov_product(dag, cpts):
    """Joint distribution prod_i P(x_i | pa_i), keyed by values in topological order."""
    order = dag.topological_order()
    out = {}
    for idx in itertools.product(*[range(dag.dim(n)) for n in order]):
        val = dict(zip(order, idx))
        p = 1.0
        for n in order:
            pa = sorted(dag.parents(n))
            p *= cpts[n][(val[n],) + tuple(val[q] for q in pa)]
        out[idx] = p
    return out


def brute_epsilon_overlap(mu, nus, eps):
    """Minimum mu(Omega) over all subsets with every nu's excluded mass strictly below eps
    (for eps = 0: no excluded support at all)."""
    n = len(mu)
    best = math.inf
    for r in range(n + 1):
        for keep in itertools.combinations(range(n), r):
            out = [i for i in range(n) if i not in keep]
            if eps > 0:
                ok = all(nu[out].sum() < eps for nu in nus)
            else:
                ok = all(not np.any(nu[out] > 1e-12) for nu in nus)
            if ok:
                best = min(best, mu[list(keep)].sum())
    return best
