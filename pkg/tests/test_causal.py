import numpy as np
import pytest
from conftest import markov_product, random_classical_model
from hypothesis import given, settings
from hypothesis import strategies as st

from qfound.causal import (
    CausalDag,
    basis_instrument,
    bayes_update_common_cause,
    classical_limit,
    classical_markov_product,
    extract_channels,
    link_out,
    make_model,
    markov_violations,
    model_state,
    predict,
    validate_model,
)
from qfound.core import (
    Channel,
    DenseOperator,
    Dims,
    cj_of_map,
    cj_of_unitary,
    haar_unitary,
    marginal_channel,
    random_density,
)
from qfound.errors import ModelInvalid, NotDecohered, ZeroProbabilityOutcome
from qfound.independence import coherent_copy_channel, incoherent_copy_channel

A = Dims.of(("A", 2))
X = np.array([[0, 1], [1, 0]])
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
COMMON = CausalDag((("A", 2), ("B", 2), ("C", 2)), (("A", "B"), ("A", "C")))


def _common_cause(channel, rho_a=None):
    rho_a = np.eye(2) / 2 if rho_a is None else rho_a
    return make_model(
        COMMON,
        {"A": rho_a, "B": marginal_channel(channel, ["B"]), "C": marginal_channel(channel, ["C"])},
    )


def test_dag_validation():
    with pytest.raises(ModelInvalid):
        CausalDag((("A", 2), ("B", 2)), (("A", "B"), ("B", "A")))
    with pytest.raises(ModelInvalid):
        CausalDag((("A", 2),), (("A", "Z"),))
    dag = CausalDag((("C", 2), ("A", 2), ("B", 2)), (("A", "C"), ("B", "C")))
    assert dag.topological_order() == ["A", "B", "C"]
    assert dag.full_dims().labels == ["A", "A*", "B", "B*", "C", "C*"]


def test_single_root_born_rule():
    root = Channel.from_matrix(np.diag([0.7, 0.3]), Dims(()), A)
    m = make_model(CausalDag((("A", 2),)), {"A": root})
    p = predict(m, {"A": basis_instrument("A", 2)})
    assert p[("0",)] == pytest.approx(0.7)
    assert p[("1",)] == pytest.approx(0.3)


def test_chain_matches_sequential_born_rule():
    rho = random_density(A, 1).matrix
    dag = CausalDag((("A", 2), ("B", 2)), (("A", "B"),))
    m = make_model(dag, {"A": rho, "B": cj_of_unitary(H, A, Dims.of(("B", 2)))})
    ua, ub = haar_unitary(2, 3), haar_unitary(2, 4)
    probs = predict(m, {"A": basis_instrument("A", 2, ua), "B": basis_instrument("B", 2, ub)})
    for a in range(2):
        pa = np.outer(ua[:, a], ua[:, a].conj())
        after = H @ pa @ rho @ pa @ H.conj().T
        for b in range(2):
            pb = np.outer(ub[:, b], ub[:, b].conj())
            assert probs[(str(a), str(b))] == pytest.approx(np.trace(pb @ after).real, abs=1e-12)


def test_unmeasured_node_defaults_to_identity():
    dag = CausalDag((("A", 2), ("B", 2)), (("A", "B"),))
    m = make_model(dag, {"A": np.diag([0.6, 0.4]), "B": cj_of_unitary(X, A, Dims.of(("B", 2)))})
    p = predict(m, {"B": basis_instrument("B", 2)})
    assert p[("id", "0")] == pytest.approx(0.4)
    assert p[("id", "1")] == pytest.approx(0.6)


def test_common_cause_state_is_product_of_channels():
    m = _common_cause(incoherent_copy_channel())
    assert validate_model(m) == []
    st_ = model_state(m)
    assert markov_violations(st_) == []
    p = predict(st_, {"B": basis_instrument("B", 2), "C": basis_instrument("C", 2)})
    assert p[("id", "0", "0")] == pytest.approx(0.5)
    assert p[("id", "0", "1")] == pytest.approx(0.0, abs=1e-12)


def test_non_commuting_marginals_are_rejected():
    z_dephase = cj_of_map(lambda x: np.diag(np.diag(x)), A, Dims.of(("B", 2)))
    x_dephase = cj_of_map(lambda x: H @ np.diag(np.diag(H @ x @ H)) @ H, A, Dims.of(("C", 2)))
    m = make_model(COMMON, {"A": np.eye(2) / 2, "B": z_dephase, "C": x_dephase})
    issues = validate_model(m)
    assert any("do not commute" in s for s in issues)
    with pytest.raises(ModelInvalid):
        model_state(m)


def test_extract_channels_recovers_inputs():
    m, _, _ = random_classical_model(3, n_nodes=3)
    got = extract_channels(model_state(m))
    for n, ch in m.channels.items():
        assert np.allclose(got[n].cj.matrix, ch.cj.matrix)


def test_linking_out_leaf_and_confounder():
    cnot = np.eye(4)[:, [0, 1, 3, 2]]
    u = cj_of_unitary(cnot, Dims.of(("A", 2), ("D", 2)), Dims.of(("B", 2), ("C", 2)))
    dag = CausalDag((("A", 2), ("D", 2), ("B", 2), ("C", 2)), (("A", "B"), ("D", "B"), ("A", "C"), ("D", "C")))
    m = make_model(
        dag, {"A": np.eye(2) / 2, "D": np.diag([1.0, 0.0]), "B": marginal_channel(u, ["B"]), "C": marginal_channel(u, ["C"])}
    )
    st_ = model_state(m)
    assert markov_violations(st_) == []
    assert markov_violations(link_out(st_, "C")) == []
    assert markov_violations(link_out(st_, "D")) != []


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_classical_limit_factorises(seed):
    m, bases, cpts = random_classical_model(seed)
    dist = classical_limit(m, bases)
    expected = markov_product(m.dag, cpts)
    assert set(dist) == set(expected)
    for k, p in expected.items():
        assert abs(dist[k] - p) <= 1e-12
    assert sum(dist.values()) == pytest.approx(1.0)


def test_classical_markov_product_matches_oracle():
    m, bases, cpts = random_classical_model(11)
    got = classical_markov_product(m, bases)
    for k, p in markov_product(m.dag, cpts).items():
        assert got[k] == pytest.approx(p, abs=1e-12)


def test_classical_limit_of_incoherent_common_cause():
    dist = classical_limit(_common_cause(incoherent_copy_channel()))
    assert dist[(0, 0, 0)] == pytest.approx(0.5)
    assert dist[(1, 1, 1)] == pytest.approx(0.5)
    assert sum(v for k, v in dist.items() if k not in [(0, 0, 0), (1, 1, 1)]) == pytest.approx(0, abs=1e-12)


def test_classical_limit_needs_decohered_channels():
    m = make_model(CausalDag((("A", 2),)), {"A": np.ones((2, 2)) / 2})
    with pytest.raises(NotDecohered):
        classical_limit(m)


def test_bayes_update_incoherent_copy():
    ic = incoherent_copy_channel()
    plus = DenseOperator(A, np.ones((2, 2)) / 2)
    arm = basis_instrument("B", 2).arms[0][1]
    upd = bayes_update_common_cause(plus, marginal_channel(ic, ["B"]), arm, ic)
    assert upd.probability == pytest.approx(0.5)
    assert upd.consistent
    assert np.allclose(upd.state.matrix, np.diag([1.0, 0.0]))


def test_bayes_update_coherent_copy_is_inconsistent():
    co = coherent_copy_channel()
    plus = DenseOperator(A, np.ones((2, 2)) / 2)
    arm = basis_instrument("B", 2, H).arms[0][1]
    upd = bayes_update_common_cause(plus, marginal_channel(co, ["B"]), arm, co)
    assert upd.state is None
    assert upd.consistent is False
    assert np.allclose(upd.collapsed_marginal.matrix, np.ones((2, 2)) / 2)
    assert upd.residual == pytest.approx(0.5)


def test_bayes_update_zero_probability():
    ic = incoherent_copy_channel()
    zero = DenseOperator(A, np.diag([1.0, 0.0]))
    arm = basis_instrument("B", 2).arms[1][1]
    with pytest.raises(ZeroProbabilityOutcome):
        bayes_update_common_cause(zero, marginal_channel(ic, ["B"]), arm)
