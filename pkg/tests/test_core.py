import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfound.core import (
    Channel,
    DenseOperator,
    Dims,
    PureState,
    apply_channel,
    cj_of_map,
    cj_of_unitary,
    compose_channels,
    conditional_mutual_information,
    depolarizing_channel,
    embed,
    fidelity,
    haar_sample_pure,
    haar_unitary,
    identity_channel,
    is_density,
    is_unitary,
    kraus_operators,
    operator_from_json,
    operator_to_json,
    partial_trace,
    permute,
    random_channel,
    random_density,
    tensor,
    trace_distance,
    von_neumann_entropy,
)
from qfound.errors import DimensionMismatch, InvalidOperator, LabelError, SchemaError
from qfound.independence import coherent_copy_channel

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def test_dims_basics():
    d = Dims.of(("A", 2), ("B", 3))
    assert d.total == 6
    assert d.labels == ["A", "B"]
    assert d.dual().labels == ["A*", "B*"]
    assert d.select(["B"]).sizes == [3]
    assert Dims(()).total == 1
    with pytest.raises(LabelError):
        d + Dims.of(("A", 2))
    with pytest.raises(LabelError):
        d.index("Z")


def test_operator_shape_checked():
    with pytest.raises(DimensionMismatch):
        DenseOperator(Dims.of(("A", 2)), np.eye(3))
    with pytest.raises(InvalidOperator):
        PureState(Dims.of(("A", 2)), [1, 1])


def test_partial_trace_of_product():
    rng = np.random.default_rng(0)
    a = random_density(Dims.of(("A", 2)), rng)
    b = random_density(Dims.of(("B", 3)), rng)
    ab = tensor(a, b)
    assert np.allclose(partial_trace(ab, ["A"]).matrix, a.matrix)
    assert np.allclose(partial_trace(ab, ["B"]).matrix, b.matrix)


def test_permute_matches_swap():
    rng = np.random.default_rng(1)
    a = random_density(Dims.of(("A", 2)), rng)
    b = random_density(Dims.of(("B", 3)), rng)
    swapped = permute(tensor(a, b), ["B", "A"])
    assert np.allclose(swapped.matrix, np.kron(b.matrix, a.matrix))


def test_embed_places_identity():
    x = DenseOperator(Dims.of(("B", 2)), np.array([[0, 1], [1, 0]]))
    full = Dims.of(("A", 3), ("B", 2))
    assert np.allclose(embed(x, full).matrix, np.kron(np.eye(3), x.matrix))


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 4))
def test_unitary_cj_trace_is_input_dimension(seed, d):
    dims = Dims.of(("A", d))
    ch = cj_of_unitary(haar_unitary(d, seed), dims, Dims.of(("B", d)))
    assert np.isclose(ch.cj.trace().real, d)
    assert ch.is_valid()


def test_coherent_copy_acts_as_isometry():
    alpha, beta = 0.6, 0.8j
    rho = DenseOperator(Dims.of(("A", 2)), np.outer([alpha, beta], np.conj([alpha, beta])))
    out = apply_channel(coherent_copy_channel(), rho).matrix
    v = np.array([alpha, 0, 0, beta])
    assert np.allclose(out, np.outer(v, v.conj()))


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_random_channel_is_cptp(seed, din, dout):
    ch = random_channel(Dims.of(("A", din)), Dims.of(("B", dout)), seed)
    assert ch.is_valid()
    rho = random_density(Dims.of(("A", din)), seed + 1)
    assert is_density(apply_channel(ch, rho))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_kraus_round_trip(seed):
    dims = Dims.of(("A", 2))
    ch = random_channel(dims, Dims.of(("B", 3)), seed)
    ks = kraus_operators(ch)
    assert np.allclose(sum(k.conj().T @ k for k in ks), np.eye(2))
    rho = random_density(dims, seed)
    direct = sum(k @ rho.matrix @ k.conj().T for k in ks)
    assert np.allclose(apply_channel(ch, rho).matrix, direct)


def test_compose_with_identity():
    dims = Dims.of(("A", 2))
    ch = random_channel(dims, dims, 3)
    both = compose_channels(identity_channel(dims), ch)
    assert np.allclose(both.cj.matrix, ch.cj.matrix)


def test_depolarizing_output():
    dims = Dims.of(("A", 2))
    rho = DenseOperator(dims, np.diag([1.0, 0.0]))
    out = apply_channel(depolarizing_channel(dims, 0.5), rho)
    assert np.allclose(out.matrix, np.diag([0.75, 0.25]))


def test_cj_of_map_transpose_is_not_positive():
    dims = Dims.of(("A", 2))
    ch = cj_of_map(lambda x: x.T, dims, dims)
    assert "CJ operator is not positive semidefinite" in ch.violations()


def test_entropy_and_cmi_values():
    assert np.isclose(von_neumann_entropy(np.eye(4) / 4), 2.0)
    assert von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0
    ghz = np.zeros(8)
    ghz[[0, 7]] = 1 / np.sqrt(2)
    rho = DenseOperator(Dims.qubits("A", "B", "C"), np.outer(ghz, ghz))
    assert np.isclose(conditional_mutual_information(rho, ["A"], ["B"]), 1.0)
    assert np.isclose(conditional_mutual_information(rho, ["A"], ["B"], ["C"]), 1.0)
    prod = tensor(random_density(Dims.of(("A", 2)), 1), random_density(Dims.of(("B", 2), ("C", 2)), 2))
    assert abs(conditional_mutual_information(prod, ["A"], ["B"], ["C"])) < 1e-9


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_distance_properties(seed):
    dims = Dims.of(("A", 3))
    r, s = random_density(dims, seed), random_density(dims, seed + 7)
    f = fidelity(r, s)
    t = trace_distance(r, s)
    assert 0 <= t <= 1 + 1e-12
    assert 1 - f <= t + 1e-9
    assert t <= np.sqrt(1 - f**2) + 1e-9
    assert np.isclose(fidelity(r, r), 1.0)


def test_haar_samplers():
    assert is_unitary(haar_unitary(5, 0))
    s = haar_sample_pure(4, seed=2)
    assert np.isclose(np.linalg.norm(s.amplitudes), 1)
    assert np.allclose(haar_unitary(3, 9), haar_unitary(3, 9))


def test_operator_json_round_trip():
    op = random_density(Dims.of(("A", 2), ("B", 2)), 4)
    back = operator_from_json(json.loads(json.dumps(operator_to_json(op))))
    assert back.dims == op.dims
    assert np.allclose(back.matrix, op.matrix)
    with pytest.raises(SchemaError):
        operator_from_json({"dims": [{"label": "A", "d": 2}], "entries": [[1, 0]]})


def test_channel_dims_are_checked():
    with pytest.raises(DimensionMismatch):
        Channel(Dims.of(("A", 2)), Dims.of(("B", 2)), DenseOperator(Dims.of(("B", 2), ("A", 2)), np.eye(4)))
