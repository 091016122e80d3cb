import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfound.core import Dims, PureState, haar_vector, random_density, trace_distance
from qfound.ctc import (
    builtin_circuits,
    consistency_superoperator,
    dctc_evolve,
    dctc_output,
    hurwitz_moments,
    make_circuit,
    p_operator,
    pctc_evolve,
    random_circuit,
    tctc_distinguishability_bound,
    tctc_evolve,
    tctc_montecarlo_estimate,
)
from qfound.errors import ConvergenceFailure, DimensionMismatch, DynamicalParadox, InvalidOperator, ParameterOutOfRange

UT_RHO_F = np.array(
    [
        [0.5, 0, 0, 0.25],
        [0, 0, 0, 0],
        [0, 0, 0, 0],
        [0.25, 0, 0, 0.5],
    ]
)


def _ket_bra(i, j):
    m = np.zeros((2, 2))
    m[i, j] = 1
    return m


def _gate_sequence_unitary():
    """Three-qubit unitary built gate by gate on (B, M, CV): CNOT CV->B, CNOT B->M, SWAP M,CV."""
    def perm(fn):
        u = np.zeros((8, 8))
        for k in range(8):
            b, m, v = (k >> 2) & 1, (k >> 1) & 1, k & 1
            b, m, v = fn(b, m, v)
            u[(b << 2) | (m << 1) | v, k] = 1
        return u

    g1 = perm(lambda b, m, v: (b ^ v, m, v))
    g2 = perm(lambda b, m, v: (b, m ^ b, v))
    g3 = perm(lambda b, m, v: (b, v, m))
    return g3 @ g2 @ g1


def test_unproved_theorem_unitary_is_the_gate_sequence():
    c = builtin_circuits("unproved_theorem")
    assert np.allclose(c.u.matrix, _gate_sequence_unitary())


def test_unproved_theorem_p_operator():
    expected = (
        np.kron(_ket_bra(0, 0), _ket_bra(0, 0))
        + np.kron(_ket_bra(0, 1), _ket_bra(1, 1))
        + np.kron(_ket_bra(1, 1), _ket_bra(0, 1))
        + np.kron(_ket_bra(1, 0), _ket_bra(1, 0))
    )
    assert np.allclose(p_operator(builtin_circuits("unproved_theorem")).matrix, expected)


def test_unproved_theorem_models():
    c = builtin_circuits("unproved_theorem")
    assert np.abs(tctc_evolve(c).rho_f.matrix - UT_RHO_F).max() <= 1e-10
    bell = np.zeros((4, 4))
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.abs(pctc_evolve(c).matrix - bell).max() <= 1e-12
    sol = dctc_evolve(c)
    assert sol.uniqueness_flag == "family"
    assert np.allclose(sol.tau.matrix, np.eye(2) / 2)
    assert np.allclose(sol.rho_f.matrix, np.diag([0.5, 0, 0, 0.5]))
    assert sol.entropy == pytest.approx(1.0)


def test_unproved_theorem_tctc_weights():
    r = tctc_evolve(builtin_circuits("unproved_theorem"))
    assert r.p_term_weight == pytest.approx(0.5)
    assert r.mix_term_weight == pytest.approx(0.5)


def _bitwise(op, n):
    """kron(op, op) on (B1 M1)(B2 M2) reordered to (B1 B2)(M1 M2)."""
    t = np.kron(op, op).reshape([2] * 8)
    return t.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(n, n)


def test_unproved_theorem_two_bits_is_bitwise():
    c2 = builtin_circuits("unproved_theorem", 2)
    c1 = builtin_circuits("unproved_theorem")
    assert np.allclose(p_operator(c2).matrix, _bitwise(p_operator(c1).matrix, 16))
    # the model is non-linear, so only the D-CTC output (a product of fixed points) factorises
    assert np.allclose(dctc_evolve(c2).rho_f.matrix, _bitwise(np.diag([0.5, 0, 0, 0.5]), 16))
    assert not np.allclose(tctc_evolve(c2).rho_f.matrix, _bitwise(UT_RHO_F, 16))


def test_grandfather_paradox():
    c = builtin_circuits("grandfather")
    with pytest.raises(DynamicalParadox):
        pctc_evolve(c)
    r = tctc_evolve(c)
    assert np.allclose(r.rho_f.matrix, [[1.0]])
    assert r.p_term_weight == pytest.approx(0.0)
    sol = dctc_evolve(c)
    assert np.allclose(sol.tau.matrix, np.eye(2) / 2)


def test_swap_and_identity_builtins():
    swap = builtin_circuits("swap")
    assert np.allclose(p_operator(swap).matrix, np.eye(2))
    sol = dctc_evolve(builtin_circuits("identity"))
    assert np.allclose(sol.tau.matrix, np.eye(2) / 2)
    assert sol.fixed_space_dim == 4
    # the swap circuit sends the input round the loop: tau equals the input state
    rho = random_density(Dims.of(("CR", 2)), 5).matrix
    sol = dctc_evolve(swap.with_input(rho))
    assert sol.uniqueness_flag == "unique"
    assert np.allclose(sol.tau.matrix, rho)
    assert np.allclose(sol.rho_f.matrix, rho)


def test_circuit_validation():
    with pytest.raises(InvalidOperator):
        make_circuit(np.ones((4, 4)), 2, 2)
    with pytest.raises(DimensionMismatch):
        make_circuit(np.eye(4), 2, 3)
    with pytest.raises(KeyError):
        builtin_circuits("nope")
    with pytest.raises(ParameterOutOfRange):
        dctc_evolve(builtin_circuits("swap"), noise=1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(2, 3))
def test_p_operator_norm_bound(seed, d_cr, d_cv):
    c = random_circuit(d_cr, d_cv, seed)
    p = p_operator(c).matrix
    v = haar_vector(d_cr, np.random.default_rng(seed + 1))
    assert np.linalg.norm(p @ v) <= d_cv * np.linalg.norm(v) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(2, 3))
def test_dctc_fixed_point(seed, d_cr, d_cv):
    c = random_circuit(d_cr, d_cv, seed)
    sol = dctc_evolve(c)
    assert sol.fixed_point_residual <= 1e-8
    tau = sol.tau.matrix
    assert np.linalg.eigvalsh(tau).min() >= -1e-10
    assert np.trace(tau).real == pytest.approx(1.0)
    assert np.allclose(sol.rho_f.matrix, dctc_output(c, tau))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_noisy_dctc_is_unique(seed):
    c = random_circuit(2, 3, seed)
    a = dctc_evolve(c, noise=0.05, seed=1).tau
    b = dctc_evolve(c, noise=0.05, seed=2).tau
    assert trace_distance(a, b) <= 1e-7


def test_noisy_dctc_budget():
    with pytest.raises(ConvergenceFailure):
        dctc_evolve(random_circuit(2, 2, 0), noise=0.05, seed=1, max_iter=3)


def test_superoperator_is_trace_preserving():
    c = random_circuit(2, 3, 4)
    s = consistency_superoperator(c)
    eye = np.eye(3).reshape(-1)
    assert np.allclose(eye @ s, eye)


def test_max_entropy_selection_beats_other_fixed_points():
    c = builtin_circuits("unproved_theorem")
    best = dctc_evolve(c).entropy
    for p in (0.1, 0.3):
        tau = np.diag([p, 1 - p])
        s = consistency_superoperator(c)
        assert np.allclose((s @ tau.reshape(-1)).reshape(2, 2), tau)
        w = np.array([p, 1 - p])
        assert -(w * np.log2(w)).sum() < best


def test_montecarlo_matches_closed_form():
    c = builtin_circuits("unproved_theorem")
    est, err = tctc_montecarlo_estimate(c, 20_000, seed=3)
    assert np.abs(est.matrix - UT_RHO_F).max() < 0.02
    assert err.max() < 0.01
    again, _ = tctc_montecarlo_estimate(c, 20_000, seed=3)
    assert np.array_equal(est.matrix, again.matrix)


def test_montecarlo_random_circuit():
    c = random_circuit(2, 2, 8)
    est, err = tctc_montecarlo_estimate(c, 50_000, seed=2)
    exact = tctc_evolve(c).rho_f.matrix
    assert np.abs(est.matrix - exact).max() < 6 * err.max() + 1e-3


def test_hurwitz_moment_ratio():
    s4, s22, ratio = hurwitz_moments(3, 200_000, seed=0)
    assert s4 == pytest.approx(2 / 12, rel=0.03)
    assert s22 == pytest.approx(1 / 12, rel=0.03)
    assert ratio == pytest.approx(2, rel=0.03)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 3), st.integers(2, 3))
def test_distinguishability_bound(seed, d_cr, d_cv):
    rng = np.random.default_rng(seed)
    c = random_circuit(d_cr, d_cv, rng)
    dims = c.cr_dims
    a = PureState(dims, haar_vector(d_cr, rng))
    b = PureState(dims, haar_vector(d_cr, rng))
    lhs, rhs = tctc_distinguishability_bound(c, a, b)
    assert lhs <= rhs + 1e-9
