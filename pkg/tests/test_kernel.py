import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finitemc.errors import NotUnique, SpaceMismatch, ValidationError
from finitemc.kernel import (
    Dist,
    Kernel,
    StateSpace,
    decompose_mixture,
    n_step,
    stationary,
    step,
)

from conftest import BLOCK3, TWO_STATE, random_dist, random_kernel


def test_step_point_mass_selects_row(two_state):
    out = step(two_state, Dist.delta(two_state.space, 0))
    assert np.allclose(out.p, [0.7, 0.3], atol=1e-15)


def test_step_identity_is_noop():
    k = Kernel.from_matrix(np.eye(3))
    rho = Dist(k.space, [0.2, 0.5, 0.3])
    assert np.allclose(step(k, rho).p, rho.p, atol=1e-15)


def test_step_preserves_stationary(two_state):
    rho = Dist(two_state.space, [0.4, 0.6])
    assert np.allclose(step(two_state, rho).p, [0.4, 0.6], atol=1e-15)


def test_step_rejects_space_mismatch(two_state):
    other = Dist(StateSpace(("a", "b")), [0.5, 0.5])
    with pytest.raises(SpaceMismatch):
        step(two_state, other)


def test_n_step_zero_returns_input(two_state):
    rho = Dist(two_state.space, [0.9, 0.1])
    assert n_step(two_state, rho, 0) is rho


def test_n_step_two_steps_by_hand(two_state):
    # 0.7*0.7 + 0.3*0.2 = 0.55
    out = n_step(two_state, Dist.delta(two_state.space, 0), 2)
    assert np.allclose(out.p, [0.55, 0.45], atol=1e-15)


def test_n_step_flip_parity():
    k = Kernel.from_matrix([[0, 1], [1, 0]])
    assert np.array_equal(n_step(k, Dist.delta(k.space, 0), 3).p, [0.0, 1.0])


def test_stationary_two_state_closed_form(two_state):
    a, b = 0.3, 0.2
    pi = stationary(two_state)
    assert np.allclose(pi.p, [b / (a + b), a / (a + b)], atol=1e-15)


def test_stationary_identity_not_unique():
    k = Kernel.from_matrix(np.eye(2))
    with pytest.raises(NotUnique) as info:
        stationary(k)
    assert [b.p.tolist() for b in info.value.basis] == [[1.0, 0.0], [0.0, 1.0]]


def test_stationary_block_diagonal_not_unique():
    k = Kernel.from_matrix(BLOCK3)
    with pytest.raises(NotUnique) as info:
        stationary(k)
    basis = sorted(b.p.tolist() for b in info.value.basis)
    assert np.allclose(basis, [[0, 0.5, 0.5], [1, 0, 0]])


def test_stationary_ignores_transient_states():
    k = Kernel.from_matrix([[1, 0], [0.5, 0.5]])
    assert np.array_equal(stationary(k).p, [1.0, 0.0])


def test_mixture_two_state(two_state):
    mix = decompose_mixture(two_state)
    assert np.allclose(mix.lam, [0.3, 0.2])
    assert np.allclose(mix.continuous_part, [[0, 1], [1, 0]])
    assert np.allclose(mix.reconstruct(), two_state.T, atol=1e-12)


def test_mixture_degenerate_identity():
    mix = decompose_mixture(Kernel.from_matrix(np.eye(2)))
    assert np.array_equal(mix.lam, [1.0, 1.0])
    assert np.array_equal(mix.continuous_part, np.eye(2))


def test_mixture_no_rejection_mass():
    T = [[0, 1], [1, 0]]
    mix = decompose_mixture(Kernel.from_matrix(T))
    assert np.array_equal(mix.lam, [1.0, 1.0])
    assert np.array_equal(mix.continuous_part, T)


def test_mixture_reconstructs_random_rows(rng):
    for _ in range(20):
        k = random_kernel(rng, int(rng.integers(1, 8)), zero_frac=0.3)
        assert np.abs(decompose_mixture(k).reconstruct() - k.T).max() <= 1e-12


def test_validation_rejects_without_renormalizing():
    with pytest.raises(ValidationError, match="row 1"):
        Kernel.from_matrix([[0.5, 0.5], [0.5, 0.4]])
    with pytest.raises(ValidationError):
        Kernel.from_matrix([[1.2, -0.2], [0.5, 0.5]])
    with pytest.raises(ValidationError):
        Dist(StateSpace.of_size(2), [0.5, 0.6])
    with pytest.raises(ValidationError):
        StateSpace(("a", "a"))


def test_values_are_immutable(two_state):
    with pytest.raises(ValueError):
        two_state.T[0, 0] = 0.5


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 8))
def test_n_step_stays_stochastic(seed, n):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, n, zero_frac=0.3)
    rho = random_dist(rng, k.space)
    out = n_step(k, rho, 10**4)
    assert np.all(out.p >= 0) and abs(out.p.sum() - 1) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(0, 30), st.integers(0, 30))
def test_semigroup_law(seed, n, M, N):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, n, zero_frac=0.3)
    rho = random_dist(rng, k.space)
    lhs = n_step(k, n_step(k, rho, M), N)
    rhs = n_step(k, rho, M + N)
    assert np.abs(lhs.p - rhs.p).max() <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8))
def test_stationary_fixed_point(seed, n):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, n, zero_frac=0.4)
    try:
        pi = stationary(k)
    except NotUnique as exc:
        for b in exc.basis:
            assert np.abs(step(k, b).p - b.p).max() <= 1e-10
        return
    assert np.abs(step(k, pi).p - pi.p).max() <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(0, 64))
def test_pushforward_matches_matrix_power(seed, n, N):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, n, zero_frac=0.3)
    # numpy's matrix_power uses repeated squaring, a different evaluation order.
    P = np.linalg.matrix_power(k.T, N)
    for x in range(n):
        assert np.abs(n_step(k, Dist.delta(k.space, x), N).p - P[x]).max() <= 1e-10
