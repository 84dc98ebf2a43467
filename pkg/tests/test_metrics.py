import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finitemc.errors import NonMetricDistance, SpaceMismatch
from finitemc.kernel import Dist, Kernel, StateSpace, n_step
from finitemc.metrics import (
    Coupling,
    DistanceFn,
    FunctionClass,
    coupling_tv_bound,
    ipm,
    kr_dual_check,
    maximal_coupling,
    product_coupling,
    tv,
    wasserstein1,
)

from conftest import random_dist, random_metric

SP2 = StateSpace.of_size(2)
MU = Dist(SP2, [0.7, 0.3])
NU = Dist(SP2, [0.4, 0.6])


def brute_tv(mu, nu):
    n = mu.space.n
    best = 0.0
    for r in range(n + 1):
        for A in itertools.combinations(range(n), r):
            best = max(best, abs(mu.p[list(A)].sum() - nu.p[list(A)].sum()))
    return best


def sinkhorn_coupling(rng, mu, nu, iters=500):
    G = rng.random((mu.space.n, mu.space.n)) ** 3
    G *= np.outer(mu.p > 0, nu.p > 0)
    for _ in range(iters):
        G *= np.divide(mu.p, G.sum(axis=1), out=np.zeros_like(mu.p), where=mu.p > 0)[:, None]
        G *= np.divide(nu.p, G.sum(axis=0), out=np.zeros_like(nu.p), where=nu.p > 0)[None, :]
    # Column sums are exact; refit the left marginal to the achieved row sums.
    return Coupling(Dist(mu.space, G.sum(axis=1), tol=1e-9), nu, G)


def test_ipm_identical_is_zero(rng):
    g = random_metric(rng, SP2)
    for fc in (FunctionClass.bounded_unit(), FunctionClass.bounded_sym(), FunctionClass.lipschitz(g), FunctionClass.vnorm([1, 2])):
        assert ipm(MU, MU, fc) == pytest.approx(0.0, abs=1e-12)


def test_ipm_point_masses():
    assert ipm(Dist.delta(SP2, 0), Dist.delta(SP2, 1), FunctionClass.bounded_unit()) == pytest.approx(1.0, abs=1e-12)


def test_ipm_bounded_unit_matches_vertex_enumeration():
    d = MU.p - NU.p
    brute = max(abs(np.dot(f, d)) for f in itertools.product([0, 1], repeat=2))
    assert brute == pytest.approx(0.3)
    assert ipm(MU, NU, FunctionClass.bounded_unit()) == pytest.approx(brute, abs=1e-12)


def test_ipm_vnorm_closed_form(rng):
    sp = StateSpace.of_size(5)
    for _ in range(20):
        mu, nu = random_dist(rng, sp), random_dist(rng, sp)
        V = 1 + 3 * rng.random(5)
        # |f_i| <= V_i is a box, so the optimum is sum V_i |mu_i - nu_i|.
        assert ipm(mu, nu, FunctionClass.vnorm(V)) == pytest.approx(np.dot(V, np.abs(mu.p - nu.p)), abs=1e-9)


def test_tv_closed_form_examples():
    assert tv(Dist.delta(SP2, 0), Dist.delta(SP2, 1)) == 1.0
    assert tv(MU, NU) == pytest.approx(brute_tv(MU, NU), abs=1e-15)
    assert tv(MU, NU) == pytest.approx(0.3, abs=1e-15)


def test_tv_two_state_decay():
    k = Kernel.from_matrix([[0.7, 0.3], [0.2, 0.8]])
    pi = Dist(k.space, [0.4, 0.6])
    for N in range(0, 20):
        assert tv(n_step(k, Dist.delta(k.space, 0), N), pi) == pytest.approx(0.6 * 0.5**N, abs=1e-15)


def test_tv_rejects_mismatch():
    with pytest.raises(SpaceMismatch):
        tv(MU, Dist(StateSpace(("a", "b")), [0.5, 0.5]))


def test_w1_identical_uses_diagonal(rng):
    sp = StateSpace.of_size(4)
    mu = random_dist(rng, sp)
    w, c = wasserstein1(mu, mu, random_metric(rng, sp))
    assert w == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(c.gamma, np.diag(mu.p), atol=1e-15)


def test_w1_indicator_is_tv(rng):
    sp = StateSpace.of_size(6)
    g = DistanceFn.indicator(sp)
    for _ in range(50):
        mu, nu = random_dist(rng, sp, 0.3), random_dist(rng, sp, 0.3)
        assert wasserstein1(mu, nu, g)[0] == pytest.approx(tv(mu, nu), abs=1e-12)


def test_w1_line_point_masses():
    sp = StateSpace.of_size(3)
    g = DistanceFn(sp, np.abs(np.subtract.outer(np.arange(3), np.arange(3))).astype(float))
    w, c = wasserstein1(Dist.delta(sp, 0), Dist.delta(sp, 2), g)
    assert w == 2.0
    assert c.gamma[0, 2] == 1.0


def test_w1_on_a_line_matches_cdf_formula(rng):
    # On the line with g = |i - j|, W1 is the L1 distance between CDFs.
    sp = StateSpace.of_size(8)
    pos = np.cumsum(rng.random(8) + 0.1)
    g = DistanceFn(sp, np.abs(np.subtract.outer(pos, pos)))
    for _ in range(30):
        mu, nu = random_dist(rng, sp, 0.2), random_dist(rng, sp, 0.2)
        cdf = np.cumsum(mu.p - nu.p)[:-1]
        assert wasserstein1(mu, nu, g)[0] == pytest.approx(np.sum(np.abs(cdf) * np.diff(pos)), abs=1e-12)


def test_kr_identical_and_indicator(rng):
    sp = StateSpace.of_size(5)
    mu = random_dist(rng, sp)
    p, d = kr_dual_check(mu, mu, random_metric(rng, sp))
    assert p == pytest.approx(0.0, abs=1e-12) and d == pytest.approx(0.0, abs=1e-9)
    p, d = kr_dual_check(MU, NU, DistanceFn.indicator(SP2))
    assert p == pytest.approx(0.3, abs=1e-12) and d == pytest.approx(0.3, abs=1e-12)


def test_kr_random_five_state(rng):
    sp = StateSpace.of_size(5)
    for _ in range(10):
        p, d = kr_dual_check(random_dist(rng, sp), random_dist(rng, sp), random_metric(rng, sp))
        assert abs(p - d) <= 1e-8


def test_kr_rejects_non_metric():
    sp = StateSpace.of_size(3)
    g = DistanceFn(sp, [[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    mu, nu = Dist.delta(sp, 0), Dist.delta(sp, 2)
    assert wasserstein1(mu, nu, g)[0] == 5.0
    with pytest.raises(NonMetricDistance):
        kr_dual_check(mu, nu, g)


def test_coupling_bounds_examples():
    assert coupling_tv_bound(maximal_coupling(MU, MU)) == 0.0
    prod = product_coupling(MU, NU)
    assert coupling_tv_bound(prod) == pytest.approx(1 - (0.28 + 0.18), abs=1e-15)
    assert coupling_tv_bound(maximal_coupling(MU, NU)) == pytest.approx(0.3, abs=1e-15)


def test_maximal_coupling_shapes():
    c = maximal_coupling(MU, MU)
    assert np.allclose(c.gamma, np.diag(MU.p))
    c = maximal_coupling(Dist.delta(SP2, 0), Dist.delta(SP2, 1))
    assert np.array_equal(c.gamma, [[0, 1], [0, 0]])


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 8))
def test_tv_metric_axioms(seed, n):
    rng = np.random.default_rng(seed)
    sp = StateSpace.of_size(n)
    a, b, c = (random_dist(rng, sp, 0.2) for _ in range(3))
    assert tv(a, b) == tv(b, a)
    assert tv(a, a) <= 1e-12
    assert tv(a, c) <= tv(a, b) + tv(b, c) + 1e-12


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 12))
def test_ipm_and_closed_form_agree(seed, n):
    rng = np.random.default_rng(seed)
    sp = StateSpace.of_size(n)
    mu, nu = random_dist(rng, sp, 0.2), random_dist(rng, sp, 0.2)
    t = tv(mu, nu)
    assert abs(ipm(mu, nu, FunctionClass.bounded_unit()) - t) <= 1e-9
    assert abs(0.5 * ipm(mu, nu, FunctionClass.bounded_sym()) - t) <= 1e-9
    for lo, hi in [(0, 1), (-1, 1), (3, 7)]:
        assert abs(ipm(mu, nu, FunctionClass.bounded(lo, hi)) / (hi - lo) - t) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(2, 8))
def test_tv_bounded_by_any_coupling(seed, n):
    rng = np.random.default_rng(seed)
    sp = StateSpace.of_size(n)
    mu, nu = random_dist(rng, sp, 0.2), random_dist(rng, sp, 0.2)
    c = sinkhorn_coupling(rng, mu, nu)
    assert tv(mu, nu) <= coupling_tv_bound(c) + 1e-12
    assert coupling_tv_bound(maximal_coupling(mu, nu)) == pytest.approx(tv(mu, nu), abs=1e-12)


def test_five_hundred_random_couplings(rng):
    for _ in range(500):
        sp = StateSpace.of_size(int(rng.integers(2, 8)))
        mu, nu = random_dist(rng, sp, 0.2), random_dist(rng, sp, 0.2)
        c = sinkhorn_coupling(rng, mu, nu, iters=200)
        assert tv(c.left, nu) <= coupling_tv_bound(c) + 1e-12


def test_coupling_rejects_nan():
    from finitemc.errors import ValidationError

    with pytest.raises(ValidationError):
        Coupling(MU, NU, [[np.nan, 0], [0, 1]])
