"""Probability metrics on finite spaces.

Integral probability metrics are solved as linear programs over the test
function vector ``f``; the 1-Wasserstein distance is solved on the primal
side as a transportation problem. The two routes are independent, which is
what makes :func:`kr_dual_check` a meaningful check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from scipy.sparse.csgraph import floyd_warshall

from .errors import DualityGap, NonMetricDistance, SpaceMismatch, UnboundedClass, ValidationError
from .kernel import DERIVED_TOL, Dist, StateSpace, _frozen
from .transport import solve_transport

KR_TOL = 1e-8
_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True, eq=False)
class DistanceFn:
    """Symmetric ground distance with zero diagonal and positive off-diagonal."""

    space: StateSpace
    g: np.ndarray

    def __post_init__(self):
        g = _frozen(self.g)
        n = self.space.n
        if g.shape != (n, n):
            raise ValidationError(f"distance matrix has shape {g.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(g)):
            raise ValidationError("distance entries must be finite")
        if not np.array_equal(g, g.T):
            i, j = np.argwhere(g != g.T)[0]
            raise ValidationError(f"distance is not symmetric at ({i}, {j})")
        if np.any(np.diag(g) != 0):
            raise ValidationError("distance must vanish on the diagonal")
        off = ~np.eye(n, dtype=bool)
        if np.any(g[off] <= 0):
            raise ValidationError("distance between distinct states must be positive")
        object.__setattr__(self, "g", g)

    @classmethod
    def indicator(cls, space: StateSpace) -> "DistanceFn":
        """The 0/1 distance whose Wasserstein metric is total variation."""
        return cls(space, 1.0 - np.eye(space.n))

    def is_metric(self, tol=1e-12) -> bool:
        g = self.g
        # g[i, k] <= g[i, j] + g[j, k] for all triples
        return bool(np.all(g[:, None, :] <= g[:, :, None] + g[None, :, :] + tol))


def metric_closure(g) -> np.ndarray:
    """Shortest-path completion of a positive symmetric matrix, which satisfies the triangle inequality."""
    g = np.asarray(g, dtype=float)
    return floyd_warshall(g, directed=False)


@dataclass(frozen=True, eq=False)
class Coupling:
    left: Dist
    right: Dist
    gamma: np.ndarray

    def __post_init__(self):
        gamma = _frozen(self.gamma)
        if gamma.shape != (self.left.space.n, self.right.space.n) or not np.all(np.isfinite(gamma)):
            raise ValidationError("coupling must be a finite matrix over the two spaces")
        if np.any(gamma < 0):
            raise ValidationError("coupling entries must be nonnegative")
        if np.abs(gamma.sum(axis=1) - self.left.p).max() > DERIVED_TOL:
            raise ValidationError("coupling row sums do not match the left marginal")
        if np.abs(gamma.sum(axis=0) - self.right.p).max() > DERIVED_TOL:
            raise ValidationError("coupling column sums do not match the right marginal")
        object.__setattr__(self, "gamma", gamma)


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Constraint set for the test functions of an integral probability metric.

    ``kind`` is one of ``"bounded"`` (``lo <= f <= hi``), ``"lipschitz"``
    (``|f_i - f_j| <= g_ij``) or ``"vnorm"`` (``|f_i| <= V_i``).
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    distance: Optional[DistanceFn] = None
    V: Optional[np.ndarray] = field(default=None)

    @classmethod
    def bounded_unit(cls):
        return cls("bounded", 0.0, 1.0)

    @classmethod
    def bounded_sym(cls):
        return cls("bounded", -1.0, 1.0)

    @classmethod
    def bounded(cls, lo, hi):
        if not hi > lo:
            raise ValueError("need hi > lo")
        return cls("bounded", float(lo), float(hi))

    @classmethod
    def lipschitz(cls, g: DistanceFn):
        return cls("lipschitz", distance=g)

    @classmethod
    def vnorm(cls, V):
        V = np.asarray(V, dtype=float)
        if np.any(V < 1):
            raise ValidationError("V-norm weights must be >= 1")
        return cls("vnorm", V=V)


def _check_pair(mu: Dist, nu: Dist):
    if mu.space != nu.space:
        raise SpaceMismatch("distributions live on different state spaces")


def _maximize(c, bounds, A_ub=None, b_ub=None):
    res = linprog(-c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", options=_HIGHS)
    if res.status == 3:
        raise UnboundedClass("test function class admits an unbounded objective")
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    return -res.fun, res.x


def ipm_witness(mu: Dist, nu: Dist, fc: FunctionClass):
    """Solve the IPM linear program; return ``(value, f)`` with ``f`` an optimal test function."""
    _check_pair(mu, nu)
    d = mu.p - nu.p
    n = len(d)
    if fc.kind == "bounded":
        best = (-np.inf, None)
        for sign in (1.0, -1.0):
            val, f = _maximize(sign * d, [(fc.lo, fc.hi)] * n)
            if val > best[0]:
                best = (val, f)
        return max(best[0], 0.0), best[1]
    if fc.kind == "vnorm":
        V = fc.V
        if V is None or V.shape != (n,):
            raise ValidationError("V-norm class needs one weight per state")
        val, f = _maximize(d, [(-v, v) for v in V])
        return max(val, 0.0), f
    if fc.kind == "lipschitz":
        g = fc.distance
        if g is None or g.space != mu.space:
            raise SpaceMismatch("Lipschitz class needs a distance on the same space")
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        A = np.zeros((len(pairs), n))
        rhs = np.empty(len(pairs))
        for r, (i, j) in enumerate(pairs):
            A[r, i] = 1.0
            A[r, j] = -1.0
            rhs[r] = g.g[i, j]
        # Shift invariance (sum d = 0) lets f_0 be pinned, which bounds the LP.
        bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
        if n == 1:
            return 0.0, np.zeros(1)
        val, f = _maximize(d, bounds, A, rhs)
        return max(val, 0.0), f
    raise UnboundedClass(f"unknown function class {fc.kind!r}")


def ipm(mu: Dist, nu: Dist, fc: FunctionClass) -> float:
    """``sup_{f in fc} |E_mu[f] - E_nu[f]|`` by exact linear programming."""
    return ipm_witness(mu, nu, fc)[0]


def tv(mu: Dist, nu: Dist) -> float:
    """Total variation distance ``sup_A |mu(A) - nu(A)| = 0.5 * ||mu - nu||_1``."""
    _check_pair(mu, nu)
    return 0.5 * float(np.abs(mu.p - nu.p).sum())


def wasserstein1(mu: Dist, nu: Dist, g: DistanceFn):
    """Optimal transport cost and an optimal coupling for ground distance ``g``."""
    _check_pair(mu, nu)
    if g.space != mu.space:
        raise SpaceMismatch("distance lives on a different state space")
    sol = solve_transport(mu.p, nu.p, g.g)
    return sol.cost, Coupling(mu, nu, sol.plan)


def kr_dual_check(mu: Dist, nu: Dist, g: DistanceFn, tol=KR_TOL):
    """Return ``(primal, dual)``: transport optimum and Lipschitz-IPM optimum.

    Raises
    ------
    NonMetricDistance
        If ``g`` violates the triangle inequality (duality need not hold).
    DualityGap
        If the two optima differ by more than ``tol``.
    """
    if not g.is_metric():
        raise NonMetricDistance("Kantorovich-Rubinstein duality requires a metric ground distance")
    primal, _ = wasserstein1(mu, nu, g)
    dual = ipm(mu, nu, FunctionClass.lipschitz(g))
    if abs(primal - dual) > tol:
        raise DualityGap(f"primal {primal!r} and dual {dual!r} differ by {abs(primal - dual):.3e}")
    return primal, dual


def coupling_tv_bound(c: Coupling) -> float:
    """Mass ``gamma(D^c)`` off the diagonal, an upper bound on ``tv(left, right)``."""
    gamma = c.gamma
    return float(gamma[~np.eye(len(gamma), dtype=bool)].sum())


def product_coupling(mu: Dist, nu: Dist) -> Coupling:
    return Coupling(mu, nu, np.outer(mu.p, nu.p))


def maximal_coupling(mu: Dist, nu: Dist) -> Coupling:
    """Coupling that keeps ``min(mu, nu)`` on the diagonal; its off-diagonal mass equals TV."""
    _check_pair(mu, nu)
    common = np.minimum(mu.p, nu.p)
    excess = mu.p - common
    deficit = nu.p - common
    mass = excess.sum()
    gamma = np.diag(common)
    if mass > 0:
        gamma = gamma + np.outer(excess, deficit) / mass
    return Coupling(mu, nu, gamma)
