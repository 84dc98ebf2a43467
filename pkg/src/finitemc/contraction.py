"""Preasymptotic convergence: geometric bounds, coarse Ricci curvature, minorization and drift."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DegenerateCurve, DriftFailure, InvalidCertificate, NoContraction, NoOverlap
from .kernel import Dist, Kernel, stationary
from .metrics import DistanceFn, wasserstein1
from .estimators import exact_estimator_mean

CERT_TOL = 1e-12
N_BURN = 5
FIT_FLOOR = 1e-8


@dataclass(frozen=True)
class GeometricBound:
    """``TV(T^N delta_x, pi) <= b * r**N``; ``b`` may be a per-state array."""

    b: object
    r: float
    uniform: bool = True

    def __post_init__(self):
        if not 0.0 <= self.r < 1.0:
            raise ValueError(f"geometric rate must lie in [0, 1), got {self.r!r}")
        if np.any(np.asarray(self.b) < 0):
            raise ValueError("geometric constant must be nonnegative")

    def at(self, x=None) -> float:
        b = np.asarray(self.b, dtype=float)
        return float(b) if b.ndim == 0 else float(b[x])


@dataclass(frozen=True)
class MinorizationCertificate:
    small_set: frozenset
    M: int
    eps: float
    nu: Dist

    def check(self, k: Kernel, tol=CERT_TOL) -> bool:
        P = np.linalg.matrix_power(k.T, self.M)
        rows = P[sorted(self.small_set)]
        return bool(0 < self.eps <= 1 and np.all(rows >= self.eps * self.nu.p - tol))


@dataclass(frozen=True)
class DriftCertificate:
    V: np.ndarray
    lam: float
    b: float
    small_set: frozenset

    def check(self, k: Kernel, tol=CERT_TOL) -> bool:
        """Re-validate ``(T V)(x) <= lam V(x) + b 1_C(x)`` at every state, plus the small-set conditions."""
        V = np.asarray(self.V, dtype=float)
        TV = k.T @ V
        ind = np.zeros(k.n)
        ind[sorted(self.small_set)] = 1.0
        ok = all(TV[x] <= self.lam * V[x] + self.b * ind[x] + tol for x in range(k.n))
        in_c = V[sorted(self.small_set)].min() == V.min()
        return bool(ok and in_c and 0 < self.lam < 1 and self.b >= 0)


def coarse_ricci(k: Kernel, g: DistanceFn, x, y) -> float:
    """``1 - W1(T[x], T[y]) / g(x, y)``."""
    x, y = k.space.index(x), k.space.index(y)
    if x == y:
        raise ValueError("coarse Ricci curvature needs two distinct states")
    w, _ = wasserstein1(Dist(k.space, k.T[x]), Dist(k.space, k.T[y]), g)
    return float(1.0 - w / g.g[x, y])


def ricci_lower_bound(k: Kernel, g: DistanceFn) -> float:
    """Minimum coarse Ricci curvature over all ordered pairs of distinct states."""
    if k.n < 2:
        raise ValueError("need at least two states")
    # W1 is symmetric in its arguments, so unordered pairs cover the ordered minimum.
    return min(coarse_ricci(k, g, x, y) for x in range(k.n) for y in range(x + 1, k.n))


def wasserstein_contraction_bound(k: Kernel, g: DistanceFn, x, N: int, kappa: Optional[float] = None, pi: Optional[Dist] = None):
    """Return ``(bound, actual)`` with ``bound = (1 - kappa)**N E_pi[g(x, .)]``
    and ``actual = W1(T^N delta_x, pi)``.
    """
    if kappa is None:
        kappa = ricci_lower_bound(k, g)
    if kappa <= 0:
        raise NoContraction(f"Ricci lower bound {kappa!r} gives no contraction")
    x = k.space.index(x)
    if pi is None:
        pi = stationary(k)
    bound = (1.0 - kappa) ** N * float(pi.p @ g.g[x])
    p = Dist.delta(k.space, x).p
    for _ in range(N):
        p = p @ k.T
    actual, _ = wasserstein1(Dist(k.space, p / p.sum(), tol=1e-10), pi, g)
    return bound, actual


def verify_minorization(k: Kernel, C: Iterable, M: int = 1) -> MinorizationCertificate:
    """Largest ``eps`` and ``nu`` with ``T^M[x] >= eps * nu`` for every ``x`` in ``C``.

    ``eps`` is the mass of the columnwise minimum envelope over ``C``.
    """
    idx = sorted(set(k.space.indices(C)))
    if not idx:
        raise ValueError("small set must be nonempty")
    if M < 1:
        raise ValueError("lag M must be positive")
    P = np.linalg.matrix_power(k.T, M)
    envelope = P[idx].min(axis=0)
    eps = float(envelope.sum())
    if eps <= 0:
        raise NoOverlap(f"rows of T^{M} over the small set have disjoint supports")
    eps = min(eps, 1.0)
    nu = Dist(k.space, envelope / envelope.sum(), tol=1e-10)
    return MinorizationCertificate(frozenset(idx), M, eps, nu)


def verify_drift(k: Kernel, V, C: Iterable) -> DriftCertificate:
    """Tightest drift certificate ``(T V)(x) <= lam V(x) + b 1_C(x)`` for given ``V`` and ``C``.

    ``lam`` is the worst ratio ``(T V)(x) / V(x)`` outside ``C``; ``b`` absorbs
    the remainder inside ``C``. With ``C`` the whole space ``lam`` is
    unconstrained and set to 0.5 by convention.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (k.n,):
        raise ValueError("drift function needs one value per state")
    if np.any(V < 1):
        raise ValueError("drift function must be >= 1 everywhere")
    idx = sorted(set(k.space.indices(C)))
    if not idx:
        raise ValueError("small set must be nonempty")
    inside = np.zeros(k.n, dtype=bool)
    inside[idx] = True
    TV = k.T @ V
    lam = float(np.max(TV[~inside] / V[~inside])) if (~inside).any() else 0.5
    if lam >= 1:
        worst = int(np.flatnonzero(~inside)[np.argmax(TV[~inside] / V[~inside])])
        raise DriftFailure(f"no contraction outside the small set: ratio {lam!r} at state {worst}")
    if V[inside].min() != V.min():
        raise DriftFailure("drift function minimum is not attained inside the small set")
    b = max(float(np.max(TV[inside] - lam * V[inside])), 0.0)
    cert = DriftCertificate(V, lam, b, frozenset(idx))
    if not cert.check(k):
        raise InvalidCertificate("drift certificate failed re-validation")
    return cert


def tv_curve(k: Kernel, N_max: int, x=None, pi: Optional[Dist] = None):
    """``[(N, TV(T^N delta_x, pi))]`` for ``N = 0..N_max``; the sup over ``x`` when ``x`` is None."""
    if pi is None:
        pi = stationary(k)
    if x is None:
        P = np.eye(k.n)
    else:
        P = np.eye(k.n)[[k.space.index(x)]]
    out = []
    for N in range(N_max + 1):
        out.append((N, float(0.5 * np.abs(P - pi.p).sum(axis=1).max())))
        P = P @ k.T
    return out


def wasserstein_curve(k: Kernel, g: DistanceFn, N_max: int, pi: Optional[Dist] = None):
    """``[(N, max_x W1(T^N delta_x, pi))]`` for ``N = 0..N_max``."""
    if pi is None:
        pi = stationary(k)
    P = np.eye(k.n)
    out = []
    for N in range(N_max + 1):
        w = max(wasserstein1(Dist(k.space, row / row.sum(), tol=1e-10), pi, g)[0] for row in P)
        out.append((N, float(w)))
        P = P @ k.T
    return out


def geometric_fit(curve, n_burn: int = N_BURN, floor: float = FIT_FLOOR) -> GeometricBound:
    """Least-squares fit of ``log TV(N) = log b + N log r`` over the tail of a TV curve.

    The window starts at ``N >= n_burn`` and ends before the first value at or
    below ``floor`` (round-off dominates there).
    """
    pts = []
    for N, value in curve:
        if N < n_burn:
            continue
        if value <= floor:
            break
        pts.append((N, value))
    if len(pts) < 2:
        raise DegenerateCurve("fewer than two usable points after burn-in; chain reached stationarity")
    Ns = np.array([p[0] for p in pts], dtype=float)
    logs = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(Ns, logs, 1)
    r = float(np.exp(slope))
    if r >= 1.0:
        raise DegenerateCurve(f"fitted rate {r!r} shows no geometric decay")
    return GeometricBound(b=float(np.exp(intercept)), r=r, uniform=True)


def bias_bound(k: Kernel, f, x, N: int, gb: GeometricBound, pi: Optional[Dist] = None):
    """Return ``(bound, exact_bias)`` for the ergodic average started at ``x``.

    ``bound = range(f) * b / (N + 1) * (1 - r**(N + 1)) / (1 - r)``; the range
    factor converts the TV bound into a bound on expectation differences.
    """
    f = np.asarray(f, dtype=float)
    if pi is None:
        pi = stationary(k)
    xi = k.space.index(x)
    mean = exact_estimator_mean(k, Dist.delta(k.space, xi), f, N)
    exact = abs(mean - pi.expect(f))
    f_range = float(f.max() - f.min())
    r = gb.r
    bound = f_range * gb.at(xi) / (N + 1) * (1.0 - r ** (N + 1)) / (1.0 - r)
    return bound, exact
