"""Markov chain Monte Carlo estimators and their error quantification.

Chains are simulated by inverse-CDF sampling from a Philox stream keyed by
``(seed, replicate)``: the initial state consumes the first uniform and each
transition one more, so a batch of replicates simulated in lockstep is
identical to simulating each replicate on its own.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateVariance, SpaceMismatch
from .kernel import Dist, Kernel, n_step_curve, stationary
from .rng import inverse_cdf_table, make_rng

MIN_CLT_REPLICATES = 1000


@dataclass(frozen=True, eq=False)
class ChainTrace:
    states: np.ndarray
    seed: int
    kernel_id: str = ""
    replicate: int = 0

    def __len__(self):
        return len(self.states)

    @property
    def N(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class EstimatorReport:
    f_hat: float
    autocorr: list
    ess: float
    mcse: float
    var_f_hat_est: float
    variance: float
    n_samples: int


def sample_chain(k: Kernel, rho: Dist, N: int, seed: int, replicate: int = 0, kernel_id: str = "") -> ChainTrace:
    """Realize ``x_0 ~ rho`` followed by ``N`` transitions of ``k``."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if k.space != rho.space:
        raise SpaceMismatch("kernel and initial distribution live on different spaces")
    u = make_rng(seed, replicate).random(N + 1)
    init = inverse_cdf_table(rho.p)[0].tolist()
    rows = [row.tolist() for row in inverse_cdf_table(k.T)]
    states = np.empty(N + 1, dtype=np.int64)
    x = bisect_right(init, u[0])
    states[0] = x
    for n in range(1, N + 1):
        x = bisect_right(rows[x], u[n])
        states[n] = x
    return ChainTrace(states, seed, kernel_id, replicate)


def sample_chains(k: Kernel, rho: Dist, N: int, seed: int, replicates, kernel_id: str = "") -> np.ndarray:
    """States of several replicates, shape ``(len(replicates), N + 1)``, simulated in lockstep."""
    replicates = list(replicates)
    U = np.stack([make_rng(seed, r).random(N + 1) for r in replicates])
    init = inverse_cdf_table(rho.p)[0]
    cum = inverse_cdf_table(k.T)
    out = np.empty(U.shape, dtype=np.int64)
    x = (init[None, :] <= U[:, :1]).sum(axis=1)
    out[:, 0] = x
    for n in range(1, N + 1):
        x = (cum[x] <= U[:, n : n + 1]).sum(axis=1)
        out[:, n] = x
    return out


def _values(trace, f):
    states = trace.states if isinstance(trace, ChainTrace) else np.asarray(trace)
    return np.asarray(f, dtype=float)[states]


def f_hat(trace: ChainTrace, f) -> float:
    """Ergodic average ``(1 / (N + 1)) * sum_n f(x_n)``."""
    return float(np.mean(_values(trace, f)))


def _autocov(y: np.ndarray, max_lag: int) -> np.ndarray:
    # Biased normalisation 1/(N+1) at every lag keeps the sequence positive semidefinite.
    m = len(y)
    z = y - y.mean()
    size = 1 << int(np.ceil(np.log2(max(2 * m - 1, 1))))
    F = np.fft.rfft(z, size)
    acov = np.fft.irfft(F * np.conj(F), size)[: max_lag + 1] / m
    return acov


def autocovariance(trace: ChainTrace, f, max_lag: int) -> np.ndarray:
    """Lag ``0..max_lag`` autocovariances of ``f`` along the trace."""
    y = _values(trace, f)
    if max_lag >= len(y) / 2 and len(y) > 1:
        raise ValueError("max_lag must be below half the trace length")
    if np.all(y == y[0]):
        return np.zeros(max_lag + 1)
    return _autocov(y, max_lag)


def autocorrelation(trace: ChainTrace, f, max_lag: int) -> np.ndarray:
    acov = autocovariance(trace, f, max_lag)
    if acov[0] <= 0:
        raise DegenerateVariance("f is constant along the trace")
    return acov / acov[0]


def _geyer(y: np.ndarray):
    """Initial-positive-sequence estimate; returns ``(ess, mcse, variance, rho[1:L+1])``.

    Pair sums ``rho[2k] + rho[2k+1]`` are accumulated while positive, so the
    truncation lag ``L`` is the odd end of the last positive pair.
    """
    m = len(y)
    if m == 1:
        return 1.0, 0.0, 0.0, np.zeros(0)
    if np.all(y == y[0]):
        raise DegenerateVariance("f is constant along the trace")
    acov = _autocov(y, m - 1)
    var = float(acov[0])
    rho = acov / var
    K = m // 2
    pairs = rho[0 : 2 * K : 2] + rho[1 : 2 * K : 2]
    nonpos = np.flatnonzero(pairs <= 0)
    stop = int(nonpos[0]) if nonpos.size else K
    tau = -1.0 + 2.0 * float(pairs[:stop].sum())
    # A perfectly anticorrelated chain has stop == 0; cap ESS at m**2.
    tau = max(tau, 1.0 / m)
    ess = m / tau
    L = max(2 * stop - 1, 0)
    return ess, float(np.sqrt(var / ess)), var, rho[1 : L + 1]


def ess(trace: ChainTrace, f):
    """Effective sample size and Monte Carlo standard error ``sqrt(var / ess)``.

    A single-state trace has ``ess = 1`` and ``mcse = 0`` by convention.

    Raises
    ------
    DegenerateVariance
        If ``f`` is constant along a trace of two or more states.
    """
    e, mcse, _, _ = _geyer(_values(trace, f))
    return e, mcse


def estimator_report(trace: ChainTrace, f) -> EstimatorReport:
    y = _values(trace, f)
    e, mcse, var, rho = _geyer(y)
    return EstimatorReport(
        f_hat=float(y.mean()),
        autocorr=[float(v) for v in rho],
        ess=float(e),
        mcse=mcse,
        var_f_hat_est=mcse**2,
        variance=var,
        n_samples=len(y),
    )


def exact_estimator_mean(k: Kernel, rho: Dist, f, N: int) -> float:
    """``E[f_hat_N]`` for chains started from ``rho``, via the exact ``n``-step laws."""
    curve = n_step_curve(k, rho, N)
    return float(np.mean(curve @ np.asarray(f, dtype=float)))


class Moments:
    """Count, mean and central moment sums up to order four, mergeable pairwise."""

    __slots__ = ("n", "mean", "M2", "M3", "M4")

    def __init__(self, n=0, mean=0.0, M2=0.0, M3=0.0, M4=0.0):
        self.n, self.mean, self.M2, self.M3, self.M4 = n, mean, M2, M3, M4

    @classmethod
    def from_array(cls, x) -> "Moments":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls()
        m = float(x.mean())
        d = x - m
        return cls(x.size, m, float(np.sum(d**2)), float(np.sum(d**3)), float(np.sum(d**4)))

    def merge(self, other: "Moments") -> "Moments":
        na, nb = self.n, other.n
        if na == 0:
            return other
        if nb == 0:
            return self
        n = na + nb
        d = other.mean - self.mean
        mean = self.mean + d * nb / n
        M2 = self.M2 + other.M2 + d**2 * na * nb / n
        M3 = (
            self.M3 + other.M3
            + d**3 * na * nb * (na - nb) / n**2
            + 3 * d * (na * other.M2 - nb * self.M2) / n
        )
        M4 = (
            self.M4 + other.M4
            + d**4 * na * nb * (na**2 - na * nb + nb**2) / n**3
            + 6 * d**2 * (na**2 * other.M2 + nb**2 * self.M2) / n**2
            + 4 * d * (na * other.M3 - nb * self.M3) / n
        )
        return Moments(n, mean, M2, M3, M4)

    @staticmethod
    def pairwise(parts) -> "Moments":
        parts = list(parts)
        if not parts:
            return Moments()
        while len(parts) > 1:
            merged = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
            if len(parts) % 2:
                merged.append(parts[-1])
            parts = merged
        return parts[0]

    @property
    def variance(self):
        return self.M2 / self.n

    @property
    def skewness(self):
        return (self.M3 / self.n) / self.variance**1.5

    @property
    def excess_kurtosis(self):
        return (self.M4 / self.n) / self.variance**2 - 3.0

    def summary(self) -> dict:
        return {
            "count": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
        }


@dataclass(frozen=True, eq=False)
class CLTSummary:
    f_hat: np.ndarray
    ess: np.ndarray
    mcse: np.ndarray
    standardized: np.ndarray
    target: float
    moments: dict
    f_hat_moments: dict
    degenerate: int


def clt_replicates(k: Kernel, rho: Dist, f, N: int, R: int, seed: int, chunk: int = 250, check_ergodic: bool = True) -> CLTSummary:
    """Simulate ``R`` independent chains and standardize their estimators by their own MCSE.

    Replicates whose trace makes ``f`` constant have no MCSE; they are counted
    in ``degenerate`` and left out of the standardized moments.
    """
    from .structure import classify

    if R < MIN_CLT_REPLICATES:
        raise ValueError(f"need at least {MIN_CLT_REPLICATES} replicates, got {R}")
    if check_ergodic:
        rep = classify(k)
        if not (rep.irreducible and rep.aperiodic):
            raise ValueError("the CLT needs an irreducible aperiodic (hence geometrically ergodic) kernel")
        pi = rep.pi
    else:
        pi = stationary(k)
    f = np.asarray(f, dtype=float)
    target = pi.expect(f)
    fh = np.empty(R)
    es = np.empty(R)
    se = np.empty(R)
    parts, raw_parts = [], []
    for start in range(0, R, chunk):
        ids = range(start, min(start + chunk, R))
        states = sample_chains(k, rho, N, seed, ids)
        Y = f[states]
        for row, r in zip(Y, ids):
            fh[r] = row.mean()
            try:
                es[r], se[r], _, _ = _geyer(row)
            except DegenerateVariance:
                es[r], se[r] = np.nan, np.nan
        z = (fh[ids.start : ids.stop] - target) / se[ids.start : ids.stop]
        good = np.isfinite(z)
        parts.append(Moments.from_array(z[good]))
        raw_parts.append(Moments.from_array(fh[ids.start : ids.stop]))
    z = (fh - target) / se
    z = np.where(np.isfinite(z), z, np.nan)
    mom = Moments.pairwise(parts)
    return CLTSummary(
        f_hat=fh,
        ess=es,
        mcse=se,
        standardized=z,
        target=target,
        moments=mom.summary() if mom.n > 1 else {"count": mom.n},
        f_hat_moments=Moments.pairwise(raw_parts).summary(),
        degenerate=int(np.sum(~np.isfinite(z))),
    )
