"""Markov couplings on the product space and the splitting (small-set merging) coupling.

Pair states ``(x, y)`` are flattened to ``x * n + y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contraction import MinorizationCertificate
from .errors import InvalidCertificate
from .kernel import Kernel, _frozen
from .rng import inverse_cdf_table, make_rng

MIN_REPLICATES = 100


@dataclass(frozen=True, eq=False)
class ProductKernel:
    base: Kernel
    T2: np.ndarray
    merging: bool = False

    def __post_init__(self):
        n = self.base.n
        T2 = _frozen(self.T2)
        if T2.shape != (n * n, n * n):
            raise ValueError("product kernel must be n^2 x n^2")
        if np.any(T2 < 0) or np.abs(T2.sum(axis=1) - 1).max() > max(1e-12, 3 * self.base.tol):
            raise ValueError("product kernel must be row-stochastic")
        object.__setattr__(self, "T2", T2)

    @property
    def n(self) -> int:
        return self.base.n

    def pair(self, x, y) -> int:
        sp = self.base.space
        return sp.index(x) * self.n + sp.index(y)

    def unpair(self, s: int):
        return divmod(int(s), self.n)


@dataclass(frozen=True)
class SplittingConfig:
    cert: MinorizationCertificate
    seed: int = 0


@dataclass(frozen=True, eq=False)
class CoupledTrace:
    pairs: np.ndarray
    merge_time: Optional[int]
    seed: int
    replicate: int = 0

    def to_tsv(self, labels=None) -> str:
        """One line per step: ``step x y merged``."""
        lines = ["step\tx\ty\tmerged"]
        for t, (x, y) in enumerate(self.pairs):
            merged = int(self.merge_time is not None and t >= self.merge_time)
            lx, ly = (labels[x], labels[y]) if labels is not None else (x, y)
            lines.append(f"{t}\t{lx}\t{ly}\t{merged}")
        return "\n".join(lines) + "\n"


def independent_product(k: Kernel) -> ProductKernel:
    """Both coordinates move independently, including on the diagonal."""
    return ProductKernel(k, np.kron(k.T, k.T), merging=False)


def splitting_kernel(k: Kernel, cfg: SplittingConfig) -> ProductKernel:
    """Nummelin splitting coupling built from a lag-1 minorization certificate.

    Equal coordinates move together. From distinct states that are both in
    the small set the pair merges onto a common draw from ``nu`` with
    probability ``eps``, and otherwise moves independently under the residual
    kernels ``(T[x] - eps * nu) / (1 - eps)``. All other pairs move
    independently.
    """
    cert = cfg.cert
    if cert.M != 1:
        raise InvalidCertificate("the splitting simulator needs a lag-1 minorization")
    T = k.T
    n = k.n
    eps, nu = cert.eps, cert.nu.p
    C = sorted(cert.small_set)
    resid = {}
    for x in C:
        r = T[x] - eps * nu
        if r.min() < -1e-12:
            raise InvalidCertificate(f"residual kernel at state {x} has negative mass {r.min()!r}")
        if eps < 1:
            r = np.clip(r, 0.0, None)
            # eps can fall short of 1 by round-off only; the residual is then immaterial.
            resid[x] = r / r.sum() if r.sum() > 1e-12 else nu
    T2 = np.kron(T, T)
    diag = np.arange(n) * (n + 1)
    for x in range(n):
        row = np.zeros(n * n)
        row[diag] = T[x]
        T2[x * n + x] = row
    for x in C:
        for y in C:
            if x == y:
                continue
            row = np.zeros(n * n)
            row[diag] = eps * nu
            if eps < 1:
                row += (1.0 - eps) * np.outer(resid[x], resid[y]).ravel()
            T2[x * n + y] = row
    return ProductKernel(k, T2, merging=True)


def product_n_step(pk: ProductKernel, x0, y0, N: int) -> np.ndarray:
    """Joint law of ``(x_N, y_N)`` as an ``n x n`` matrix, started from ``(x0, y0)``."""
    p = np.zeros(pk.n * pk.n)
    p[pk.pair(x0, y0)] = 1.0
    for _ in range(N):
        p = p @ pk.T2
    return p.reshape(pk.n, pk.n)


def diagonal_complement_mass(pk: ProductKernel, x0, y0, N: int) -> float:
    """Exact ``gamma_N(D^c)``: probability the coordinates differ after ``N`` steps."""
    J = product_n_step(pk, x0, y0, N)
    return float(J[~np.eye(pk.n, dtype=bool)].sum())


def marginality_error(pk: ProductKernel, N_max: int) -> float:
    """Largest deviation, over all start pairs and ``N <= N_max``, between the
    product chain's marginals and the base kernel's ``N``-step laws.
    """
    n = pk.n
    P2 = np.eye(n * n)
    P = np.eye(n)
    xs = np.repeat(np.arange(n), n)
    ys = np.tile(np.arange(n), n)
    worst = 0.0
    for _ in range(N_max + 1):
        J = P2.reshape(n * n, n, n)
        worst = max(worst, np.abs(J.sum(axis=2) - P[xs]).max(), np.abs(J.sum(axis=1) - P[ys]).max())
        P2 = P2 @ pk.T2
        P = P @ pk.base.T
    return float(worst)


def _simulate_pairs(pk: ProductKernel, start: int, N: int, seed: int, replicates) -> np.ndarray:
    replicates = list(replicates)
    U = np.stack([make_rng(seed, r).random(N) for r in replicates]) if N else np.zeros((len(replicates), 0))
    cum = inverse_cdf_table(pk.T2)
    out = np.empty((len(replicates), N + 1), dtype=np.int64)
    s = np.full(len(replicates), start)
    out[:, 0] = s
    for t in range(N):
        s = (cum[s] <= U[:, t : t + 1]).sum(axis=1)
        out[:, t + 1] = s
    return out


def _merge_time(xs, ys):
    hit = np.flatnonzero(xs == ys)
    return int(hit[0]) if hit.size else None


def simulate_coupled(pk: ProductKernel, x0, y0, N: int, seed: int, replicate: int = 0) -> CoupledTrace:
    """Run the product chain for ``N`` steps from ``(x0, y0)``.

    ``merge_time`` is the first step with equal coordinates, reported only
    for merging (splitting) kernels.
    """
    s = _simulate_pairs(pk, pk.pair(x0, y0), N, seed, [replicate])[0]
    xs, ys = s // pk.n, s % pk.n
    merge = _merge_time(xs, ys) if pk.merging else None
    return CoupledTrace(np.stack([xs, ys], axis=1), merge, seed, replicate)


def coupled_endpoints(pk: ProductKernel, x0, y0, N: int, replicates: int, seed: int, chunk: int = 5000) -> np.ndarray:
    """Final pair states of replicates ``0..replicates-1``, consistent with :func:`simulate_coupled`."""
    ends = []
    for start in range(0, replicates, chunk):
        ids = range(start, min(start + chunk, replicates))
        ends.append(_simulate_pairs(pk, pk.pair(x0, y0), N, seed, ids)[:, -1])
    return np.concatenate(ends)


def merge_times(pk: ProductKernel, x0, y0, N: int, replicates: int, seed: int, chunk: int = 2000) -> np.ndarray:
    """First step with equal coordinates for each replicate, ``-1`` if they never meet by ``N``."""
    out = []
    for start in range(0, replicates, chunk):
        ids = range(start, min(start + chunk, replicates))
        S = _simulate_pairs(pk, pk.pair(x0, y0), N, seed, ids)
        eq = (S // pk.n) == (S % pk.n)
        out.append(np.where(eq.any(axis=1), eq.argmax(axis=1), -1))
    return np.concatenate(out)


def empirical_tv_bound(pk: ProductKernel, x0, y0, N: int, replicates: int, seed: int) -> float:
    """Fraction of replicates whose coordinates still differ at step ``N``.

    This estimates ``gamma_N(D^c)``, which upper-bounds
    ``TV(T^N delta_x0, T^N delta_y0)``.
    """
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates")
    ends = coupled_endpoints(pk, x0, y0, N, replicates, seed)
    return float(np.mean(ends // pk.n != ends % pk.n))
