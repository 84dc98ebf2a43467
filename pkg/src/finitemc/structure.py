"""Ergodic structure of a finite kernel: reducibility, periodicity, Harris recurrence.

All notions are relative to an invariant distribution ``pi``: states with
``pi > 0`` are the non-null states that chains must be able to reach, while
null states may still be visited along the way.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import gcd
from typing import Optional

import numpy as np

from .errors import NotInvariant, NotUnique, Reducible
from .kernel import DERIVED_TOL, Dist, Kernel, decompose_mixture, stationary


@dataclass(frozen=True)
class NullSetPartition:
    pi: Dist
    non_null_states: frozenset
    null_states: frozenset

    @classmethod
    def from_dist(cls, pi: Dist) -> "NullSetPartition":
        non_null = frozenset(int(i) for i in np.flatnonzero(pi.p > 0))
        return cls(pi, non_null, frozenset(range(pi.space.n)) - non_null)


@dataclass(frozen=True)
class ErgodicityReport:
    irreducible: bool
    period: Optional[int]
    aperiodic: bool
    harris: bool
    witness: Optional[dict]
    pi: Optional[Dist]
    partition: Optional[NullSetPartition]


def _successors(T):
    return [np.flatnonzero(row > 0).tolist() for row in T]


def reachable_from(T, x0: int) -> set:
    """States reachable from ``x0`` in one or more steps.

    Breadth-first search visits every state reachable by a path of length at
    most ``n``, which is all of them on a finite space.
    """
    succ = _successors(T)
    seen = set()
    queue = deque(succ[x0])
    seen.update(succ[x0])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _check_invariant(k: Kernel, pi: Dist):
    resid = np.abs(pi.p @ k.T - pi.p).sum()
    if resid > DERIVED_TOL:
        raise NotInvariant(f"pi is not invariant for the kernel (L1 residual {resid:.3e})")


def irreducibility(k: Kernel, pi: Dist):
    """Decide pi-irreducibility.

    Returns ``(True, None)`` or ``(False, (x0, j))`` where ``j`` is the
    smallest non-null state unreachable from the smallest failing start ``x0``.
    """
    _check_invariant(k, pi)
    non_null = np.flatnonzero(pi.p > 0)
    for x0 in range(k.n):
        reach = reachable_from(k.T, x0)
        for j in non_null:
            if int(j) not in reach:
                return False, (x0, int(j))
    return True, None


def _bfs_levels(T, root=0):
    succ = _successors(T)
    level = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
    return level, succ


def period(k: Kernel) -> int:
    """Period of a kernel whose support digraph is strongly connected.

    Uses BFS levels from state 0: the period is the gcd of
    ``level[u] + 1 - level[v]`` over all edges ``u -> v``.
    """
    return _period_and_levels(k.T)[0]


def _period_and_levels(T):
    level, succ = _bfs_levels(T)
    n = T.shape[0]
    if len(level) < n:
        raise Reducible("support digraph is not strongly connected")
    for x in range(n):
        if 0 not in reachable_from(T, x):
            raise Reducible("support digraph is not strongly connected")
    g = 0
    for u in range(n):
        for v in succ[u]:
            g = gcd(g, level[u] + 1 - level[v])
    return abs(g), level


def periodic_decomposition(k: Kernel) -> list:
    """Cyclic classes ``A_1, ..., A_J`` with ``T(A_{j+1} | x) = 1`` for ``x`` in ``A_j``.

    ``A_1`` contains state 0 and each class is sorted.
    """
    J, level = _period_and_levels(k.T)
    classes = [[] for _ in range(J)]
    for x in range(k.n):
        classes[level[x] % J].append(x)
    return classes


def _mixture_continuous_power(k: Kernel, N: int) -> np.ndarray:
    # T^N minus the all-rejection path, which stays at x0 with mass (1 - lam)^N.
    mix = decompose_mixture(k)
    P = np.linalg.matrix_power(k.T, N)
    return P - np.diag((1.0 - mix.lam) ** N)


def positivity_condition(k: Kernel, pi: Dist, N: int, use_mixture: bool = False) -> bool:
    """Sufficient condition for pi-irreducibility: positive ``N``-step mass on every non-null state.

    With ``use_mixture`` the test is applied to the component of the
    ``N``-step law that excludes the path rejecting at every step, so
    positivity there implies positivity of the full ``N``-step law.
    """
    if N < 1:
        raise ValueError("N must be positive")
    non_null = pi.p > 0
    P = _mixture_continuous_power(k, N) if use_mixture else np.linalg.matrix_power(k.T, N)
    return bool(np.all(P[:, non_null] > 0))


def harris_condition(k: Kernel, pi: Dist, use_mixture: bool = False) -> bool:
    """One-step positivity ``T[x0, j] > 0`` for all starts and non-null targets."""
    return positivity_condition(k, pi, 1, use_mixture=use_mixture)


def classify(k: Kernel) -> ErgodicityReport:
    try:
        pi = stationary(k)
    except NotUnique as exc:
        # Equal-weight mixture of the class vertices has every recurrent state non-null.
        mix = np.mean([b.p for b in exc.basis], axis=0)
        pi = Dist(k.space, mix / mix.sum())
        ok, pair = irreducibility(k, pi)
        x0 = pair[0]
        reach = reachable_from(k.T, x0)
        unreachable = sorted(int(j) for j in np.flatnonzero(pi.p > 0) if int(j) not in reach)
        witness = {
            "start": x0,
            "unreachable": unreachable,
            "classes": [b.support() for b in exc.basis],
        }
        return ErgodicityReport(
            irreducible=False,
            period=None,
            aperiodic=False,
            harris=False,
            witness=witness,
            pi=None,
            partition=NullSetPartition.from_dist(pi),
        )

    partition = NullSetPartition.from_dist(pi)
    irreducible, pair = irreducibility(k, pi)
    support = sorted(partition.non_null_states)
    restricted = Kernel.from_matrix(k.T[np.ix_(support, support)], tol=1e-9)
    J = period(restricted)
    witness = None
    if not irreducible:
        witness = {"start": pair[0], "unreachable": [pair[1]]}
    elif J > 1:
        witness = {
            "periodic_classes": [
                [support[i] for i in cls] for cls in periodic_decomposition(restricted)
            ]
        }
    harris = irreducible and J == 1 and harris_condition(k, pi)
    return ErgodicityReport(
        irreducible=irreducible,
        period=J,
        aperiodic=J == 1,
        harris=harris,
        witness=witness,
        pi=pi,
        partition=partition,
    )
