"""Finite state spaces, distributions, Markov kernels and N-step algebra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotUnique, SpaceMismatch, ValidationError

STOCHASTIC_TOL = 1e-12
DERIVED_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        if not labels:
            raise ValidationError("state space must contain at least one state")
        if len(set(labels)) != len(labels):
            raise ValidationError("state labels must be unique")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, n: int) -> "StateSpace":
        return cls(tuple(f"s{i}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        """Index of ``label``; integers are accepted as indices directly."""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if not 0 <= label < self.n:
                raise ValidationError(f"state index {label} out of range")
            return int(label)
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise ValidationError(f"unknown state {label!r}") from None

    def indices(self, labels) -> list:
        return [self.index(s) for s in labels]


@dataclass(frozen=True, eq=False)
class Dist:
    """Probability vector over a finite state space."""

    space: StateSpace
    p: np.ndarray
    tol: float = field(default=STOCHASTIC_TOL, repr=False)

    def __post_init__(self):
        p = _frozen(self.p)
        if p.shape != (self.space.n,):
            raise ValidationError(f"distribution has shape {p.shape}, expected ({self.space.n},)")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError("distribution entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > self.tol:
            raise ValidationError(f"distribution sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)

    @classmethod
    def delta(cls, space: StateSpace, x) -> "Dist":
        p = np.zeros(space.n)
        p[space.index(x)] = 1.0
        return cls(space, p)

    @classmethod
    def uniform(cls, space: StateSpace) -> "Dist":
        return cls(space, np.full(space.n, 1.0 / space.n))

    def expect(self, f) -> float:
        return float(np.dot(self.p, np.asarray(f, dtype=float)))

    def support(self) -> list:
        return [int(i) for i in np.flatnonzero(self.p > 0)]

    def __eq__(self, other):
        return (
            isinstance(other, Dist)
            and self.space == other.space
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic transition matrix; row ``i`` is the law of the next state from ``i``."""

    space: StateSpace
    T: np.ndarray
    tol: float = field(default=STOCHASTIC_TOL, repr=False)

    def __post_init__(self):
        T = _frozen(self.T)
        n = self.space.n
        if T.shape != (n, n):
            raise ValidationError(f"transition matrix has shape {T.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(T)) or np.any(T < 0):
            raise ValidationError("transition matrix entries must be finite and nonnegative")
        bad = np.flatnonzero(np.abs(T.sum(axis=1) - 1.0) > self.tol)
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"row {i} ({self.space.labels[i]}) sums to {T[i].sum()!r}, not 1")
        object.__setattr__(self, "T", T)

    @classmethod
    def from_matrix(cls, T, labels: Sequence | None = None, tol=STOCHASTIC_TOL) -> "Kernel":
        T = np.asarray(T, dtype=float)
        space = StateSpace(tuple(labels)) if labels is not None else StateSpace.of_size(T.shape[0])
        return cls(space, T, tol)

    @property
    def n(self) -> int:
        return self.space.n

    def __eq__(self, other):
        return (
            isinstance(other, Kernel)
            and self.space == other.space
            and np.array_equal(self.T, other.T)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MixtureDecomposition:
    """Per-row split ``T[i] = lam[i] * continuous[i] + (1 - lam[i]) * singular[i]``.

    The singular part is the rejection (stay-put) mass on the diagonal.
    """

    lam: np.ndarray
    continuous_part: np.ndarray
    singular_part: np.ndarray

    def reconstruct(self) -> np.ndarray:
        lam = self.lam[:, None]
        return lam * self.continuous_part + (1.0 - lam) * self.singular_part


def _check_space(k: Kernel, rho: Dist):
    if k.space != rho.space:
        raise SpaceMismatch("kernel and distribution live on different state spaces")


def _as_dist(space, p):
    p = np.where(np.abs(p) < 1e-300, 0.0, p)
    p = np.clip(p, 0.0, None)
    return Dist(space, p / p.sum(), tol=DERIVED_TOL)


def step(k: Kernel, rho: Dist) -> Dist:
    """One-step distribution ``rho @ T``."""
    _check_space(k, rho)
    return _as_dist(k.space, rho.p @ k.T)


def n_step(k: Kernel, rho: Dist, N: int) -> Dist:
    """Distribution of the chain after ``N`` transitions from ``rho``."""
    _check_space(k, rho)
    if N < 0:
        raise ValueError("N must be nonnegative")
    p = rho.p
    for _ in range(N):
        p = p @ k.T
    return _as_dist(k.space, p) if N else rho


def n_step_curve(k: Kernel, rho: Dist, N: int) -> np.ndarray:
    """Array of shape (N+1, n) whose row ``m`` is the ``m``-step distribution."""
    _check_space(k, rho)
    out = np.empty((N + 1, k.n))
    out[0] = rho.p
    for m in range(1, N + 1):
        out[m] = out[m - 1] @ k.T
    return out


def closed_classes(k: Kernel) -> list:
    """Closed communicating classes of the support digraph, sorted by smallest state."""
    adj = k.T > 0
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    classes = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(k.n, dtype=bool)
        outside[members] = False
        if not adj[np.ix_(members, outside)].any():
            classes.append([int(i) for i in members])
    return sorted(classes, key=lambda c: c[0])


def _solve_class(T, members):
    sub = T[np.ix_(members, members)]
    m = len(members)
    A = sub.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def stationary(k: Kernel) -> Dist:
    """Unique invariant distribution of ``k``.

    The invariant simplex has one vertex per closed communicating class, so
    uniqueness is decided on the support digraph before any linear solve.

    Raises
    ------
    NotUnique
        If there is more than one closed class; ``basis`` carries the
        invariant distribution of each class.
    """
    classes = closed_classes(k)
    basis = []
    for members in classes:
        p = np.zeros(k.n)
        p[members] = _solve_class(k.T, members)
        basis.append(_as_dist(k.space, p))
    if len(basis) > 1:
        raise NotUnique(basis)
    pi = basis[0]
    resid = np.abs(pi.p @ k.T - pi.p).sum()
    if resid > DERIVED_TOL:
        raise ArithmeticError(f"stationary solve residual {resid:.3e} exceeds tolerance")
    return pi


def decompose_mixture(k: Kernel) -> MixtureDecomposition:
    """Split each row into an off-diagonal proposal part and a diagonal rejection part.

    Rows with ``T[i, i] == 1`` use the degenerate convention ``lam = 1`` with
    the continuous part equal to ``delta_i``.
    """
    T = k.T
    n = k.n
    d = np.diag(T).copy()
    lam = np.where(d < 1.0, 1.0 - d, 1.0)
    cont = np.zeros((n, n))
    for i in range(n):
        if d[i] < 1.0:
            row = T[i].copy()
            row[i] = 0.0
            cont[i] = row / (1.0 - d[i])
        else:
            cont[i, i] = 1.0
    return MixtureDecomposition(_frozen(lam), _frozen(cont), _frozen(np.eye(n)))
