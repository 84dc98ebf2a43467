"""Exact transportation simplex (MODI / stepping-stone) for balanced transport problems.

The basis is kept as a spanning tree on the bipartite graph of supply rows
and demand columns, so degenerate bases are represented explicitly with
zero-flow basic cells. Optimality is certified by dual potentials ``u, v``
with ``cost[i, j] - u[i] - v[j] >= -tol`` on every cell.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12


@dataclass
class TransportSolution:
    cost: float
    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iterations: int


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    flow = {}
    i = j = 0
    while True:
        x = max(min(ra[i], rb[j]), 0.0)
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flow


def _tree_adjacency(basis, m):
    adj = {}
    for i, j in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    return adj


def _potentials(basis, cost, m, n):
    adj = _tree_adjacency(basis, m)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj.get(node, ()):
            if np.isnan(pot[nb]):
                if node < m:
                    pot[nb] = cost[node, nb - m] - pot[node]
                else:
                    pot[nb] = cost[nb, node - m] - pot[node]
                queue.append(nb)
    return pot[:m], pot[m:]


def _tree_path(basis, m, start, goal):
    adj = _tree_adjacency(basis, m)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj.get(node, ()):
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def _edge_cell(p, q, m):
    return (p, q - m) if p < m else (q, p - m)


def solve_transport(a, b, cost, tol=PIVOT_TOL, max_iter=None) -> TransportSolution:
    """Minimise ``sum(plan * cost)`` over plans with row sums ``a`` and column sums ``b``.

    Zero-mass rows and columns are dropped before the solve and restored as
    zero rows/columns of the returned plan.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    C = cost[np.ix_(rows, cols)]
    m, n = len(rows), len(cols)
    scale = max(1.0, float(np.abs(C).max())) if C.size else 1.0
    flow = _northwest_corner(a[rows], b[cols])
    basis = set(flow)
    if max_iter is None:
        max_iter = 50 * (m + n) ** 2 + 100
    degenerate_run = 0
    it = 0
    while True:
        u, v = _potentials(basis, C, m, n)
        reduced = C - u[:, None] - v[None, :]
        for cell in basis:
            reduced[cell] = 0.0
        if degenerate_run > m + n:
            # Bland-style entering choice to break degenerate cycling.
            cand = np.argwhere(reduced < -tol * scale)
            if not len(cand):
                break
            enter = tuple(int(c) for c in cand[0])
        else:
            flat = int(np.argmin(reduced))
            enter = divmod(flat, n)
            if reduced[enter] >= -tol * scale:
                break
        it += 1
        if it > max_iter:
            raise RuntimeError("transportation simplex did not converge")
        i, j = enter
        path = _tree_path(basis, m, i, m + j)
        cells = [_edge_cell(path[k], path[k + 1], m) for k in range(len(path) - 1)]
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta), key=lambda c: c)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[enter] = theta
        del flow[leaving]
        basis.remove(leaving)
        basis.add(enter)
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0

    plan = np.zeros_like(cost)
    for (i, j), x in flow.items():
        plan[rows[i], cols[j]] = max(x, 0.0)
    u_full = np.zeros(len(a))
    v_full = np.zeros(len(b))
    u_full[rows] = u
    v_full[cols] = v
    return TransportSolution(float(np.sum(plan * cost)), plan, u_full, v_full, it)
