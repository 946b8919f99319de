"""Optimal transport on finite ultrametric spaces.

The closed form works on the tree of balls; the oracle is an exact
transportation-simplex solver that works on any cost matrix and is used to
check the closed form.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .ultra_core import DistanceMatrix, Srt, label_key, sorted_labels

DEFAULT_ORACLE_CAP = 64
MEASURE_ATOL = 1e-12


class Measure:
    """Probability weights on labelled points.

    Labels with zero weight may be present. Weights must be nonnegative and sum
    to one within ``atol``.
    """

    def __init__(self, weights: Mapping[str, float], atol: float = MEASURE_ATOL):
        labels = tuple(sorted_labels(str(k) for k in weights))
        w = np.array([float(weights[k]) for k in labels], dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = math.fsum(w)
        if abs(total - 1.0) > atol:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w.setflags(write=False)
        self.labels = labels
        self.weights = w
        self._index = {lab: i for i, lab in enumerate(labels)}

    @classmethod
    def dirac(cls, label: str) -> "Measure":
        return cls({label: 1.0})

    @classmethod
    def uniform(cls, labels: Iterable[str]) -> "Measure":
        labels = list(labels)
        return cls({lab: 1.0 / len(labels) for lab in labels}, atol=1e-9)

    def __getitem__(self, label: str) -> float:
        i = self._index.get(label)
        return 0.0 if i is None else float(self.weights[i])

    def items(self):
        return zip(self.labels, (float(x) for x in self.weights))

    def as_dict(self) -> dict[str, float]:
        return dict(self.items())

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(lab for lab, w in self.items() if w > 0)

    def on(self, labels: Iterable[str]) -> np.ndarray:
        """Weights aligned with ``labels`` (0 for labels not carried)."""
        return np.array([self[lab] for lab in labels])

    def mix(self, other: "Measure", t: float) -> "Measure":
        """The convex combination ``t*self + (1-t)*other``."""
        keys = set(self.labels) | set(other.labels)
        return Measure({k: t * self[k] + (1 - t) * other[k] for k in keys}, atol=1e-9)

    def __repr__(self) -> str:
        return f"Measure(support={len(self.support)})"


# --------------------------------------------------------------------------
# closed form on the tree


def ball_masses(t: Srt, mu: Measure) -> np.ndarray:
    """Vertex-indexed array ``mass[v] = mu(X_v)``."""
    unknown = [lab for lab in mu.support if lab not in t._leaf_pos]
    if unknown:
        raise KeyError(f"measure charges points not in the tree: {unknown[:5]}")
    vals = np.zeros(t.n_vertices)
    for lab, w in mu.items():
        if lab in t._leaf_pos:
            vals[t.vertex_of(lab)] = w
    return t.subtree_sums(vals)


def edge_weights(t: Srt, p: float) -> np.ndarray:
    """``2**(p-1) * (h(parent)**p - h(v)**p)`` per vertex; 0 at the root."""
    _check_p(p)
    h = t.height
    par = t.parent
    w = np.zeros(t.n_vertices)
    nonroot = par >= 0
    w[nonroot] = 2.0 ** (p - 1) * (h[par[nonroot]] ** p - h[nonroot] ** p)
    return w


def _check_p(p: float) -> None:
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")


def wasserstein_pp(t: Srt, mu: Measure, nu: Measure, p: float = 1.0) -> float:
    """``W_p(mu, nu)**p`` from the per-edge mass imbalances, in linear time."""
    w = edge_weights(t, p)
    diff = np.abs(ball_masses(t, mu) - ball_masses(t, nu))
    return math.fsum(w * diff)


def wasserstein(t: Srt, mu: Measure, nu: Measure, p: float = 1.0) -> float:
    return wasserstein_pp(t, mu, nu, p) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class L1Coordinates:
    """Image of a measure in l1, indexed by the non-root vertices of its tree."""

    vertices: np.ndarray
    weight: np.ndarray
    coord: np.ndarray
    p: float

    def distance(self, other: "L1Coordinates") -> float:
        if self.p != other.p or not np.array_equal(self.vertices, other.vertices):
            raise ValueError("coordinates come from different trees or exponents")
        return math.fsum(np.abs(self.coord - other.coord))


def embed_l1(t: Srt, mu: Measure, p: float = 1.0) -> L1Coordinates:
    """Affine isometric embedding; l1 distances between images equal W_p**p."""
    w = edge_weights(t, p)
    nonroot = np.flatnonzero(t.parent >= 0)
    mass = ball_masses(t, mu)
    return L1Coordinates(nonroot, w[nonroot], w[nonroot] * mass[nonroot], p)


# --------------------------------------------------------------------------
# transport plans


@dataclass
class TransportPlan:
    """Sparse coupling: ``entries[(source, target)] = mass``.

    Tree plans hold exact :class:`fractions.Fraction` masses; oracle plans hold
    floats.
    """

    entries: dict[tuple[str, str], float | Fraction]
    cost: float
    p: float
    residual: float | Fraction = 0

    def marginals(self) -> tuple[dict[str, float], dict[str, float]]:
        src: dict[str, float] = {}
        tgt: dict[str, float] = {}
        for (a, b), m in self.entries.items():
            src[a] = src.get(a, 0) + m
            tgt[b] = tgt.get(b, 0) + m
        return src, tgt

    def marginal_error(self, mu: Measure, nu: Measure) -> float:
        src, tgt = self.marginals()
        keys_a = set(src) | set(mu.support)
        keys_b = set(tgt) | set(nu.support)
        err = [abs(float(src.get(k, 0)) - mu[k]) for k in keys_a]
        err += [abs(float(tgt.get(k, 0)) - nu[k]) for k in keys_b]
        return max(err, default=0.0)

    def sorted_entries(self) -> list[tuple[str, str, float | Fraction]]:
        return sorted(
            ((a, b, m) for (a, b), m in self.entries.items()),
            key=lambda e: (label_key(e[0]), label_key(e[1])),
        )


def plan_cost(plan_entries: Mapping[tuple[str, str], float], dist, p: float) -> float:
    """``sum mass * dist(a, b)**p`` with compensated summation."""
    return math.fsum(float(m) * dist(a, b) ** p for (a, b), m in plan_entries.items())


def tree_optimal_plan(t: Srt, mu: Measure, nu: Measure, p: float = 1.0) -> TransportPlan:
    """Optimal plan built bottom-up: each ball settles what it can internally.

    At every vertex, the surplus exported by some children is matched with the
    deficit of others (in label order) and moved at distance ``2h(v)``; only
    the net imbalance leaves the ball. Masses are kept as exact fractions, so
    the flow through every edge equals ``|mu(X_v) - nu(X_v)|`` exactly.

    Float weights rarely sum to exactly the same rational; the unmatched
    difference is left at the root and reported as ``residual``, and edge flows
    are then exact up to it.
    """
    _check_p(p)
    ball_masses(t, mu)
    ball_masses(t, nu)
    # (surplus, deficit) lists of (label, amount); at most one is non-empty
    pending: dict[int, tuple[list, list]] = {}
    entries: dict[tuple[str, str], Fraction] = {}
    costs: list[float] = []
    for v in reversed(t.order):
        v = int(v)
        kids = t.children[v]
        if not kids:
            lab = t.labels[v]
            a, b = Fraction(mu[lab]), Fraction(nu[lab])
            if min(a, b) > 0:
                entries[(lab, lab)] = min(a, b)
            diff = a - b
            if diff > 0:
                pending[v] = ([(lab, diff)], [])
            elif diff < 0:
                pending[v] = ([], [(lab, -diff)])
            else:
                pending[v] = ([], [])
            continue
        surplus, deficit = [], []
        for c in kids:
            s, d = pending.pop(c)
            surplus.extend(s)
            deficit.extend(d)
        surplus.sort(key=lambda e: label_key(e[0]))
        deficit.sort(key=lambda e: label_key(e[0]))
        dist_p = (2.0 * float(t.height[v])) ** p
        i = j = 0
        s_left = surplus[0][1] if surplus else 0
        d_left = deficit[0][1] if deficit else 0
        while i < len(surplus) and j < len(deficit):
            amt = min(s_left, d_left)
            key = (surplus[i][0], deficit[j][0])
            entries[key] = entries.get(key, 0) + amt
            costs.append(float(amt) * dist_p)
            s_left -= amt
            d_left -= amt
            if s_left == 0:
                i += 1
                s_left = surplus[i][1] if i < len(surplus) else 0
            if d_left == 0:
                j += 1
                d_left = deficit[j][1] if j < len(deficit) else 0
        rest_s = ([(surplus[i][0], s_left)] + surplus[i + 1 :]) if i < len(surplus) else []
        rest_d = ([(deficit[j][0], d_left)] + deficit[j + 1 :]) if j < len(deficit) else []
        pending[v] = (rest_s, rest_d)
    rest_s, rest_d = pending[t.root]
    residual = sum((m for _, m in rest_s + rest_d), Fraction(0))
    return TransportPlan(entries, math.fsum(costs), p, residual)


def edge_flows(t: Srt, plan: TransportPlan) -> dict[int, object]:
    """Total plan mass crossing each edge ``(parent(v), v)`` in either direction.

    Sums in the plan's own number type, so exact plans give exact flows.
    """
    flows: dict[int, object] = {int(v): 0 for v in t.order if t.parent[v] >= 0}
    for (a, b), m in plan.entries.items():
        pa = t.ancestors(t.vertex_of(a))
        pb = t.ancestors(t.vertex_of(b))
        common = set(pa) & set(pb)
        for v in pa + pb:
            if v not in common:
                flows[v] = flows[v] + m
    return flows


# --------------------------------------------------------------------------
# exact oracle


class OracleCapError(ValueError):
    pass


def oracle_cap() -> int:
    """Point cap for the oracle; ``ULTRA_OT_CAP`` overrides the default of 64."""
    raw = os.environ.get("ULTRA_OT_CAP")
    return int(raw) if raw else DEFAULT_ORACLE_CAP


def oracle_cost(
    m: DistanceMatrix, mu: Measure, nu: Measure, p: float = 1.0, cap: int | None = None
) -> tuple[float, TransportPlan]:
    """Exact ``W_p**p`` on an arbitrary metric matrix by the transportation simplex.

    Rows and columns are restricted to the two supports; ``cap`` bounds the
    number of distinct support points.

    Raises
    ------
    OracleCapError
        If the supports together exceed ``cap`` points.
    ValueError
        If the marginals have different total mass or charge unknown points.
    """
    _check_p(p)
    cap = oracle_cap() if cap is None else cap
    src = [lab for lab in mu.support]
    tgt = [lab for lab in nu.support]
    if len(set(src) | set(tgt)) > cap:
        raise OracleCapError(f"{len(set(src) | set(tgt))} support points exceed the oracle cap {cap}")
    a = mu.on(src)
    b = nu.on(tgt)
    if abs(math.fsum(a) - math.fsum(b)) > 1e-9:
        raise ValueError("marginals have different total mass")
    ri = [m.index(x) for x in src]
    ci = [m.index(x) for x in tgt]
    cost = m.d[np.ix_(ri, ci)] ** p
    flow = solve_transportation(a, b, cost)
    entries = {}
    for i, j in zip(*np.nonzero(flow > 0)):
        entries[(src[i], tgt[j])] = float(flow[i, j])
    total = math.fsum((flow * cost).ravel())
    return total, TransportPlan(entries, total, p)


def _least_cost_start(a: np.ndarray, b: np.ndarray, cost: np.ndarray):
    """Basic feasible solution by the matrix-minimum rule.

    Every allocation closes exactly one row or column (both at the last one),
    so the m+n-1 basic cells always form a spanning tree, zeros included.
    """
    m, n = cost.shape
    x = np.zeros((m, n))
    s, d = a.astype(float).copy(), b.astype(float).copy()
    row_open = np.ones(m, dtype=bool)
    col_open = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    basis = []
    for k in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(k), n)
        if not (row_open[i] and col_open[j]):
            continue
        q = min(s[i], d[j])
        x[i, j] = q
        s[i] -= q
        d[j] -= q
        basis.append((i, j))
        if len(basis) == m + n - 1:
            break
        if (s[i] <= d[j] and rows_left > 1) or cols_left == 1:
            row_open[i] = False
            rows_left -= 1
        else:
            col_open[j] = False
            cols_left -= 1
    return x, basis


def solve_transportation(a, b, cost, max_iter: int | None = None) -> np.ndarray:
    """Minimum-cost flow matrix with row sums ``a`` and column sums ``b``.

    Transportation simplex on a spanning-tree basis (rows are nodes ``0..m-1``,
    columns ``m..m+n-1``). Dantzig pricing; after a run of degenerate pivots it
    switches to Bland's rule, which cannot cycle.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if m == 0 or n == 0:
        raise ValueError("empty marginal")
    x, basis = _least_cost_start(a, b, cost)
    adj: list[set[int]] = [set() for _ in range(m + n)]
    for i, j in basis:
        adj[i].add(m + j)
        adj[m + j].add(i)
    tol = 1e-12 * max(1.0, float(np.abs(cost).max()))
    max_iter = max_iter or 50 * (m + n) ** 2 + 1000
    degenerate = 0
    bland = False
    for _ in range(max_iter):
        u, v = _potentials(adj, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        if bland:
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if neg.size == 0:
                return x
            k = int(neg[0])
        else:
            k = int(np.argmin(reduced))
            if reduced.flat[k] >= -tol:
                return x
        i, j = divmod(k, n)
        path = _tree_path(adj, i, m + j)
        cells = [
            (path[s], path[s + 1] - m) if path[s] < m else (path[s + 1], path[s] - m)
            for s in range(len(path) - 1)
        ]
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(x[c] for c in minus)
        ties = [c for c in minus if x[c] == theta]
        leave = min(ties) if bland else ties[0]
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[i, j] += theta
        x[leave] = 0.0
        li, lj = leave
        adj[li].discard(m + lj)
        adj[m + lj].discard(li)
        adj[i].add(m + j)
        adj[m + j].add(i)
        degenerate = degenerate + 1 if theta == 0 else 0
        if degenerate > m + n:
            bland = True
    raise RuntimeError("transportation simplex did not converge")


def _potentials(adj, cost, m, n):
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if seen[b]:
                continue
            seen[b] = True
            if a < m:
                v[b - m] = cost[a, b - m] - u[a]
            else:
                u[b] = cost[b, a - m] - v[a - m]
            queue.append(b)
    return u, v


def _tree_path(adj, start: int, goal: int) -> list[int]:
    prev = {start: -1}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        if a == goal:
            break
        for b in adj[a]:
            if b not in prev:
                prev[b] = a
                queue.append(b)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()
    return path
