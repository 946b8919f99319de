"""Finite ultrametric spaces as distance matrices and as synchronized rooted trees.

Heights follow the convention ``diam(X_v) = 2 * h(v)``, so the distance between
two leaves is twice the height of their lowest common ancestor.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_TOL = 1e-9

_DIGITS = re.compile(r"(\d+)")


def label_key(label: str) -> tuple:
    """Natural sort key: digit runs compare numerically ("w2" < "w10")."""
    parts = _DIGITS.split(label)
    return tuple((0, int(p), p) if p.isdigit() else (1, 0, p) for p in parts if p)


def sorted_labels(labels: Iterable[str]) -> list[str]:
    return sorted(labels, key=label_key)


class StructureError(ValueError):
    """Malformed input: asymmetric, negative, or non-tree data."""


@dataclass(frozen=True)
class Violation:
    """A triple with ``d(x, z) > max(d(x, y), d(y, z)) + tol``."""

    x: str
    y: str
    z: str
    dxy: float
    dyz: float
    dxz: float

    def __str__(self) -> str:
        return (
            f"d({self.x},{self.z})={self.dxz!r} > max(d({self.x},{self.y})={self.dxy!r}, "
            f"d({self.y},{self.z})={self.dyz!r})"
        )


class UltrametricError(ValueError):
    def __init__(self, violation: Violation):
        super().__init__(f"not ultrametric: {violation}")
        self.violation = violation


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class DistanceMatrix:
    """A finite metric space given by a symmetric matrix with point labels."""

    def __init__(self, labels: Sequence[str], d, tol: float = DEFAULT_TOL):
        labels = tuple(str(x) for x in labels)
        d = np.array(d, dtype=float)
        n = len(labels)
        if d.shape != (n, n):
            raise StructureError(f"matrix shape {d.shape} does not match {n} labels")
        if len(set(labels)) != n:
            raise StructureError("duplicate labels")
        if n and not np.all(np.isfinite(d)):
            raise StructureError("non-finite entries")
        if np.any(d < 0):
            raise StructureError("negative entries")
        scale = tol * max(float(d.max()) if n else 0.0, 1.0)
        if np.any(np.abs(d - d.T) > scale):
            i, j = np.unravel_index(np.argmax(np.abs(d - d.T)), d.shape)
            raise StructureError(f"asymmetric at ({labels[i]},{labels[j]})")
        if np.any(np.diag(d) != 0):
            raise StructureError("nonzero diagonal")
        off = d + np.eye(n)
        if n > 1 and np.any(off <= 0):
            i, j = np.argwhere(off <= 0)[0]
            raise StructureError(f"zero distance between distinct points {labels[i]}, {labels[j]}")
        d = (d + d.T) / 2
        self.labels = labels
        self.d = _readonly(d)

    @property
    def n(self) -> int:
        return len(self.labels)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown point {label!r}") from None

    def diameter(self) -> float:
        return float(self.d.max()) if self.n else 0.0

    def reorder(self, labels: Sequence[str]) -> "DistanceMatrix":
        idx = [self.index(x) for x in labels]
        return DistanceMatrix(labels, self.d[np.ix_(idx, idx)])

    def __repr__(self) -> str:
        return f"DistanceMatrix(n={self.n})"


# --------------------------------------------------------------------------
# synchronized rooted trees


class Srt:
    """Synchronized rooted tree with labelled height-0 leaves.

    Vertices are the integers ``0 .. V-1``. ``parent[root] == -1``. Every
    childless vertex is a leaf with height 0 and a label, heights strictly
    decrease from parent to child and every internal vertex has at least two
    children. The one exception is a single-point space, whose root is its
    only leaf.

    Instances are immutable; derived structure is computed lazily and cached.
    """

    def __init__(self, parent, height, labels: Mapping[int, str]):
        parent = np.asarray(parent, dtype=np.int64).copy()
        height = np.asarray(height, dtype=float).copy()
        nv = len(parent)
        if height.shape != (nv,) or nv == 0:
            raise StructureError("parent and height must be non-empty and of equal length")
        roots = np.flatnonzero(parent < 0)
        if len(roots) != 1:
            raise StructureError(f"expected one root, found {len(roots)}")
        if np.any(parent >= nv):
            raise StructureError("parent index out of range")
        if not np.all(np.isfinite(height)) or np.any(height < 0):
            raise StructureError("heights must be finite and nonnegative")
        self.root = int(roots[0])
        self.parent = _readonly(parent)
        self.height = _readonly(height)

        kids: list[list[int]] = [[] for _ in range(nv)]
        for v, p in enumerate(parent):
            if p >= 0:
                kids[p].append(v)
        self.children = tuple(tuple(c) for c in kids)

        order = [self.root]
        for v in order:
            order.extend(self.children[v])
        if len(order) != nv:
            raise StructureError("parent links do not form a tree rooted at the root")
        self.order = _readonly(np.array(order, dtype=np.int64))

        nonroot = parent >= 0
        if np.any(height[nonroot] >= height[parent[nonroot]]):
            v = int(np.flatnonzero(nonroot & (height >= height[np.maximum(parent, 0)]))[0])
            raise StructureError(f"height does not decrease on edge {int(parent[v])}->{v}")

        labels = {int(v): str(lab) for v, lab in labels.items()}
        childless = {v for v in range(nv) if not kids[v]}
        if set(labels) != childless:
            raise StructureError("labels must be given for exactly the childless vertices")
        if len(set(labels.values())) != len(labels):
            raise StructureError("duplicate leaf labels")
        if any(height[v] != 0 for v in childless):
            raise StructureError("leaves must have height 0")
        if nv > 1 and any(len(k) == 1 for k in kids):
            v = next(i for i, k in enumerate(kids) if len(k) == 1)
            raise StructureError(f"vertex {v} has a single child")
        self.labels = labels

    # -- basic accessors ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.parent)

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    @cached_property
    def _dfs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Leaves in depth-first order plus each vertex's leaf span [start, stop)."""
        nv = self.n_vertices
        start = np.zeros(nv, dtype=np.int64)
        stop = np.zeros(nv, dtype=np.int64)
        leaves: list[int] = []
        stack = [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                stop[v] = len(leaves)
                continue
            start[v] = len(leaves)
            if not self.children[v]:
                leaves.append(v)
                stop[v] = len(leaves)
                continue
            stack.append((v, True))
            for c in reversed(self.children[v]):
                stack.append((c, False))
        return _readonly(np.array(leaves, dtype=np.int64)), _readonly(start), _readonly(stop)

    @property
    def leaves(self) -> np.ndarray:
        """Leaf vertices in depth-first order; every ball is a contiguous run."""
        return self._dfs[0]

    @cached_property
    def leaf_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[int(v)] for v in self.leaves)

    @cached_property
    def _leaf_pos(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.leaf_labels)}

    def leaf_position(self, label: str) -> int:
        try:
            return self._leaf_pos[label]
        except KeyError:
            raise KeyError(f"unknown leaf {label!r}") from None

    def vertex_of(self, label: str) -> int:
        return int(self.leaves[self.leaf_position(label)])

    def span(self, v: int) -> tuple[int, int]:
        _, start, stop = self._dfs
        return int(start[v]), int(stop[v])

    def ball(self, v: int) -> tuple[str, ...]:
        """Labels of the leaves below ``v`` (the ball X_v)."""
        s, e = self.span(v)
        return self.leaf_labels[s:e]

    @cached_property
    def depth(self) -> np.ndarray:
        dep = np.zeros(self.n_vertices, dtype=np.int64)
        for v in self.order[1:]:
            dep[v] = dep[self.parent[v]] + 1
        return _readonly(dep)

    @cached_property
    def levels(self) -> tuple[np.ndarray, ...]:
        """Vertices grouped by combinatorial depth (root first)."""
        dep = self.depth
        return tuple(_readonly(np.flatnonzero(dep == k)) for k in range(int(dep.max()) + 1))

    @property
    def diameter(self) -> float:
        return 2.0 * float(self.height[self.root])

    def ancestors(self, v: int) -> list[int]:
        """``v`` followed by its ancestors up to the root."""
        out = [v]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out

    def lca(self, u: int, v: int) -> int:
        du, dv = self.depth[u], self.depth[v]
        while du > dv:
            u, du = int(self.parent[u]), du - 1
        while dv > du:
            v, dv = int(self.parent[v]), dv - 1
        while u != v:
            u, v = int(self.parent[u]), int(self.parent[v])
        return u

    def leaf_values(self, weights: Mapping[str, float]) -> np.ndarray:
        """Vertex-indexed array holding ``weights`` on the leaves, 0 elsewhere."""
        out = np.zeros(self.n_vertices)
        for lab, w in weights.items():
            out[self.vertex_of(lab)] = w
        return out

    def subtree_sums(self, values: np.ndarray) -> np.ndarray:
        """Aggregate vertex values bottom-up: result[v] = sum over the subtree of v."""
        out = np.array(values, dtype=float, copy=True)
        for level in reversed(self.levels[1:]):
            np.add.at(out, self.parent[level], out[level])
        return out

    def __repr__(self) -> str:
        return f"Srt(vertices={self.n_vertices}, leaves={self.n_leaves}, height={float(self.height[self.root])!r})"


def build_srt(parent: Sequence[int], height: Sequence[float], labels: Mapping[int, str]) -> Srt:
    """Build an Srt, splicing out single-child vertices and renumbering breadth-first.

    Children are ordered by the natural order of the smallest label they contain.
    A spliced vertex is replaced by its child, which keeps its own height: the
    ball of the pair is the child's ball.
    """
    parent = list(parent)
    nv = len(parent)
    kids: list[list[int]] = [[] for _ in range(nv)]
    root = -1
    for v, p in enumerate(parent):
        if p < 0:
            root = v
        else:
            kids[p].append(v)

    def skip(v: int) -> int:
        while len(kids[v]) == 1:
            v = kids[v][0]
        return v

    # smallest label key per vertex, bottom-up
    order = [root]
    for v in order:
        order.extend(kids[v])
    first: dict[int, tuple] = {}
    for v in reversed(order):
        if kids[v]:
            first[v] = min(first[c] for c in kids[v])
        else:
            first[v] = label_key(labels[v])

    new_parent: list[int] = []
    new_height: list[float] = []
    new_labels: dict[int, str] = {}
    queue = [(skip(root), -1)]
    for v, p in queue:
        nid = len(new_parent)
        new_parent.append(p)
        new_height.append(float(height[v]))
        if not kids[v]:
            new_labels[nid] = labels[v]
        for c in sorted((skip(c) for c in kids[v]), key=first.__getitem__):
            queue.append((c, nid))
    return Srt(new_parent, new_height, new_labels)


def check_srt(t: Srt) -> list[str]:
    """Re-verify every Srt invariant; returns a list of problems (empty when valid)."""
    problems = []
    h, par = t.height, t.parent
    for v in range(t.n_vertices):
        if v != t.root and not h[v] < h[par[v]]:
            problems.append(f"height not decreasing at {v}")
        if not t.children[v]:
            if h[v] != 0:
                problems.append(f"leaf {v} has height {h[v]}")
            if v not in t.labels:
                problems.append(f"leaf {v} unlabelled")
        elif len(t.children[v]) < 2:
            problems.append(f"vertex {v} has one child")
    if t.n_vertices > 1 and t.root in t.labels:
        problems.append("root is a leaf")
    m = matrix_from_srt(t)
    if validate_ultrametric(m, tol=0.0) is not None:
        problems.append("leaf distances are not ultrametric")
    return problems


# --------------------------------------------------------------------------
# matrix <-> tree


def _mst(d: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's algorithm on a dense matrix; O(n^2)."""
    n = len(d)
    if n < 2:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].astype(float).copy()
    src = np.zeros(n, dtype=np.int64)
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        j = int(np.argmin(best))
        edges.append((int(src[j]), j, float(d[src[j], j])))
        in_tree[j] = True
        closer = d[j] < best
        src[closer] = j
        best = np.where(closer, d[j], best)
        best[in_tree] = np.inf
    return edges


def subdominant_ultrametric(m: DistanceMatrix) -> tuple[np.ndarray, list[tuple[int, int, float]]]:
    """Largest ultrametric below ``m`` (single-linkage cophenetic matrix) and the MST used."""
    n = m.n
    edges = sorted(_mst(m.d), key=lambda e: (e[2], e[0], e[1]))
    u = np.zeros((n, n))
    members = {i: [i] for i in range(n)}
    root = list(range(n))

    def find(i: int) -> int:
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    for a, b, w in edges:
        ra, rb = find(a), find(b)
        A, B = members.pop(ra), members.pop(rb)
        u[np.ix_(A, B)] = w
        u[np.ix_(B, A)] = w
        root[rb] = ra
        members[ra] = A + B
    return u, edges


def _abs_tol(m: DistanceMatrix, tol: float) -> float:
    return tol * m.diameter()


def validate_ultrametric(m: DistanceMatrix, tol: float = DEFAULT_TOL) -> Violation | None:
    """Check ``d(x,z) <= max(d(x,y), d(y,z)) + tol * diam`` for every triple.

    Returns ``None`` when the inequality holds everywhere, otherwise one
    violating triple. ``tol=0`` gives an exact check. Runs in O(n^2) when the
    matrix is ultrametric, by comparing with its single-linkage closure; the
    cubic search only runs to extract a witness.
    """
    if m.n < 3:
        return None
    tau = _abs_tol(m, tol)
    d = m.d
    u, edges = subdominant_ultrametric(m)
    excess = d - u
    if excess.max() <= tau:
        return None

    # walk the MST path between the worst pair
    x, z = np.unravel_index(np.argmax(excess), excess.shape)
    adj: dict[int, list[int]] = {}
    for a, b, _ in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    prev = {int(x): -1}
    queue = [int(x)]
    for v in queue:
        for w in adj.get(v, ()):
            if w not in prev:
                prev[w] = v
                queue.append(w)
    path = [int(z)]
    while path[-1] != x:
        path.append(prev[path[-1]])
    path.reverse()
    for y, w in zip(path[1:-1], path[2:]):
        if d[x, w] > max(d[x, y], d[y, w]) + tau:
            return _violation(m, int(x), int(y), int(w))
    return _brute_force_violation(m, tau)


def _violation(m: DistanceMatrix, x: int, y: int, z: int) -> Violation:
    d = m.d
    lab = m.labels
    return Violation(lab[x], lab[y], lab[z], float(d[x, y]), float(d[y, z]), float(d[x, z]))


def _brute_force_violation(m: DistanceMatrix, tau: float) -> Violation | None:
    d = m.d
    for y in range(m.n):
        # bound[x, z] = max(d[x, y], d[y, z])
        bound = np.maximum.outer(d[:, y], d[y, :])
        bad = d > bound + tau
        if bad.any():
            x, z = np.argwhere(bad)[0]
            return _violation(m, int(x), y, int(z))
    return None


def srt_from_matrix(m: DistanceMatrix, tol: float = DEFAULT_TOL) -> Srt:
    """Build the tree of balls of an ultrametric matrix.

    Points are merged bottom-up along the minimum spanning tree (union-find);
    merges whose diameters agree within ``tol * diam`` are combined into one
    vertex, so every vertex's children are the maximal proper sub-balls.

    Raises
    ------
    UltrametricError
        If the matrix violates the ultrametric inequality; carries the witness.
    """
    bad = validate_ultrametric(m, tol)
    if bad is not None:
        raise UltrametricError(bad)
    n = m.n
    if n == 0:
        raise StructureError("empty space")
    if n == 1:
        return Srt([-1], [0.0], {0: m.labels[0]})
    tau = _abs_tol(m, tol)
    parent = [-1] * n
    height = [0.0] * n
    kids: dict[int, list[int]] = {}
    top = list(range(n))
    root = list(range(n))

    def find(i: int) -> int:
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    edges = sorted(_mst(m.d), key=lambda e: (e[2], e[0], e[1]))
    for a, b, w in edges:
        ra, rb = find(a), find(b)
        h = w / 2
        children: list[int] = []
        for t in (top[ra], top[rb]):
            if t in kids and height[t] >= h - tau / 2:
                children.extend(kids.pop(t))
                h = max(h, height[t])
            else:
                children.append(t)
        v = len(parent)
        parent.append(-1)
        height.append(h)
        kids[v] = children
        for c in children:
            parent[c] = v
        root[rb] = ra
        top[ra] = v

    # dissolved vertices are unreachable; compact the arrays
    alive = [v for v in range(len(parent)) if v < n or v in kids]
    remap = {v: i for i, v in enumerate(alive)}
    new_parent = [remap[parent[v]] if parent[v] >= 0 else -1 for v in alive]
    new_height = [height[v] for v in alive]
    labels = {remap[i]: m.labels[i] for i in range(n)}
    return build_srt(new_parent, new_height, labels)


def matrix_from_srt(t: Srt, labels: Sequence[str] | None = None) -> DistanceMatrix:
    """Leaf distance matrix ``d(x, y) = 2 h(lca(x, y))``.

    Fills one block per (vertex, child) pair, so the cost is O(n^2) even for
    deep combs.
    """
    n = t.n_leaves
    d = np.zeros((n, n))
    h = t.height
    _, start, stop = t._dfs
    for v in t.order:
        kids = t.children[v]
        if not kids:
            continue
        s, e = start[v], stop[v]
        val = 2.0 * h[v]
        for c in kids:
            cs, ce = start[c], stop[c]
            d[cs:ce, s:cs] = val
            d[cs:ce, ce:e] = val
    m = DistanceMatrix(t.leaf_labels, d, tol=0.0)
    if labels is not None:
        m = m.reorder(labels)
    return m


def distance_row(t: Srt, x: str) -> np.ndarray:
    """Distances from ``x`` to every leaf, in depth-first leaf order."""
    row = np.zeros(t.n_leaves)
    _, start, stop = t._dfs
    path = t.ancestors(t.vertex_of(x))
    # fill from the root down so deeper balls overwrite
    for v in reversed(path[1:]):
        row[start[v] : stop[v]] = 2.0 * t.height[v]
    row[t.leaf_position(x)] = 0.0
    return row


def lca_distance(t: Srt, x: str, y: str) -> float:
    """Distance between two leaves, ``2 h(lca(x, y))``."""
    if x == y:
        t.vertex_of(x)
        return 0.0
    return 2.0 * float(t.height[t.lca(t.vertex_of(x), t.vertex_of(y))])


# --------------------------------------------------------------------------
# heights and balls


def grid_height(q: float, n: int) -> float:
    """The height ``q**-n / 2`` of level ``n`` of the geometric grid."""
    return 0.5 * q ** (-n)


def grid_level(h: float, q: float) -> int:
    """Smallest-height grid level whose height is still >= ``h`` (``0 < h <= 1/2``)."""
    n = max(0, math.floor(math.log(0.5 / h) / math.log(q)))
    while n > 0 and grid_height(q, n) < h:
        n -= 1
    while grid_height(q, n + 1) >= h:
        n += 1
    return n


def quantize_heights(t: Srt, q: float) -> Srt:
    """Round every positive height up to the grid ``{q**-n / 2}``.

    Leaf distances become ``d'`` with ``d <= d' < q d``. A child whose new
    height equals its parent's is merged into the parent.

    Raises
    ------
    ValueError
        If ``q <= 1`` or the diameter exceeds 1.
    """
    if not q > 1:
        raise ValueError(f"q must be > 1, got {q}")
    if t.diameter > 1:
        raise ValueError(f"diameter {t.diameter} > 1; rescale first")
    new_h = np.array([grid_height(q, grid_level(h, q)) if h > 0 else 0.0 for h in t.height])
    rep = np.arange(t.n_vertices)
    for v in t.order[1:]:
        p = t.parent[v]
        if new_h[v] == new_h[p]:
            rep[v] = rep[p]
    kept = [int(v) for v in t.order if rep[v] == v]
    remap = {v: i for i, v in enumerate(kept)}
    parent = [remap[int(rep[t.parent[v]])] if t.parent[v] >= 0 else -1 for v in kept]
    labels = {remap[v]: lab for v, lab in t.labels.items()}
    return build_srt(parent, new_h[kept], labels)


def covering_partition(t: Srt, eps: float) -> list[tuple[str, ...]]:
    """Coarsest partition into balls of diameter <= 2*eps (maximal X_v with h(v) <= eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    blocks = []
    stack = [t.root]
    while stack:
        v = stack.pop()
        if t.height[v] <= eps:
            blocks.append(t.ball(v))
        else:
            stack.extend(reversed(t.children[v]))
    return blocks


def covering_number(t: Srt, eps: float) -> int:
    """Block count of :func:`covering_partition`, computed in one vectorized pass."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    h = t.height
    if h[t.root] <= eps:
        return 1
    par = t.parent
    nonroot = par >= 0
    return int(np.count_nonzero(nonroot & (h <= eps) & (h[np.where(nonroot, par, 0)] > eps)))


def restrict(t: Srt, keep: Iterable[str]) -> Srt:
    """Subspace on the given leaves, with single-child vertices spliced out."""
    keep = set(keep)
    if not keep:
        raise ValueError("cannot restrict to an empty set")
    unknown = keep - set(t.leaf_labels)
    if unknown:
        raise KeyError(f"unknown leaves {sorted_labels(unknown)[:5]}")
    alive = np.zeros(t.n_vertices, dtype=bool)
    for lab in keep:
        alive[t.vertex_of(lab)] = True
    for level in reversed(t.levels[1:]):
        np.logical_or.at(alive, t.parent[level], alive[level])
    kept = [int(v) for v in t.order if alive[v]]
    remap = {v: i for i, v in enumerate(kept)}
    parent = [remap[int(t.parent[v])] if t.parent[v] >= 0 else -1 for v in kept]
    labels = {remap[v]: t.labels[v] for v in kept if v in t.labels}
    return build_srt(parent, t.height[kept], labels)


def remove_ball(t: Srt, v: int) -> Srt:
    """The closed subset X minus X_v."""
    inside = set(t.ball(v))
    return restrict(t, (x for x in t.leaf_labels if x not in inside))


def rescale(t: Srt, factor: float) -> Srt:
    if not factor > 0:
        raise ValueError("factor must be positive")
    return Srt(t.parent, t.height * factor, t.labels)
