"""Example spaces and measure families.

Regular spaces, random dyadic ultrametrics, Frostman-type test instances, the
level-by-level branch regrouping, spread-measure and Dirac-comb families, a
space whose proper parts are small, and a countable comb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import zeta

from .rng import as_generator
from .transport import Measure, ball_masses
from .ultra_core import (
    DistanceMatrix,
    Srt,
    StructureError,
    build_srt,
    covering_number,
    grid_height,
    label_key,
    remove_ball,
    sorted_labels,
)

DEFAULT_SIZE_CAP = 1 << 20


# --------------------------------------------------------------------------
# regular spaces


@dataclass(frozen=True)
class RegularParams:
    k: int
    q: float
    depth: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("k must be an integer >= 2")
        if not self.q > 1:
            raise ValueError("q must be > 1")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError("depth must be an integer >= 1")

    @property
    def dimension(self) -> float:
        return math.log(self.k) / math.log(self.q)


def word_label(digits: Sequence[int], k: int) -> str:
    if k <= 10:
        return "".join(str(int(d)) for d in digits)
    return ".".join(str(int(d)) for d in digits)


def regular_space(params: RegularParams, cap: int = DEFAULT_SIZE_CAP) -> Srt:
    """Complete k-ary tree; depth-n vertices sit at height ``q**-n / 2``.

    Leaves are the words of length ``depth`` over ``0..k-1`` and sit at height
    0, so two words first differing at coordinate ``i`` are ``q**-i`` apart.
    """
    k, q, depth = params.k, params.q, params.depth
    if k**depth > cap:
        raise ValueError(f"{k}**{depth} leaves exceed the size cap {cap}")
    parent = [np.array([-1], dtype=np.int64)]
    height = [np.array([0.5])]
    offset = 0
    for n in range(1, depth + 1):
        count = k**n
        parent.append(offset + np.arange(count, dtype=np.int64) // k)
        offset += k ** (n - 1)
        height.append(np.full(count, grid_height(q, n) if n < depth else 0.0))
    leaves = offset + np.arange(k**depth)
    digits = np.stack([(np.arange(k**depth) // k ** (depth - 1 - i)) % k for i in range(depth)], axis=1)
    labels = {int(v): word_label(w, k) for v, w in zip(leaves, digits)}
    return Srt(np.concatenate(parent), np.concatenate(height), labels)


def regular_depths(t: Srt) -> tuple[int, float]:
    """Branching number and contraction ratio of a tree built by :func:`regular_space`."""
    k = len(t.children[t.root])
    if any(len(c) not in (0, k) for c in t.children):
        raise StructureError("tree is not regular")
    hs = [float(t.height[lv[0]]) for lv in t.levels]
    if len(hs) >= 3:
        q = hs[0] / hs[1]
    else:
        raise StructureError("need depth >= 2 to infer the contraction ratio")
    return k, q


# --------------------------------------------------------------------------
# random instances


def random_ultrametric(n: int, rng=None, top: float = 0.5) -> Srt:
    """Random tree on ``n`` leaves ``x0..x{n-1}`` with dyadic heights.

    Each ball splits into 2 to 4 random parts; a child's height is its parent's
    times ``j/8`` for a random ``j`` in 1..7, so heights are exact dyadics.
    """
    rng = as_generator(rng)
    if n < 1:
        raise ValueError("n must be positive")
    parent = [-1]
    height = [top if n > 1 else 0.0]
    labels: dict[int, str] = {}
    stack = [(0, list(range(n)))]
    while stack:
        v, pts = stack.pop()
        if len(pts) == 1:
            labels[v] = f"x{pts[0]}"
            continue
        parts = int(rng.integers(2, 5))
        parts = min(parts, len(pts))
        perm = rng.permutation(pts)
        cuts = np.sort(rng.choice(np.arange(1, len(pts)), size=parts - 1, replace=False))
        for chunk in np.split(perm, cuts):
            c = len(parent)
            parent.append(v)
            if len(chunk) == 1:
                height.append(0.0)
            else:
                height.append(height[v] * int(rng.integers(1, 8)) / 8)
            stack.append((c, [int(x) for x in chunk]))
    return build_srt(parent, height, labels)


def random_measure(
    labels: Sequence[str], rng=None, support: int | None = None, alpha: float = 1.0, bits: int = 50
) -> Measure:
    """Dirichlet weights on ``labels``, optionally on a random subset of given size.

    Weights are rounded to multiples of ``2**-bits`` (largest remainder), so
    they sum to exactly 1 and every partial sum is exact in binary.
    """
    rng = as_generator(rng)
    labels = list(labels)
    if support is not None and support < len(labels):
        labels = [labels[i] for i in sorted(rng.choice(len(labels), size=support, replace=False))]
    w = rng.dirichlet(np.full(len(labels), alpha))
    scale = 2**bits
    units = np.floor(w * scale).astype(np.int64)
    short = scale - int(units.sum())
    order = np.argsort(-(w * scale - units), kind="stable")
    units[order[:short]] += 1
    return Measure(dict(zip(labels, units / scale)))


# --------------------------------------------------------------------------
# Frostman instances and regrouping


class FrostmanError(ValueError):
    def __init__(self, vertex: int, mass: float, bound: float, ball: tuple[str, ...]):
        super().__init__(f"ball at vertex {vertex} has mass {mass!r} > {bound!r}")
        self.vertex = vertex
        self.mass = mass
        self.bound = bound
        self.ball = ball


class RegroupError(ValueError):
    def __init__(self, level: int, message: str):
        super().__init__(f"level {level}: {message}")
        self.level = level


def _split_mass(total: float, parts: int, cap: float, rng) -> np.ndarray:
    w = rng.dirichlet(np.full(parts, 4.0))
    while total * w.max() > cap:
        w = 0.5 * w + 0.5 / parts
    return total * w


def frostman_instance(k: int, s_prime: float, C: float, depth: int, rng=None) -> tuple[Srt, Measure]:
    """Random tree on the grid ``q**-n / 2`` with ``q = (3k)**(1/s')`` and a measure
    satisfying ``mu(X_v) <= C * q**(-n s')`` at every internal vertex.

    Internal vertices live on levels ``0..depth``, occasionally skipping a level;
    every leaf carries mass at most ``C * q**(-depth s')`` so that regrouping to
    ``depth`` is always possible.
    """
    rng = as_generator(rng)
    if not (C >= 1 and 3 * k > 2 * C):
        raise ValueError("need 1 <= C < 3k/2")
    q = (3 * k) ** (1.0 / s_prime)

    def cap(n: int) -> float:
        return C * q ** (-n * s_prime)

    parent = [-1]
    height = [0.5]
    labels: dict[int, str] = {}
    masses: list[float] = []
    stack = [(0, 0, 1.0)]
    while stack:
        v, n, mass = stack.pop()
        if n >= depth - 1:
            # hang leaves, sometimes through one more internal level
            if n < depth and rng.random() < 0.3:
                kids = max(2, math.ceil(1.3 * mass / cap(n + 1)))
                for m in _split_mass(mass, kids, cap(n + 1), rng):
                    c = len(parent)
                    parent.append(v)
                    height.append(grid_height(q, n + 1))
                    stack.append((c, n + 1, float(m)))
                continue
            kids = max(2, math.ceil(1.2 * mass / cap(depth)) + int(rng.integers(0, 3)))
            for m in _split_mass(mass, kids, cap(depth), rng):
                c = len(parent)
                parent.append(v)
                height.append(0.0)
                labels[c] = f"p{len(masses)}"
                masses.append(float(m))
            continue
        step = 2 if (n + 2 <= depth - 1 and rng.random() < 0.15) else 1
        m_child = n + step
        kids = max(2, math.ceil(1.2 * mass / cap(m_child)) + int(rng.integers(0, 3)))
        for m in _split_mass(mass, kids, cap(m_child), rng):
            c = len(parent)
            parent.append(v)
            height.append(grid_height(q, m_child))
            stack.append((c, m_child, float(m)))
    total = math.fsum(masses)
    t = build_srt(parent, height, labels)
    mu = Measure({lab: m / total for lab, m in zip((labels[v] for v in sorted(labels)), masses)}, atol=1e-9)
    return t, mu


@dataclass
class RegroupReport:
    """Result of :func:`regroup`.

    ``point_map`` sends each input leaf to its output leaf (a 1-Lipschitz
    surjection); ``mass_bounds[n]`` is the observed ``(min, max)`` mass of the
    level-``n`` vertices and ``windows[n]`` the required interval.
    ``fallback_levels`` lists, per level, the grouping methods used besides
    plain greedy.
    """

    output: Srt
    point_map: dict[str, str]
    min_children: int
    mass_bounds: dict[int, tuple[float, float]]
    windows: dict[int, tuple[float, float]]
    q: float
    fallback_levels: dict[int, list[str]] = field(default_factory=dict)


def _check_on_grid(t: Srt, q: float) -> np.ndarray:
    level = np.full(t.n_vertices, -1, dtype=np.int64)
    for v in range(t.n_vertices):
        h = float(t.height[v])
        if h == 0:
            continue
        n = int(round(math.log(0.5 / h) / math.log(q)))
        if n < 0 or abs(grid_height(q, n) - h) > 1e-9 * h:
            raise ValueError(f"vertex {v} height {h!r} is not on the grid q**-n/2 (q={q!r})")
        level[v] = n
    if level[t.root] != 0:
        raise ValueError("root must have height 1/2 (diameter 1)")
    return level


def frostman_check(t: Srt, mu: Measure, s_prime: float, C: float, rtol: float = 1e-9) -> None:
    """Raise :class:`FrostmanError` unless ``mu(X_v) <= C (2h(v))**s'`` at internal vertices."""
    mass = ball_masses(t, mu)
    for v in range(t.n_vertices):
        if not t.children[v]:
            continue
        bound = C * (2 * float(t.height[v])) ** s_prime
        if mass[v] > bound * (1 + rtol):
            raise FrostmanError(v, float(mass[v]), bound, t.ball(v))


def _groups_from_cuts(cuts: list[int]) -> list[list[int]]:
    return [list(range(a, b)) for a, b in zip([0] + cuts, cuts)]


def _partition(masses: list[float], lo: float, hi: float) -> tuple[list[list[int]], str] | None:
    """Split piece indices into >= 2 groups with masses in ``[lo, hi]``.

    Tries, in order: greedy runs of consecutive pieces, an exhaustive search
    over consecutive runs, and a greedy pass over the pieces by decreasing
    mass. The last one always succeeds when every piece is at most
    ``2 lo`` and the total is at least ``3 lo``: its groups stay below
    ``2 lo``, so the light remainder fits anywhere. Returns the groups and
    the method used, or ``None``.
    """
    cuts = []
    acc = 0.0
    for i, m in enumerate(masses):
        acc += m
        if acc >= lo:
            cuts.append(i + 1)
            acc = 0.0
    if cuts and cuts[-1] != len(masses):
        # a light remainder joins the last group
        cuts[-1] = len(masses)
    if len(cuts) >= 2 and all(lo <= math.fsum(masses[a:b]) <= hi for a, b in zip([0] + cuts, cuts)):
        return _groups_from_cuts(cuts), "greedy"

    # best[j]: max number of valid groups covering masses[:j]
    n = len(masses)
    prefix = np.concatenate([[0.0], np.cumsum(masses)])
    best = np.full(n + 1, -1, dtype=np.int64)
    back = np.full(n + 1, -1, dtype=np.int64)
    best[0] = 0
    for j in range(1, n + 1):
        for i in range(j - 1, -1, -1):
            s = prefix[j] - prefix[i]
            if s > hi:
                break
            if s >= lo and best[i] >= 0 and best[i] + 1 > best[j]:
                best[j] = best[i] + 1
                back[j] = i
    if best[n] >= 2:
        cuts = []
        j = n
        while j > 0:
            cuts.append(j)
            j = int(back[j])
        return _groups_from_cuts(sorted(cuts)), "consecutive-search"

    order = sorted(range(n), key=lambda i: -masses[i])
    groups: list[list[int]] = []
    sums: list[float] = []
    cur: list[int] = []
    acc = 0.0
    for i in order:
        cur.append(i)
        acc += masses[i]
        if acc >= lo:
            groups.append(cur)
            sums.append(acc)
            cur, acc = [], 0.0
    if cur:
        if not groups:
            return None
        j = min(range(len(groups)), key=sums.__getitem__)
        groups[j].extend(cur)
        sums[j] += acc
    if len(groups) < 2 or any(not lo <= math.fsum(masses[i] for i in g) <= hi for g in groups):
        return None
    return [sorted(g) for g in sorted(groups, key=min)], "by-mass"


def regroup(
    t: Srt,
    mu: Measure,
    s_prime: float,
    C: float,
    depth: int,
    k: int,
    eps: float | None = None,
) -> RegroupReport:
    """Regroup branches level by level so that every level-``n`` ball has mass in
    ``[C q**(-n s') / 2, 3 C q**(-n s') / 2]``, down to ``depth``.

    ``t`` must already sit on the grid ``q**-n / 2`` with ``q = (3k)**(1/s')``.
    At each level, the pieces hanging below a vertex (its original children, or
    itself when its next original vertex is lower, which amounts to inserting
    a degree-2 vertex) are grouped, consecutively in label order when that
    works and by decreasing mass otherwise, and each group becomes one vertex. Groups at level ``depth`` become the output leaves,
    named after their smallest input leaf.

    Raises
    ------
    FrostmanError
        If some internal ball is heavier than ``C (diam)**s'``.
    RegroupError
        If the pieces under some vertex cannot be cut into two or more groups
        inside the mass window.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not 3 * k > 2 * C:
        raise ValueError(f"need 3k > 2C (k={k}, C={C})")
    if eps is not None and not 3 * k > 3 ** (s_prime / eps):
        raise ValueError(f"need 3k > 3**(s'/eps) (k={k}, s'={s_prime}, eps={eps})")
    q = (3 * k) ** (1.0 / s_prime)
    level = _check_on_grid(t, q)
    frostman_check(t, mu, s_prime, C)
    mass = ball_masses(t, mu)
    first = [min(map(label_key, t.ball(v))) for v in range(t.n_vertices)]
    leaf_depth = depth

    def pieces(members: list[int], n: int) -> list[int]:
        # pieces at level n + 1 below a level-n group
        out = []
        for u in members:
            if t.children[u] and level[u] == n:
                out.extend(t.children[u])
            else:
                out.append(u)
        return sorted(out, key=first.__getitem__)

    out_parent = [-1]
    out_height = [0.5]
    groups = [(0, [t.root])]  # (output vertex, members)
    mass_bounds: dict[int, tuple[float, float]] = {}
    windows: dict[int, tuple[float, float]] = {}
    min_children = None
    fallback: dict[int, set[str]] = {}
    for n in range(1, leaf_depth + 1):
        c = C * q ** (-n * s_prime)
        lo, hi = 0.5 * c, 1.5 * c
        windows[n] = (lo, hi)
        tol = 1e-12 * c
        next_groups = []
        observed = []
        for gv, members in groups:
            items = pieces(members, n - 1)
            m = [float(mass[u]) for u in items]
            found = _partition(m, lo - tol, hi + tol)
            if found is None:
                raise RegroupError(
                    n, f"{len(items)} pieces of total mass {math.fsum(m)!r} cannot form two groups in [{lo!r}, {hi!r}]"
                )
            parts, method = found
            if method != "greedy":
                fallback.setdefault(n, set()).add(method)
            if n >= 2:
                min_children = len(parts) if min_children is None else min(min_children, len(parts))
            for part in parts:
                v = len(out_parent)
                out_parent.append(gv)
                out_height.append(grid_height(q, n) if n < leaf_depth else 0.0)
                next_groups.append((v, [items[i] for i in part]))
                observed.append(math.fsum(m[i] for i in part))
        mass_bounds[n] = (min(observed), max(observed))
        groups = next_groups

    point_map: dict[str, str] = {}
    out_labels: dict[int, str] = {}
    for gv, members in groups:
        pts = [x for u in members for x in t.ball(u)]
        name = min(pts, key=label_key)
        out_labels[gv] = name
        for x in pts:
            point_map[x] = name
    output = build_srt(out_parent, out_height, out_labels)
    if min_children is None:
        # depth 1: the only regrouped level below the root is the leaf level
        min_children = min(len(output.children[v]) for v in range(output.n_vertices) if output.children[v])
    used = {n: sorted(ms) for n, ms in sorted(fallback.items())}
    return RegroupReport(output, point_map, int(min_children), mass_bounds, windows, q, used)


# --------------------------------------------------------------------------
# spread measures on regular spaces


def v_prime(t: Srt) -> list[int]:
    """Non-root vertices that are not the last child of their parent."""
    out = []
    for v in t.order:
        kids = t.children[int(v)]
        out.extend(int(c) for c in kids[:-1])
    return sorted(out)


def cube_to_measure(t: Srt, eps: float, a: Mapping[int, float] | np.ndarray) -> Measure:
    """Measure splitting every ball's mass almost equally among its ``k`` children.

    The first ``k-1`` children receive ``(1 + eps*a_v)/k`` of their parent's mass and
    the last child the remainder; ``a`` is indexed by vertex (only the entries
    of :func:`v_prime` are read) with values in ``[0, 1]``.
    """
    k = len(t.children[t.root])
    if any(len(c) not in (0, k) for c in t.children):
        raise StructureError("tree is not regular")
    if not (eps > 0 and eps < 1.0 / (k - 1)):
        raise ValueError(f"eps must lie in (0, 1/(k-1)) = (0, {1.0 / (k - 1)!r})")
    if isinstance(a, Mapping):
        arr = np.zeros(t.n_vertices)
        for v, val in a.items():
            arr[int(v)] = val
        a = arr
    a = np.asarray(a, dtype=float)
    vals = a[v_prime(t)]
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("a must take values in [0, 1]")
    mass = cube_ball_masses(t, eps, a)
    return Measure({t.labels[int(v)]: float(mass[v]) for v in t.leaves}, atol=1e-9)


def cube_ball_masses(t: Srt, eps: float, a: np.ndarray) -> np.ndarray:
    """Ball masses of :func:`cube_to_measure` for one assignment ``(V,)`` or a
    batch ``(B, V)``, computed level by level."""
    a = np.asarray(a, dtype=float).T  # vertex axis first
    mass = np.zeros(a.shape)
    mass[t.root] = 1.0
    k = len(t.children[t.root])
    for level in t.levels[1:]:
        par = t.parent[level]
        last = np.array([t.children[p][-1] == v for v, p in zip(level, par)])
        head, tail = level[~last], level[last]
        mass[head] = mass[t.parent[head]] * (1 + eps * a[head]) / k
        given = np.zeros(a.shape)
        np.add.at(given, t.parent[head], mass[head])
        mass[tail] = mass[t.parent[tail]] - given[t.parent[tail]]
    return mass.T


def cube_lower_bound_terms(t: Srt, eps: float, q: float, p: float) -> tuple[list[int], np.ndarray]:
    """Vertices of :func:`v_prime` and their weights ``q**(-p n) ((1-(k-1)eps)/k)**n``."""
    k = len(t.children[t.root])
    beta = (1 - (k - 1) * eps) / k
    vs = v_prime(t)
    n = t.depth[vs]
    return vs, (q ** (-p * n)) * beta**n


def cube_constant(k: int, q: float, p: float, eps: float) -> float:
    """A provable constant for the co-Lipschitz bound of :func:`cube_to_measure`.

    From the closed form: a vertex ``v`` of depth ``n`` with parent ``w`` has
    ``eps * nu(w) |a_v - b_v| / k <= D_v + (1 + eps) D_w / k`` where ``D`` is the
    mass imbalance, and ``nu(w) >= beta**(n-1)``. Summing with the edge weights
    of depth ``n`` and absorbing the parent terms gives this constant.
    """
    beta = (1 - (k - 1) * eps) / k
    edge = 0.5 * q**p * (1 - q ** (-p))
    return edge * (eps / k) / beta / (1 + q ** (-p) * (1 + eps) * (k - 1) / k)


# --------------------------------------------------------------------------
# Dirac combs


def comb_weights(n: int, eps: float) -> np.ndarray:
    """``b_i`` proportional to ``i**-(1+eps)`` for ``i = 1..n``, summing to one."""
    b = np.arange(1, n + 1, dtype=float) ** (-(1 + eps))
    return b / math.fsum(b)


def dirac_comb_measure(points: Sequence[str], b: Sequence[float], x: Sequence[float]) -> Measure:
    """``sum_i b_i x_i delta(points[i]) + (1 - sum_i b_i x_i) delta(points[0])``, i >= 1.

    ``b`` and ``x`` have one entry per point after the first.
    """
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(b) != len(x) or len(points) < len(b) + 1:
        raise ValueError("need len(points) >= len(b) + 1 and len(x) == len(b)")
    if np.any(b <= 0):
        raise ValueError("b must be positive")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("x must lie in [0, 1]")
    moved = b * x
    total = math.fsum(moved)
    if total > 1 + 1e-12:
        raise ValueError(f"weights overflow: sum b_i x_i = {total!r} > 1")
    w = {points[0]: max(0.0, 1.0 - total)}
    for lab, m in zip(points[1:], moved):
        w[lab] = w.get(lab, 0.0) + float(m)
    return Measure(w, atol=1e-9)


def dirac_comb_lower_bound(b, x, y, radii: Sequence[float], p: float) -> float:
    """``sum_i b_i |x_i - y_i| r_{i+1}**p`` where ``radii[i]`` is the separation
    radius of ``points[i]`` (as produced by :func:`greedy_frostman_sequence`).

    Every comb point other than the first must gain or lose ``b_i |x_i - y_i|``
    and sits at distance at least its radius from all others. Mass moved
    between two comb points is charged at both ends, so only half of this sum
    is guaranteed in general.
    """
    b, x, y = (np.asarray(z, dtype=float) for z in (b, x, y))
    r = np.asarray(radii, dtype=float)[1 : len(b) + 1]
    return math.fsum(b * np.abs(x - y) * r**p)


# --------------------------------------------------------------------------
# the two concluding examples


@dataclass(frozen=True)
class SmallParts:
    """Breadth-first numbered tree whose vertex ``n`` has ``a_n`` children.

    ``number[v]`` is the 1-based breadth-first number of vertex ``v``; vertices
    numbered above ``budget`` are truncation leaves.
    """

    tree: Srt
    budget: int
    number: np.ndarray


def smallparts_children(n: int) -> int:
    return 2 if n == 1 else 2 ** (n - 1) + 1


def smallparts_space(budget: int, cap: int = DEFAULT_SIZE_CAP) -> Srt:
    """Tree in which vertex ``n`` (breadth-first, from 1) has ``a_n`` children and
    height ``2**(1-n)``, with ``a_1 = 2`` and ``a_n = 2**(n-1) + 1``.

    Vertices numbered above ``budget`` become height-0 leaves ``v{n}``; the
    tree's vertex ``v`` is number ``v + 1``. Covering numbers at ``2**-n`` are
    exactly ``2**n`` for ``n <= budget``.
    """
    return smallparts(budget, cap).tree


def smallparts(budget: int, cap: int = DEFAULT_SIZE_CAP) -> SmallParts:
    if budget < 2:
        raise ValueError("budget must be >= 2 (depth-2 truncation)")
    total = 1 + sum(smallparts_children(n) for n in range(1, budget + 1))
    if total > cap:
        raise ValueError(f"{total} vertices exceed the size cap {cap}")
    parent = np.full(total, -1, dtype=np.int64)
    nxt = 1
    for n in range(1, budget + 1):
        a = smallparts_children(n)
        parent[nxt : nxt + a] = n - 1
        nxt += a
    number = np.arange(1, total + 1)
    height = np.where(number <= budget, 2.0 ** (1 - number.astype(float)), 0.0)
    labels = {int(v): f"v{v + 1}" for v in range(budget, total)}
    return SmallParts(Srt(parent, height, labels), budget, number)


def matched_scales(budget: int, removed: int) -> list[tuple[int, int]]:
    """Scales ``2**-m`` adapted to the removal of the ball at vertex number ``removed``.

    For each descendant ``k`` of the removed vertex, ``m = k + 1 + 2**k`` is the
    scale at which the children of ``k`` are resolved. Only scales at which the
    truncated remainder is still exact are returned, as ``(k, m)`` pairs.
    """
    sp = smallparts(budget)
    t = sp.tree
    v = removed - 1
    inside = set()
    stack = [v]
    while stack:
        u = stack.pop()
        inside.add(u)
        stack.extend(t.children[u])
    # first truncation leaf that survives the removal
    resolved = min((int(u) + 1 for u in range(budget, t.n_vertices) if u not in inside), default=None)
    out = []
    for u in sorted(inside):
        k = u + 1
        if k == removed or k > budget:
            continue
        m = k + 1 + 2**k
        if resolved is None or m < resolved:
            out.append((k, m))
    return out


def smallparts_removed_curve(budget: int, removed: int) -> tuple[Srt, list[tuple[int, int, int]]]:
    """The space minus the ball at vertex number ``removed`` and its covering counts
    ``(k, m, N(2**-m))`` at the matched scales."""
    t = smallparts_space(budget)
    rest = remove_ball(t, removed - 1)
    rows = [(k, m, covering_number(rest, 2.0**-m)) for k, m in matched_scales(budget, removed)]
    return rest, rows


def countable_example(n: int) -> tuple[DistanceMatrix, Srt]:
    """Points ``w1..wN`` with ``d(w_i, w_j) = 1/(1 + ln min(i, j))``.

    The tree is a comb: ``v_i`` (height ``1/(2(1 + ln i))``) has children ``w_i``
    and ``v_{i+1}``; ``v_1`` is the root and ``v_{N-1}`` carries ``w_{N-1}`` and
    ``w_N``. The last point stands in for the accumulation point.
    """
    if n < 2:
        raise ValueError("N must be >= 2")
    idx = np.arange(1, n + 1)
    dist = 1.0 / (1.0 + np.log(idx.astype(float)))
    d = dist[np.minimum.outer(idx, idx) - 1]
    np.fill_diagonal(d, 0.0)
    labels = [f"w{i}" for i in idx]
    m = DistanceMatrix(labels, d, tol=0.0)

    # vertices: v_1..v_{N-1} are 0..N-2, then leaves w_1..w_N
    nv = (n - 1) + n
    parent = np.full(nv, -1, dtype=np.int64)
    height = np.zeros(nv)
    for i in range(1, n):
        v = i - 1
        height[v] = 0.5 * dist[i - 1]
        if i > 1:
            parent[v] = v - 1
        parent[(n - 1) + (i - 1)] = v
    parent[(n - 1) + (n - 1)] = n - 2
    tlabels = {(n - 1) + (i - 1): f"w{i}" for i in idx}
    return m, Srt(parent, height, tlabels)


def countable_lower_bound(mu: Measure, nu: Measure, n: int, p: float) -> float:
    """``sum_{i < N} (1 + ln i)**-p |mu(w_i) - nu(w_i)|`` (the last point excluded)."""
    terms = [(1 + math.log(i)) ** (-p) * abs(mu[f"w{i}"] - nu[f"w{i}"]) for i in range(1, n)]
    return math.fsum(terms)


# --------------------------------------------------------------------------
# separated sequences


@dataclass(frozen=True)
class SequencePoint:
    label: str
    radius: float


def _frostman_check_matrix(m: DistanceMatrix, mu: Measure, d2: float, C1: float) -> None:
    w = mu.on(m.labels)
    for i in np.flatnonzero(w > 0):
        order = np.argsort(m.d[i], kind="stable")
        dist = m.d[i][order]
        cum = np.cumsum(w[order])
        # closed balls: mass up to the last point at each distance
        last = np.r_[dist[1:] != dist[:-1], True]
        r, mass = dist[last], cum[last]
        pos = r > 0
        bad = mass[pos] > C1 * r[pos] ** d2 * (1 + 1e-9)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"Frostman bound fails at {m.labels[i]}, r={r[pos][j]!r}: mass {mass[pos][j]!r}"
            )


def greedy_frostman_sequence(space, mu: Measure, d2: float, C1: float, eps: float) -> list[SequencePoint]:
    """Points ``q_1, q_2, ...`` with ``d(q_i, q_j) >= r_i`` for ``i < j``.

    ``r_i = (a_i / C1)**(1/d2)`` with ``a_i = i**-(1+eps) / zeta(1+eps)``. Each new
    point is the smallest-label support point outside the open balls
    ``B(q_i, r_i)`` chosen so far; the construction stops when none is left.
    ``space`` is an :class:`Srt` or a :class:`DistanceMatrix`; ``mu`` must satisfy
    ``mu(B(x, r)) <= C1 r**d2`` on closed balls around support points.
    """
    if not (d2 > 0 and C1 > 0 and eps > 0):
        raise ValueError("d2, C1 and eps must be positive")
    c2 = 1.0 / float(zeta(1 + eps))
    support = sorted_labels(mu.support)

    def radius(i: int) -> float:
        return (c2 * i ** (-(1 + eps)) / C1) ** (1.0 / d2)

    out: list[SequencePoint] = []
    if isinstance(space, Srt):
        t = space
        frostman_check_tree(t, mu, d2, C1)
        alive = np.zeros(t.n_leaves, dtype=bool)
        for lab in support:
            alive[t.leaf_position(lab)] = True
        for lab in support:
            pos = t.leaf_position(lab)
            if not alive[pos]:
                continue
            r = radius(len(out) + 1)
            out.append(SequencePoint(lab, r))
            # the open ball of radius r is the largest ball X_v with 2h(v) < r
            v = t.vertex_of(lab)
            while t.parent[v] >= 0 and 2 * t.height[t.parent[v]] < r:
                v = int(t.parent[v])
            s, e = t.span(v)
            alive[s:e] = False
        return out

    m = space
    _frostman_check_matrix(m, mu, d2, C1)
    alive = np.zeros(m.n, dtype=bool)
    for lab in support:
        alive[m.index(lab)] = True
    for lab in support:
        i = m.index(lab)
        if not alive[i]:
            continue
        r = radius(len(out) + 1)
        out.append(SequencePoint(lab, r))
        alive &= ~(m.d[i] < r)
    return out


def frostman_check_tree(t: Srt, mu: Measure, d2: float, C1: float) -> None:
    """Closed balls around leaves are the ``X_v``; check ``mu(X_v) <= C1 (2h(v))**d2``."""
    mass = ball_masses(t, mu)
    for v in range(t.n_vertices):
        if t.children[v] and mass[v] > C1 * (2 * float(t.height[v])) ** d2 * (1 + 1e-9):
            raise FrostmanError(v, float(mass[v]), C1 * (2 * float(t.height[v])) ** d2, t.ball(v))
