import random
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, settings, strategies as st

from ultra_ot.generators import random_measure, random_ultrametric
from ultra_ot.rng import stream

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def nested_matrix(seed: int, n: int, top: float = 0.5):
    """Ultrametric by recursive random splitting, written without the package.

    Returns ``(labels, d)`` with ``d`` a list of lists; ``d(x, y)`` is twice
    the height of the split that separates ``x`` and ``y``.
    """
    r = random.Random(seed)
    labels = [f"x{i}" for i in range(n)]
    d = [[0.0] * n for _ in range(n)]

    def split(idx, h):
        if len(idx) < 2:
            return
        r.shuffle(idx)
        parts = r.randint(2, min(4, len(idx)))
        cuts = sorted(r.sample(range(1, len(idx)), parts - 1))
        groups = [idx[a:b] for a, b in zip([0] + cuts, cuts + [len(idx)])]
        for gi, g in enumerate(groups):
            for hj in groups[gi + 1:]:
                for x in g:
                    for y in hj:
                        d[x][y] = d[y][x] = 2 * h
        for g in groups:
            split(list(g), h * r.choice([0.25, 0.5, 0.75]))

    split(list(range(n)), top)
    return labels, d


def dyadic_weights(seed: int, labels, bits: int = 20) -> dict:
    """Random weights on the grid 2**-bits summing to exactly one."""
    r = random.Random(seed)
    cuts = sorted(r.randrange(0, 2**bits + 1) for _ in range(len(labels) - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [2**bits])]
    return {lab: Fraction(p, 2**bits) for lab, p in zip(labels, parts)}


@st.composite
def tree_and_measures(draw, lo=2, hi=12, count=2):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(lo, hi))
    rng = stream(seed)
    t = random_ultrametric(n, rng)
    ms = [random_measure(t.leaf_labels, rng, support=int(rng.integers(1, n + 1))) for _ in range(count)]
    return (t, *ms)


def brute_blocks(labels, d, eps):
    """Classes of the relation ``d <= 2 eps`` by union-find."""
    n = len(labels)
    par = list(range(n))

    def find(i):
        while par[i] != i:
            par[i] = par[par[i]]
            i = par[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if d[i][j] <= 2 * eps:
                par[find(i)] = find(j)
    return len({find(i) for i in range(n)})


def as_array(d):
    return np.array(d, dtype=float)


def lipschitz_violations(t, out, point_map):
    """Pairs ``(x, y)`` with ``d_out(f x, f y) > d_in(x, y)``, checked row by row."""
    from ultra_ot.ultra_core import distance_row

    pos_out = {x: i for i, x in enumerate(out.leaf_labels)}
    img = np.array([pos_out[point_map[x]] for x in t.leaf_labels])
    bad = 0
    for i, x in enumerate(t.leaf_labels):
        d_in = distance_row(t, x)
        d_out = distance_row(out, point_map[x])[img]
        bad += int(np.count_nonzero(d_out > d_in))
    return bad
