import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultra_ot.dimension_lab import (
    CoveringCurve,
    CubeParams,
    ball_hits,
    banach_cube_ball_mass,
    banach_cube_cover_count,
    covering_curve,
    crit_slope,
    cube_cover_curve,
    cube_truncation,
    fit_ball_exponent,
    greedy_cover_count,
    minkowski_slope,
    spacing_constant,
    tail_sum,
)
from ultra_ot.generators import RegularParams, random_ultrametric, regular_space
from ultra_ot.rng import stream
from ultra_ot.ultra_core import matrix_from_srt


def test_regular_minkowski_slope():
    for k, q in [(2, 2), (3, 3), (2, 3), (4, 2)]:
        t = regular_space(RegularParams(k, q, 6 if k < 4 else 5))
        c = covering_curve(t, [q ** -j for j in range(1, 5)])
        assert minkowski_slope(c) == pytest.approx(math.log(k) / math.log(q), rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.floats(0.001, 0.6))
def test_greedy_count_equals_tree_count_on_ultrametrics(seed, n, eps):
    t = random_ultrametric(n, stream(seed))
    from ultra_ot.ultra_core import covering_number
    assert greedy_cover_count(matrix_from_srt(t), eps) == covering_number(t, eps)


def test_curve_validation():
    with pytest.raises(ValueError, match="decreasing"):
        CoveringCurve((0.1, 0.2), (1.0, 2.0), "x")
    with pytest.raises(ValueError, match="decrease"):
        CoveringCurve((0.2, 0.1), (2.0, 1.0), "x")
    with pytest.raises(ValueError):
        covering_curve(regular_space(RegularParams(2, 2, 3)), [0.5, -1])


def test_slope_window_too_small():
    t = regular_space(RegularParams(2, 2, 6))
    c = covering_curve(t, [2.0**-j for j in range(1, 6)])
    with pytest.raises(ValueError, match="degenerate"):
        minkowski_slope(c, (0, 2))
    assert minkowski_slope(c, slice(1, 5)) == pytest.approx(1.0)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_crit_slope_recovers_power_exponential(s):
    eps = tuple(2.0**-j for j in range(2, 14))
    logs = tuple(e ** -s for e in eps)
    est = crit_slope(CoveringCurve(eps, logs, "synthetic", exact=False))
    assert est.slope == pytest.approx(s, rel=1e-12)
    assert not est.flagged


def test_crit_slope_flags_polynomial_growth():
    t = regular_space(RegularParams(2, 2, 14))
    c = covering_curve(t, [2.0**-j for j in range(2, 14)])
    assert crit_slope(c).flagged
    c1 = covering_curve(t, [0.6, 0.55, 0.52])
    est = crit_slope(c1)
    assert est.flagged and math.isnan(est.slope)


def test_spacing_constant():
    c = spacing_constant()
    n = np.arange(1, 10**6 + 1, dtype=float)
    partial = math.fsum(1 / (c * n * np.log(n + 1) ** 2))
    assert partial <= 0.5
    assert partial > 0.5 - 1 / (c * math.log(10**6)) - 1e-12


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_truncation_is_minimal(alpha):
    for eps in (0.3, 0.05, 1e-3):
        L = cube_truncation(alpha, eps)
        assert tail_sum(alpha, L) <= eps / 2
        if L > 0:
            assert tail_sum(alpha, L - 1) > eps / 2
        top = max(200_000, 4 * L)
        if top > 2_000_000:
            continue
        direct = math.fsum(n ** -alpha for n in range(L + 1, top))
        direct += (top - 0.5) ** (1 - alpha) / (alpha - 1)  # midpoint integral for the rest
        assert tail_sum(alpha, L) == pytest.approx(direct, rel=1e-7)


def _grid_axes(params, eps):
    L = cube_truncation(params.alpha, eps)
    c = spacing_constant()
    axes = []
    for n in range(1, L + 1):
        side = n ** -params.alpha
        step = eps / (c * n * math.log(n + 1) ** 2)
        count = math.ceil(side / step + 1)
        axes.append(np.minimum(np.arange(count) * step, side))
    return L, axes


@pytest.mark.parametrize("alpha, eps", [(3.0, 0.4), (3.0, 0.25), (2.0, 0.9)])
def test_cube_net_covers_and_beats_packing(alpha, eps):
    params = CubeParams(alpha, truncation=60)
    L, axes = _grid_axes(params, eps)
    assert 1 <= L <= 3
    assert math.log(math.prod(len(a) for a in axes)) == pytest.approx(banach_cube_cover_count(params, eps))
    rng = np.random.default_rng(0)
    pts = rng.random((3000, 60)) * params.sides()
    # nearest net point coordinatewise; tail coordinates go to 0
    dist = np.abs(pts[:, L:]).sum(1)
    for i, a in enumerate(axes):
        dist += np.abs(pts[:, i][:, None] - a[None]).min(1)
    assert dist.max() <= eps
    # a greedy 2eps-separated subset is a packing, hence a lower bound
    chosen = []
    for x in pts[:600]:
        if all(np.abs(x - y).sum() > 2 * eps for y in chosen):
            chosen.append(x)
    assert len(chosen) <= math.exp(banach_cube_cover_count(params, eps)) + 1e-9


def test_cube_count_trivial_scale():
    p = CubeParams(2.0)
    assert banach_cube_cover_count(p, p.total * 1.01) == 0.0
    c = cube_cover_curve(p, [2.0**-j for j in range(4, 15)])
    assert all(b >= a for a, b in zip(c.log_counts, c.log_counts[1:]))


def test_cube_params_validation():
    with pytest.raises(ValueError):
        CubeParams(1.0)
    with pytest.raises(ValueError):
        CubeParams(2.0, truncation=0)


def test_ball_mass_one_dimension():
    p = CubeParams(2.0, truncation=1)
    for r in (0.05, 0.2, 0.4):
        est = banach_cube_ball_mass(p, [0.5], r, 200_000, seed=3)
        assert abs(est.log_mass - math.log(2 * r)) <= 2 * est.half_width


def test_ball_mass_two_dimensions_exact_area():
    # l1 ball of radius r < 1/4 around the centre of [0,1] x [0,1/4] is inside the box
    p = CubeParams(2.0, truncation=2)
    r = 0.1
    est = banach_cube_ball_mass(p, [0.5, 0.125], r, 400_000, seed=4)
    assert abs(est.log_mass - math.log(2 * r * r / 0.25)) <= 2 * est.half_width


def test_ball_mass_reproducible_and_exact_cases():
    p = CubeParams(2.0, truncation=10)
    x = p.sides() / 2
    a = banach_cube_ball_mass(p, x, 0.3, 50_000, seed=9)
    b = banach_cube_ball_mass(p, x, 0.3, 50_000, seed=9)
    assert a == b
    assert ball_hits(p, x, 0.3, 50_000, 9) == a.hits
    big = banach_cube_ball_mass(p, x, 10.0, 10, seed=1)
    assert big.exact and big.log_mass == 0.0
    with pytest.raises(ValueError, match="no sample"):
        banach_cube_ball_mass(p, np.zeros(10), 1e-6, 1000, seed=1)


def test_fit_ball_exponent():
    r = np.array([0.5, 0.25, 0.125, 0.0625])
    assert fit_ball_exponent(r, -(r ** -1.7)) == pytest.approx(1.7)
    with pytest.raises(ValueError):
        fit_ball_exponent(r, np.zeros(4))
