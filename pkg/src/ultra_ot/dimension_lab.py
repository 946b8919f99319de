"""Covering numbers, finite-scale dimension slopes and Banach-cube estimates.

All dimension outputs are window estimates: least-squares slopes over a finite
range of scales, not limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import zeta

from .rng import stream
from .ultra_core import DistanceMatrix, Srt, covering_number


@dataclass(frozen=True)
class CoveringCurve:
    """Samples ``(eps, N(eps))`` with ``eps`` decreasing.

    ``log_counts`` is always set; ``counts`` holds the integers when they are
    small enough to store. ``exact`` is False for greedy upper bounds.
    """

    eps: tuple[float, ...]
    log_counts: tuple[float, ...]
    source: str
    exact: bool = True
    counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.eps) != len(self.log_counts):
            raise ValueError("eps and counts differ in length")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps must be strictly decreasing")
        if any(c < 0 for c in self.log_counts):
            raise ValueError("counts must be >= 1")
        if any(b < a - 1e-9 * max(1.0, a) for a, b in zip(self.log_counts, self.log_counts[1:])):
            raise ValueError("counts must not decrease as eps decreases")

    def __len__(self) -> int:
        return len(self.eps)

    def rows(self):
        """``(eps, count, log_count)`` with ``count`` None when not stored."""
        counts = self.counts or (None,) * len(self)
        return list(zip(self.eps, counts, self.log_counts))


def _check_eps(eps_list) -> tuple[float, ...]:
    eps = tuple(float(e) for e in eps_list)
    if not eps or any(not e > 0 for e in eps):
        raise ValueError("eps values must be positive")
    return eps


def greedy_cover_count(m: DistanceMatrix, eps: float) -> int:
    """Greedy cover by sets ``{y : d(x, y) <= 2 eps}``, centers taken in label order.

    On an ultrametric matrix each such set is the largest ball of diameter
    ``<= 2 eps`` around ``x``, so the count equals the tree covering number;
    otherwise it is an upper bound for covers by those sets.
    """
    alive = np.ones(m.n, dtype=bool)
    count = 0
    thr = 2 * eps
    for i in range(m.n):
        if alive[i]:
            count += 1
            alive &= m.d[i] > thr
    return count


def covering_curve(space, eps_list, source: str | None = None) -> CoveringCurve:
    """Covering numbers at each ``eps`` (given in decreasing order).

    Exact for trees; greedy (``exact=False``) for general matrices.
    """
    eps = _check_eps(eps_list)
    if isinstance(space, Srt):
        counts = tuple(covering_number(space, e) for e in eps)
        exact = True
    elif isinstance(space, DistanceMatrix):
        counts = tuple(greedy_cover_count(space, e) for e in eps)
        exact = False
    else:
        raise TypeError("space must be an Srt or a DistanceMatrix")
    return CoveringCurve(eps, tuple(math.log(c) for c in counts), source or repr(space), exact, counts)


def _window(c: CoveringCurve, window) -> slice:
    if window is None:
        return slice(0, len(c))
    if isinstance(window, slice):
        return window
    start, stop = window
    return slice(start, stop)


def _fit(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _lsq_slope(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 3 or np.ptp(x) == 0:
        raise ValueError("degenerate window: need >= 3 distinct scales")
    return _fit(x, y)


def minkowski_slope(c: CoveringCurve, window=None) -> float:
    """Least-squares slope of ``log N`` against ``log(1/eps)`` over ``window``."""
    w = _window(c, window)
    x = -np.log(np.asarray(c.eps[w]))
    y = np.asarray(c.log_counts[w])
    return _lsq_slope(x, y)


@dataclass(frozen=True)
class CritEstimate:
    """Slope of ``log log N`` against ``log(1/eps)``.

    ``flagged`` marks windows where ``log N`` grows only like ``log(1/eps)``
    (finite-dimensional behaviour), where the slope carries no information.
    """

    slope: float
    flagged: bool
    growth_ratio: float
    reason: str = ""


def crit_slope(c: CoveringCurve, window=None, ratio_threshold: float = 1.5) -> CritEstimate:
    """Power-exponential slope estimate over ``window``.

    The regime test compares the local Minkowski slope of the second half of
    the window with that of the first half: polynomial growth keeps it near
    one, while ``log N ~ eps**-s`` makes it grow with ``log N``.
    """
    w = _window(c, window)
    x = -np.log(np.asarray(c.eps[w]))
    logn = np.asarray(c.log_counts[w])
    if len(x) < 3 or np.ptp(x) == 0:
        raise ValueError("degenerate window: need >= 3 distinct scales")
    if np.any(logn <= 0):
        return CritEstimate(float("nan"), True, float("nan"), "N(eps) = 1 inside the window")
    slope = _lsq_slope(x, np.log(logn))
    # halves share the middle sample, so each has at least two points
    half = len(x) // 2
    early = _fit(x[: half + 1], logn[: half + 1])
    late = _fit(x[half:], logn[half:])
    ratio = late / early if early > 0 else math.inf
    flagged = ratio < ratio_threshold
    reason = "log N grows polynomially in log(1/eps)" if flagged else ""
    return CritEstimate(slope, flagged, float(ratio), reason)


# --------------------------------------------------------------------------
# Banach cubes BC((n**-alpha))


@lru_cache(maxsize=None)
def spacing_constant(terms: int = 10**6) -> float:
    """``C`` with ``sum_n 1/(C n log(n+1)**2) = 1/2``.

    The partial sum is exact up to ``terms``; the tail is bounded by the
    integral ``1/log(terms)``.
    """
    n = np.arange(1, terms + 1, dtype=float)
    s = math.fsum(1.0 / (n * np.log(n + 1) ** 2)) + 1.0 / math.log(terms)
    return 2.0 * s


@dataclass(frozen=True)
class CubeParams:
    """Cube ``{x : 0 <= x_n <= n**-alpha}`` in l1; ``truncation`` is used by the
    Monte-Carlo mass estimator."""

    alpha: float
    truncation: int = 30

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")

    @property
    def c_hat(self) -> float:
        return spacing_constant()

    @property
    def total(self) -> float:
        """``sum_n n**-alpha``, the l1 radius of the cube around 0."""
        return float(zeta(self.alpha))

    def sides(self, length: int | None = None) -> np.ndarray:
        n = np.arange(1, (length or self.truncation) + 1, dtype=float)
        return n ** (-self.alpha)


def tail_sum(alpha: float, L: int) -> float:
    """``sum_{n > L} n**-alpha``."""
    return float(zeta(alpha, L + 1))


def cube_truncation(alpha: float, eps: float) -> int:
    """Smallest ``L`` with ``sum_{n > L} n**-alpha <= eps / 2``."""
    target = eps / 2
    if tail_sum(alpha, 0) <= target:
        return 0
    hi = 1
    while tail_sum(alpha, hi) > target:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_sum(alpha, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def banach_cube_cover_count(params: CubeParams, eps: float) -> float:
    """Natural log of the size of an ``eps``-net of the cube.

    The first ``L`` coordinates each take values on a grid of spacing
    ``eps / (C n log(n+1)**2)`` and the rest are set to 0; the net has
    ``prod_{n <= L} ceil(n**-alpha C n log(n+1)**2 / eps + 1)`` points.
    """
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if eps >= params.total:
        return 0.0
    L = cube_truncation(params.alpha, eps)
    n = np.arange(1, L + 1, dtype=float)
    per = np.ceil(n ** (-params.alpha) * params.c_hat * n * np.log(n + 1) ** 2 / eps + 1)
    return math.fsum(np.log(per))


def cube_cover_curve(params: CubeParams, eps_list) -> CoveringCurve:
    eps = _check_eps(eps_list)
    logs = tuple(banach_cube_cover_count(params, e) for e in eps)
    return CoveringCurve(eps, logs, f"banach-cube(alpha={params.alpha})", exact=False)


@dataclass(frozen=True)
class MassEstimate:
    """Monte-Carlo estimate of ``log mu(B(x, r))`` with a normal-approximation
    half-width (in log space) at the given confidence."""

    log_mass: float
    half_width: float
    hits: int
    samples: int
    exact: bool = False


def ball_hits(params: CubeParams, x: np.ndarray, r: float, samples: int, seed: int, block: int = 1 << 16) -> int:
    """Number of product-uniform samples within l1 distance ``r`` of ``x``.

    Block ``j`` always draws from stream ``(seed, j)``, so the total does not
    depend on how blocks are distributed.
    """
    a = params.sides()
    hits = 0
    for j, start in enumerate(range(0, samples, block)):
        size = min(block, samples - start)
        rng = stream(seed, j)
        y = rng.random((size, len(a))) * a
        dist = np.abs(y - x).sum(axis=1)
        hits += int(np.count_nonzero(dist <= r))
    return hits


def banach_cube_ball_mass(
    params: CubeParams, x, r: float, samples: int, seed: int, z: float = 1.96, block: int = 1 << 16
) -> MassEstimate:
    """Estimate ``log mu(B(x, r))`` for the product of uniforms on ``[0, n**-alpha]``,
    ``n <= truncation``.

    Returns exactly 0 when the ball contains the whole truncated cube.

    Raises
    ------
    ValueError
        If no sample falls in the ball (``r`` too small for the budget).
    """
    if not r > 0 or samples < 1:
        raise ValueError("need r > 0 and samples >= 1")
    x = np.asarray(x, dtype=float)
    a = params.sides()
    head = np.zeros(len(a))
    head[: min(len(a), len(x))] = x[: len(a)]
    beyond = float(np.abs(x[len(a) :]).sum()) if len(x) > len(a) else 0.0
    far = float(np.maximum(head, a - head).sum()) + beyond
    if far <= r:
        return MassEstimate(0.0, 0.0, samples, samples, exact=True)
    hits = ball_hits(params, head, r - beyond, samples, seed, block) if r > beyond else 0
    if hits == 0:
        raise ValueError(f"no sample within r={r!r}: radius too small for {samples} samples")
    p = hits / samples
    half = z * math.sqrt((1 - p) / (samples * p))
    return MassEstimate(math.log(p), half, hits, samples)


def fit_ball_exponent(radii, log_masses) -> float:
    """Slope ``beta`` of ``log(-log mu)`` against ``log(1/r)``."""
    r = np.asarray(radii, dtype=float)
    lm = np.asarray(log_masses, dtype=float)
    if np.any(lm >= 0):
        raise ValueError("masses must be < 1")
    x = -np.log(r)
    y = np.log(-lm)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
