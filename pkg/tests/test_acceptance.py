"""Acceptance criteria 1-11, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (visible with ``-s`` or in
the summary written at the end of the session).
"""

import math
import time

import numpy as np
import pytest

from conftest import lipschitz_violations
from ultra_ot.dimension_lab import CubeParams, crit_slope, cube_cover_curve
from ultra_ot.experiments import embedding_isometry, lemma_eq2, sec51, sec5alt, sec61, sec62, separation_violations
from ultra_ot.generators import (
    RegularParams,
    frostman_instance,
    greedy_frostman_sequence,
    random_ultrametric,
    regroup,
    regular_space,
)
from ultra_ot.rng import stream
from ultra_ot.transport import Measure
from ultra_ot.ultra_core import matrix_from_srt, quantize_heights

LINES: list[str] = []


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n--- acceptance summary ---")
        for line in LINES:
            print(line)


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def eq2():
    t0 = time.perf_counter()
    r = lemma_eq2(instances=200, seed=7, ps=(1, 2, 3), flow_instances=100)
    return r, time.perf_counter() - t0


@pytest.fixture(scope="module")
def iso():
    return embedding_isometry(instances=200, seed=7, ps=(1, 2, 3), triples=500)


def test_criterion_01_oracle_equivalence(eq2):
    r, elapsed = eq2
    m = r.metrics
    ok = m["comparisons"] == 600 and m["mismatches"] == 0 and m["max_rel_err"] <= 1e-8 and elapsed < 30
    verdict(1, ok, f"{m['comparisons']} comparisons, max rel err {m['max_rel_err']:.2e}, "
                   f"{m['mismatches']} mismatches, {elapsed:.1f}s")


def test_criterion_02_isometry_and_affinity(iso):
    m = iso.metrics
    ok = m["isometry_max_err"] <= 1e-10 and m["affinity_max_err"] <= 1e-12
    verdict(2, ok, f"isometry err {m['isometry_max_err']:.2e}, affinity err {m['affinity_max_err']:.2e}")


def test_criterion_03_triangle_inequality(iso):
    m = iso.metrics
    bad = {k: v for k, v in m.items() if k.startswith("triangle_violations.")}
    ok = len(bad) == 3 and sum(bad.values()) == 0
    verdict(3, ok, f"violations {bad}, max excess {m['triangle_max_excess']:.2e}")


def test_criterion_04_edge_flows(eq2):
    m = eq2[0].metrics
    ok = m["flow_instances"] == 100 and m["flow_mismatches"] == 0 and m["plan_cost_max_err"] <= 1e-10
    verdict(4, ok, f"{m['flow_mismatches']} exact-flow mismatches, plan cost err {m['plan_cost_max_err']:.2e}")


def test_criterion_05_quantization_bounds():
    bad = 0
    pairs = 0
    for i in range(50):
        rng = stream(5, i)
        t = random_ultrametric(int(rng.integers(2, 40)), rng)
        d = matrix_from_srt(t).d
        off = ~np.eye(t.n_leaves, dtype=bool)
        for q in (1.5, 2.0, 3.0):
            dq = matrix_from_srt(quantize_heights(t, q), t.leaf_labels).d
            bad += int(np.count_nonzero(~((d[off] <= dq[off]) & (dq[off] < q * d[off]))))
            pairs += int(off.sum()) // 2
    verdict(5, bad == 0, f"{bad} violations over {pairs} pairs x q")


REGROUP_CASES = [(2, 1.0, C) for C in (1.0, 1.5, 2.0, 2.5, 2.9)] * 3 + [(2, 2.0, C) for C in (1.0, 1.5, 2.0, 2.5, 2.9)]


def test_criterion_06_regrouping():
    window_bad = child_bad = lip_bad = 0
    methods = set()
    for i, (k, s, C) in enumerate(REGROUP_CASES):
        t, mu = frostman_instance(k, s, C, 5, stream(6, i))
        rep = regroup(t, mu, s, C, 5, k)
        q = (3 * k) ** (1 / s)
        for n in range(1, 6):
            lo, hi = rep.mass_bounds[n]
            c = C * q ** (-n * s)
            window_bad += not (0.5 * c * (1 - 1e-12) <= lo and hi <= 1.5 * c * (1 + 1e-12))
        child_bad += rep.min_children < math.ceil(q**s / 3 - 1e-12)
        lip_bad += lipschitz_violations(t, rep.output, rep.point_map)
        for ms in rep.fallback_levels.values():
            methods.update(ms)
    ok = window_bad == 0 and child_bad == 0 and lip_bad == 0
    verdict(6, ok, f"{len(REGROUP_CASES)} instances; window misses {window_bad}, child-count misses {child_bad}, "
                   f"Lipschitz violations {lip_bad}; fallbacks used: {sorted(methods) or 'none'}")


def test_criterion_07_smallparts():
    r = sec61(budget=16, removed=2, threshold=0.6)
    m = r.metrics
    ok = m["counts_exact"] and abs(m["minkowski_slope"] - 1) <= 0.05 and m["matched_slope"] < 0.6
    verdict(7, ok, f"counts exact {m['counts_exact']}, slope {m['minkowski_slope']:.3f}, "
                   f"matched-scale estimate {m['matched_slope']:.3f} at scales {m['matched_scales']}")


@pytest.fixture(scope="module")
def countable():
    return sec62(seed=7, n_validate=2000, n_pairs=50, pairs=100, ps=(1, 2, 3))


def test_criterion_08_countable_literal(countable):
    m = countable.metrics
    viol = {p: m[f"p{p}.violations"] for p in (1, 2, 3)}
    eq = max(m[f"p{p}.equality_rel_err"] for p in (1, 2, 3))
    ok = m["exact_ultrametric"] and m["tree_matches"] and m["nested"] and sum(viol.values()) == 0 and eq <= 1e-12
    verdict(8, ok, f"exact validation N=2000 {m['exact_ultrametric']}, literal-bound violations {viol}, "
                   f"min ratio {min(m[f'p{p}.min_ratio'] for p in (1, 2, 3)):.3f}, equality err {eq:.1e}")


def test_criterion_08b_countable_half_bound(countable):
    # supplementary: the bound with the factor 1/2 that does follow from the closed form
    m = countable.metrics
    half = {p: m[f"p{p}.half_bound_violations"] for p in (1, 2, 3)}
    ok = m["exact_ultrametric"] and sum(half.values()) == 0
    line = f"criterion 8 (half bound, supplementary): {'PASS' if ok else 'FAIL'} (violations {half})"
    LINES.append(line)
    print(line)
    assert ok


def test_criterion_09_banach_cube_slope():
    t0 = time.perf_counter()
    eps = [2.0**-j for j in range(4, 15)]
    got = {}
    for alpha in (2.0, 3.0):
        est = crit_slope(cube_cover_curve(CubeParams(alpha), eps))
        got[alpha] = est.slope
    elapsed = time.perf_counter() - t0
    ok = all(abs(got[a] - 1 / (a - 1)) <= 0.1 for a in got) and elapsed < 10
    verdict(9, ok, ", ".join(f"alpha={a:g}: {s:.4f} vs {1 / (a - 1):.4f}" for a, s in got.items())
                   + f", {elapsed:.2f}s")


def test_criterion_10_greedy_sequence():
    t = regular_space(RegularParams(2, 2.0, 12))
    seq = greedy_frostman_sequence(t, Measure.uniform(t.leaf_labels), 0.9, 1.0, 0.1)
    bad = separation_violations(t, seq)
    verdict(10, bad == 0 and len(seq) >= 100, f"length {len(seq)}, {bad} separation violations")


def test_criterion_11_lower_bounds():
    a = sec51(seed=7, k=2, q=2.0, depth=8, eps=0.2, ps=(1, 2), calibration=10_000, validation=100)
    b = sec5alt(seed=7, depth=12, d2=0.9, C1=1.0, eps=0.1, pairs=100, ps=(1, 2))
    ma, mb = a.metrics, b.metrics
    ok = a.passed and b.passed
    detail = "; ".join(
        [f"cube p={p}: C*={ma[f'p{p}.c_star']:.3f}, violations {ma[f'p{p}.violations']}" for p in (1, 2)]
        + [f"comb p={p}: violations {mb[f'p{p}.violations']}, min ratio {mb[f'p{p}.min_ratio']:.2f}" for p in (1, 2)]
    )
    verdict(11, ok, detail)
