"""Seeded experiment suites.

Each suite returns an :class:`ExperimentResult` whose ``metrics`` are plain
numbers, so the CLI can print them as key=value reports and tests can compare
them against their own thresholds. Instance ``i`` of a suite always draws from
stream ``(seed, i)``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .dimension_lab import covering_curve, minkowski_slope
from .generators import (
    RegularParams,
    comb_weights,
    countable_example,
    countable_lower_bound,
    cube_ball_masses,
    cube_constant,
    cube_lower_bound_terms,
    cube_to_measure,
    dirac_comb_lower_bound,
    dirac_comb_measure,
    greedy_frostman_sequence,
    random_measure,
    random_ultrametric,
    regular_space,
    smallparts_removed_curve,
    smallparts_space,
    v_prime,
)
from .rng import stream
from .transport import (
    Measure,
    edge_flows,
    edge_weights,
    embed_l1,
    oracle_cost,
    tree_optimal_plan,
    wasserstein_pp,
)
from .ultra_core import (
    covering_number,
    distance_row,
    matrix_from_srt,
    restrict,
    validate_ultrametric,
)

ORACLE_RTOL = 1e-8


@dataclass
class ExperimentResult:
    name: str
    params: dict
    metrics: dict = field(default_factory=dict)
    passed: bool = False

    def report(self) -> dict:
        out = {"experiment": self.name}
        out.update({f"param.{k}": v for k, v in self.params.items()})
        out.update(self.metrics)
        out["passed"] = self.passed
        return out


def random_instance(seed: int, i: int, lo: int = 4, hi: int = 12):
    """Instance ``i``: a random dyadic tree with ``lo..hi`` leaves and two measures."""
    rng = stream(seed, i)
    n = int(rng.integers(lo, hi + 1))
    t = random_ultrametric(n, rng)
    labels = t.leaf_labels
    sizes = rng.integers(1, n + 1, size=2)
    mu = random_measure(labels, rng, support=int(sizes[0]))
    nu = random_measure(labels, rng, support=int(sizes[1]))
    return t, mu, nu


def lemma_eq2(instances: int = 200, seed: int = 7, ps=(1, 2, 3), flow_instances: int = 100) -> ExperimentResult:
    """Closed form against the simplex oracle, plus edge flows of the tree plan."""
    max_rel = 0.0
    mismatches = 0
    flow_bad = 0
    plan_err = 0.0
    for i in range(instances):
        t, mu, nu = random_instance(seed, i)
        m = matrix_from_srt(t)
        for p in ps:
            closed = wasserstein_pp(t, mu, nu, p)
            oracle, _ = oracle_cost(m, mu, nu, p)
            rel = abs(closed - oracle) / max(1.0, oracle)
            max_rel = max(max_rel, rel)
            mismatches += rel > ORACLE_RTOL
        if i < flow_instances:
            exact_a = _exact_ball_masses(t, mu)
            exact_b = _exact_ball_masses(t, nu)
            for p in ps:
                plan = tree_optimal_plan(t, mu, nu, p)
                plan_err = max(plan_err, abs(plan.cost - wasserstein_pp(t, mu, nu, p)))
                for v, f in edge_flows(t, plan).items():
                    flow_bad += f != abs(exact_a[v] - exact_b[v])
    r = ExperimentResult("lemma-eq2", {"instances": instances, "seed": seed, "p": list(ps)})
    r.metrics = {
        "comparisons": instances * len(ps),
        "max_rel_err": max_rel,
        "mismatches": mismatches,
        "flow_instances": min(flow_instances, instances),
        "flow_mismatches": flow_bad,
        "plan_cost_max_err": plan_err,
    }
    r.passed = mismatches == 0 and flow_bad == 0 and plan_err <= 1e-10
    return r


def _exact_ball_masses(t, mu: Measure) -> dict:
    mass = {int(v): Fraction(0) for v in range(t.n_vertices)}
    for lab, w in mu.items():
        if lab in t._leaf_pos:
            for v in t.ancestors(t.vertex_of(lab)):
                mass[v] += Fraction(w)
    return mass


def embedding_isometry(
    instances: int = 200, seed: int = 7, ps=(1, 2, 3), triples: int = 500
) -> ExperimentResult:
    """Isometry and affinity of the l1 coordinates; triangle inequality of W_p**p."""
    iso = 0.0
    aff = 0.0
    for i in range(instances):
        t, mu, nu = random_instance(seed, i)
        for p in ps:
            a, b = embed_l1(t, mu, p), embed_l1(t, nu, p)
            iso = max(iso, abs(a.distance(b) - wasserstein_pp(t, mu, nu, p)))
            for s in (0.25, 0.5):
                mix = embed_l1(t, mu.mix(nu, s), p)
                aff = max(aff, float(np.max(np.abs(mix.coord - (s * a.coord + (1 - s) * b.coord)))))
    classes = {"small": (4, 6), "medium": (7, 9), "large": (10, 12)}
    violations = {}
    worst = 0.0
    for ci, (name, (lo, hi)) in enumerate(classes.items()):
        bad = 0
        for j in range(triples):
            rng = stream(seed, 10_000 + ci, j)
            n = int(rng.integers(lo, hi + 1))
            t = random_ultrametric(n, rng)
            ms = [random_measure(t.leaf_labels, rng, support=int(rng.integers(1, n + 1))) for _ in range(3)]
            for p in ps:
                xy = wasserstein_pp(t, ms[0], ms[1], p)
                yz = wasserstein_pp(t, ms[1], ms[2], p)
                xz = wasserstein_pp(t, ms[0], ms[2], p)
                excess = xz - (xy + yz)
                worst = max(worst, excess)
                bad += excess > 1e-10
        violations[name] = bad
    r = ExperimentResult(
        "embedding-isometry", {"instances": instances, "seed": seed, "p": list(ps), "triples": triples}
    )
    r.metrics = {
        "isometry_max_err": iso,
        "affinity_max_err": aff,
        **{f"triangle_violations.{k}": v for k, v in violations.items()},
        "triangle_max_excess": worst,
    }
    r.passed = iso <= 1e-10 and aff <= 1e-12 and sum(violations.values()) == 0
    return r


def _cube_pairs(t, rng, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Random assignments: half uniform on [0,1], half 0/1 valued."""
    vp = v_prime(t)
    a = np.zeros((count, t.n_vertices))
    b = np.zeros((count, t.n_vertices))
    for arr in (a, b):
        u = rng.random((count, len(vp)))
        binary = rng.random(count) < 0.5
        u[binary] = np.round(u[binary])
        arr[:, vp] = u
    return a, b


def sec51(
    seed: int = 7,
    k: int = 2,
    q: float = 2.0,
    depth: int = 8,
    eps: float = 0.2,
    ps=(1, 2),
    calibration: int = 10_000,
    validation: int = 100,
    cap: int = 256,
) -> ExperimentResult:
    """Co-Lipschitz bound for the spread measures on a regular space.

    The constant is the smallest ratio ``W_p**p / sum`` over calibration pairs
    (closed form); held-out pairs are then checked against the oracle.
    """
    t = regular_space(RegularParams(k, q, depth))
    m = matrix_from_srt(t)
    metrics = {}
    ok = True
    for pi, p in enumerate(ps):
        vs, weights = cube_lower_bound_terms(t, eps, q, p)
        w = edge_weights(t, p)
        rng = stream(seed, 0, pi)
        a, b = _cube_pairs(t, rng, calibration)
        ma, mb = cube_ball_masses(t, eps, a), cube_ball_masses(t, eps, b)
        wpp = np.abs(ma - mb) @ w
        lower = np.abs(a[:, vs] - b[:, vs]) @ weights
        keep = lower > 0
        c_star = float(np.min(wpp[keep] / lower[keep]))
        c_theory = cube_constant(k, q, p, eps)

        rng = stream(seed, 1, pi)
        a, b = _cube_pairs(t, rng, validation)
        violations = 0
        theory_violations = 0
        oracle_gap = 0.0
        min_ratio = math.inf
        for j in range(validation):
            mu = cube_to_measure(t, eps, a[j])
            nu = cube_to_measure(t, eps, b[j])
            cost, _ = oracle_cost(m, mu, nu, p, cap=cap)
            oracle_gap = max(oracle_gap, abs(cost - wasserstein_pp(t, mu, nu, p)) / max(1.0, cost))
            s = float(np.abs(a[j, vs] - b[j, vs]) @ weights)
            violations += cost < c_star * s
            theory_violations += cost < c_theory * s
            if s > 0:
                min_ratio = min(min_ratio, cost / s)
        metrics.update(
            {
                f"p{p}.c_star": c_star,
                f"p{p}.c_theory": c_theory,
                f"p{p}.validation_min_ratio": min_ratio,
                f"p{p}.violations": violations,
                f"p{p}.theory_violations": theory_violations,
                f"p{p}.oracle_rel_gap": oracle_gap,
            }
        )
        ok &= violations == 0 and theory_violations == 0 and oracle_gap <= ORACLE_RTOL
    r = ExperimentResult(
        "sec51",
        {"seed": seed, "k": k, "q": q, "depth": depth, "eps": eps, "p": list(ps),
         "calibration": calibration, "validation": validation},
    )
    r.metrics = metrics
    r.passed = bool(ok)
    return r


def separation_violations(t, seq) -> int:
    """Brute-force count of pairs ``i < j`` with ``d(q_i, q_j) < r_i``."""
    pos = np.array([t.leaf_position(s.label) for s in seq])
    bad = 0
    for i, s in enumerate(seq[:-1]):
        row = distance_row(t, s.label)
        bad += int(np.count_nonzero(row[pos[i + 1 :]] < s.radius))
    return bad


def sec5alt(
    seed: int = 7,
    depth: int = 12,
    d2: float = 0.9,
    C1: float = 1.0,
    eps: float = 0.1,
    pairs: int = 100,
    comb: int = 48,
    ps=(1, 2),
) -> ExperimentResult:
    """Greedy separated sequence on Y(2,2) and the Dirac-comb lower bound."""
    t = regular_space(RegularParams(2, 2.0, depth))
    mu = Measure.uniform(t.leaf_labels)
    seq = greedy_frostman_sequence(t, mu, d2, C1, eps)
    sep_bad = separation_violations(t, seq)

    n = min(comb, len(seq) - 1)
    pts = [s.label for s in seq[: n + 1]]
    radii = [s.radius for s in seq[: n + 1]]
    sub = matrix_from_srt(restrict(t, pts), labels=pts)
    b = comb_weights(n, eps)
    metrics = {"sequence_length": len(seq), "separation_violations": sep_bad, "comb_points": n + 1}
    ok = sep_bad == 0 and len(seq) >= 100
    for pi, p in enumerate(ps):
        rng = stream(seed, 2, pi)
        bad = 0
        min_ratio = math.inf
        provable_bad = 0
        for _ in range(pairs):
            x, y = rng.random(n), rng.random(n)
            cost, _ = oracle_cost(sub, dirac_comb_measure(pts, b, x), dirac_comb_measure(pts, b, y), p)
            bound = dirac_comb_lower_bound(b, x, y, radii, p)
            bad += cost < bound
            provable_bad += cost < 0.5 * bound
            min_ratio = min(min_ratio, cost / bound)
        metrics.update({f"p{p}.violations": bad, f"p{p}.min_ratio": min_ratio, f"p{p}.provable_violations": provable_bad})
        ok &= bad == 0 and provable_bad == 0
    r = ExperimentResult(
        "sec5alt", {"seed": seed, "depth": depth, "d2": d2, "C1": C1, "eps": eps, "pairs": pairs, "p": list(ps)}
    )
    r.metrics = metrics
    r.passed = bool(ok)
    return r


def sec61(budget: int = 16, removed: int = 2, threshold: float = 0.6) -> ExperimentResult:
    """Covering numbers of the small-parts space and of the space minus one ball."""
    t = smallparts_space(budget)
    ns = list(range(0, budget + 1))
    counts = [covering_number(t, 2.0**-n) for n in ns]
    exact = all(c == 2**n for c, n in zip(counts, ns))
    curve = covering_curve(t, [2.0**-n for n in ns], "smallparts")
    slope = minkowski_slope(curve, (1, budget + 1))
    rest, rows = smallparts_removed_curve(budget, removed)
    estimates = [math.log2(nn) / m for _, m, nn in rows]
    rest_curve = covering_curve(rest, [2.0**-n for n in ns], "smallparts-minus-ball")
    window_slope = minkowski_slope(rest_curve, (1, budget + 1))
    matched = max(estimates) if estimates else math.nan
    r = ExperimentResult("sec61", {"budget": budget, "removed": removed})
    r.metrics = {
        "counts_exact": exact,
        "minkowski_slope": slope,
        "matched_scales": [m for _, m, _ in rows],
        "matched_counts": [nn for _, _, nn in rows],
        "matched_estimates": estimates,
        "matched_slope": matched,
        "window_slope_after_removal": window_slope,
    }
    r.passed = exact and abs(slope - 1) <= 0.05 and matched < threshold
    return r


def sec62(
    seed: int = 7,
    n_validate: int = 2000,
    n_pairs: int = 50,
    pairs: int = 100,
    ps=(1, 2, 3),
) -> ExperimentResult:
    """Countable comb: exact ultrametricity and the per-point lower bound."""
    big, tree = countable_example(n_validate)
    valid = validate_ultrametric(big, tol=0.0) is None
    tree_matches = bool(np.array_equal(matrix_from_srt(tree, labels=big.labels).d, big.d))
    m, t = countable_example(n_pairs)
    nested = bool(np.array_equal(big.d[:n_pairs, :n_pairs], m.d))
    metrics = {"validated_n": n_validate, "exact_ultrametric": valid, "tree_matches": tree_matches, "nested": nested}
    ok = valid and tree_matches and nested
    for pi, p in enumerate(ps):
        rng = stream(seed, 3, pi)
        bad = 0
        half_bad = 0
        min_ratio = math.inf
        for _ in range(pairs):
            mu = random_measure(m.labels, rng)
            nu = random_measure(m.labels, rng)
            w = wasserstein_pp(t, mu, nu, p)
            bound = countable_lower_bound(mu, nu, n_pairs, p)
            bad += w < bound * (1 - 1e-12)
            half_bad += w < 0.5 * bound * (1 - 1e-12)
            min_ratio = min(min_ratio, w / bound)
        # equality: measures that differ at w_n and at the last point only
        eq_err = 0.0
        for n in (1, 2, 7, n_pairs - 1):
            base = random_measure(m.labels, rng).as_dict()
            other = dict(base)
            delta = 0.5 * base[f"w{n}"]
            other[f"w{n}"] -= delta
            other[f"w{n_pairs}"] += delta
            mu, nu = Measure(base, atol=1e-9), Measure(other, atol=1e-9)
            w = wasserstein_pp(t, mu, nu, p)
            eq_err = max(eq_err, abs(w - countable_lower_bound(mu, nu, n_pairs, p)) / max(w, 1e-300))
        metrics.update(
            {
                f"p{p}.violations": bad,
                f"p{p}.min_ratio": min_ratio,
                f"p{p}.half_bound_violations": half_bad,
                f"p{p}.equality_rel_err": eq_err,
            }
        )
        ok &= bad == 0 and eq_err <= 1e-12
    r = ExperimentResult(
        "sec62", {"seed": seed, "n_validate": n_validate, "n_pairs": n_pairs, "pairs": pairs, "p": list(ps)}
    )
    r.metrics = metrics
    r.passed = bool(ok)
    return r


SUITES = {
    "lemma-eq2": lemma_eq2,
    "embedding-isometry": embedding_isometry,
    "sec51": sec51,
    "sec5alt": sec5alt,
    "sec61": sec61,
    "sec62": sec62,
}
