"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 invalid input (the offending triple or
ball is printed), 3 tolerance breach (closed form and oracle disagree, or an
experiment misses its threshold).
"""

from __future__ import annotations

import argparse
import math
import sys
from contextlib import contextmanager

import numpy as np

from . import io as uio
from .dimension_lab import (
    CubeParams,
    banach_cube_ball_mass,
    crit_slope,
    cube_cover_curve,
    covering_curve,
    minkowski_slope,
)
from .experiments import ORACLE_RTOL, SUITES
from .generators import (
    FrostmanError,
    RegroupError,
    RegularParams,
    countable_example,
    greedy_frostman_sequence,
    random_ultrametric,
    regroup,
    regular_space,
    smallparts_space,
)
from .rng import stream
from .transport import (
    Measure,
    OracleCapError,
    embed_l1,
    oracle_cost,
    tree_optimal_plan,
    wasserstein_pp,
)
from .ultra_core import (
    StructureError,
    UltrametricError,
    matrix_from_srt,
    quantize_heights,
    srt_from_matrix,
    validate_ultrametric,
)

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_TOLERANCE = 3


class UsageError(Exception):
    pass


class ToleranceBreach(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _eps_list(args) -> list[float]:
    if args.eps:
        return [float(x) for x in args.eps.split(",")]
    if args.eps_pow:
        try:
            base, lo, hi = args.eps_pow.split(":")
            return [float(base) ** -j for j in range(int(lo), int(hi) + 1)]
        except ValueError:
            raise UsageError("--eps-pow expects BASE:FIRST:LAST") from None
    raise UsageError("give --eps or --eps-pow")


def _window(text):
    if not text:
        return None
    try:
        a, b = text.split(":")
        return (int(a), int(b))
    except ValueError:
        raise UsageError("--window expects START:STOP") from None


# -- space and measure loading ---------------------------------------------


def _load_space(args):
    """Returns ``(tree, matrix)``; the matrix is built lazily by callers that need it."""
    if getattr(args, "srt", None):
        return uio.read_srt(args.srt), None
    if getattr(args, "matrix", None):
        m = uio.read_matrix(args.matrix)
        return srt_from_matrix(m, args.tol), m
    raise UsageError("give --srt or --matrix")


def _load_measure(args, which: str) -> Measure:
    path = getattr(args, which)
    dirac = getattr(args, f"{which}_dirac", None)
    if path and dirac:
        raise UsageError(f"--{which} and --{which}-dirac are exclusive")
    if dirac:
        return Measure.dirac(dirac)
    if path:
        return uio.read_measure(path, renormalize=args.renormalize)
    raise UsageError(f"give --{which} or --{which}-dirac")


def _add_space(p, matrix_only=False):
    g = p.add_mutually_exclusive_group()
    if not matrix_only:
        g.add_argument("--srt", help="tree file ('-' for stdin)")
    g.add_argument("--matrix", help="distance matrix CSV ('-' for stdin)")
    p.add_argument("--tol", type=float, default=1e-9, help="relative ultrametric tolerance")


def _add_measures(p, names=("mu", "nu")):
    for n in names:
        p.add_argument(f"--{n}", help=f"measure CSV for {n}")
        p.add_argument(f"--{n}-dirac", dest=f"{n}_dirac", metavar="LABEL", help=f"{n} = unit mass at LABEL")
    p.add_argument("--renormalize", action="store_true", help="rescale measure files to total mass 1")


# -- commands --------------------------------------------------------------


def cmd_validate(args):
    m = uio.read_matrix(args.matrix)
    bad = validate_ultrametric(m, args.tol)
    if bad is not None:
        raise UltrametricError(bad)
    print(f"ok n={m.n} diameter={uio.fmt(m.diameter())}")


def cmd_tree(args):
    with _output(args.out) as out:
        if args.srt:
            uio.write_matrix(matrix_from_srt(uio.read_srt(args.srt)), out)
        else:
            uio.write_srt(srt_from_matrix(uio.read_matrix(args.matrix), args.tol), out)


def cmd_wp(args):
    t, m = _load_space(args)
    mu, nu = _load_measure(args, "mu"), _load_measure(args, "nu")
    pp = wasserstein_pp(t, mu, nu, args.p)
    items = {"p": float(args.p), "wp_pow_p": pp, "wp": pp ** (1 / args.p)}
    breach = False
    if args.oracle:
        if m is None:
            m = matrix_from_srt(t)
        cost, _ = oracle_cost(m, mu, nu, args.p, cap=args.cap)
        diff = abs(pp - cost)
        items.update({"oracle_pow_p": cost, "difference": diff})
        breach = diff > ORACLE_RTOL * max(1.0, cost)
    uio.write_report(items, sys.stdout)
    if breach:
        raise ToleranceBreach("closed form and oracle disagree")


def cmd_embed(args):
    t, _ = _load_space(args)
    mu = _load_measure(args, "mu")
    with _output(args.out) as out:
        uio.write_coordinates(t, embed_l1(t, mu, args.p), out)


def cmd_plan(args):
    t, m = _load_space(args)
    mu, nu = _load_measure(args, "mu"), _load_measure(args, "nu")
    if args.oracle:
        _, plan = oracle_cost(m if m is not None else matrix_from_srt(t), mu, nu, args.p, cap=args.cap)
    else:
        plan = tree_optimal_plan(t, mu, nu, args.p)
    with _output(args.out) as out:
        uio.write_plan(plan, out)


def cmd_generate(args):
    kind = args.kind
    if kind == "regular":
        t = regular_space(RegularParams(args.k, args.q, args.depth))
    elif kind == "smallparts":
        t = smallparts_space(args.budget)
    elif kind == "countable":
        m, t = countable_example(args.n)
        if args.format == "matrix":
            with _output(args.out) as out:
                uio.write_matrix(m, out)
            return
    else:
        t = random_ultrametric(args.n, stream(args.seed, 0))
    with _output(args.out) as out:
        if args.format == "matrix":
            uio.write_matrix(matrix_from_srt(t), out)
        else:
            uio.write_srt(t, out)


def cmd_quantize(args):
    t, _ = _load_space(args)
    with _output(args.out) as out:
        uio.write_srt(quantize_heights(t, args.q), out)


def cmd_regroup(args):
    t, _ = _load_space(args)
    mu = uio.read_measure(args.mu, renormalize=args.renormalize) if args.mu else Measure.uniform(t.leaf_labels)
    rep = regroup(t, mu, args.s_prime, args.C, args.depth, args.k, args.eps)
    if args.out:
        with _output(args.out) as out:
            uio.write_srt(rep.output, out)
    if args.map_out:
        with _output(args.map_out) as out:
            out.write("source,target\n")
            for x in t.leaf_labels:
                out.write(f"{x},{rep.point_map[x]}\n")
    items = {
        "q": rep.q,
        "output_vertices": rep.output.n_vertices,
        "output_leaves": rep.output.n_leaves,
        "min_children": rep.min_children,
        "required_min_children": math.ceil(rep.q**args.s_prime / 3 - 1e-12),
    }
    for n, (lo, hi) in rep.mass_bounds.items():
        wl, wh = rep.windows[n]
        items[f"level{n}.mass"] = [lo, hi]
        items[f"level{n}.window"] = [wl, wh]
    items["fallback_levels"] = (
        ";".join(f"{n}:{'+'.join(ms)}" for n, ms in rep.fallback_levels.items()) or "none"
    )
    uio.write_report(items, sys.stdout)


def cmd_cover(args):
    t, m = _load_space(args)
    space = m if (m is not None and args.greedy) else t
    with _output(args.out) as out:
        uio.write_curve(covering_curve(space, _eps_list(args)), out)


def _curve(args):
    if args.curve:
        return uio.read_curve(args.curve)
    t, m = _load_space(args)
    return covering_curve(t, _eps_list(args))


def cmd_dim(args):
    c = _curve(args)
    uio.write_report({"minkowski_slope": minkowski_slope(c, _window(args.window)), "samples": len(c)}, sys.stdout)


def cmd_crit(args):
    c = _curve(args)
    est = crit_slope(c, _window(args.window))
    uio.write_report(
        {"crit_slope": est.slope, "flagged": est.flagged, "growth_ratio": est.growth_ratio,
         "reason": est.reason or "none"},
        sys.stdout,
    )


def cmd_cube(args):
    params = CubeParams(args.alpha, args.truncation)
    if args.action == "cover":
        with _output(args.out) as out:
            uio.write_curve(cube_cover_curve(params, _eps_list(args)), out)
        return
    if args.r is None:
        raise UsageError("cube mass needs --r")
    sides = params.sides()
    x = sides / 2 if args.x == "center" else np.zeros_like(sides)
    est = banach_cube_ball_mass(params, x, args.r, args.samples, args.seed)
    uio.write_report(
        {"log_mass": est.log_mass, "half_width": est.half_width, "hits": est.hits,
         "samples": est.samples, "exact": est.exact},
        sys.stdout,
    )


def cmd_frostman_seq(args):
    t, m = _load_space(args)
    mu = uio.read_measure(args.mu, renormalize=args.renormalize) if args.mu else Measure.uniform(t.leaf_labels)
    seq = greedy_frostman_sequence(m if m is not None else t, mu, args.d2, args.C1, args.eps)
    with _output(args.out) as out:
        out.write("index,label,radius\n")
        for i, s in enumerate(seq, 1):
            out.write(f"{i},{s.label},{uio.fmt(s.radius)}\n")


def cmd_experiment(args):
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.instances is not None:
        if args.name not in ("lemma-eq2", "embedding-isometry"):
            raise UsageError("--instances applies to lemma-eq2 and embedding-isometry")
        kwargs["instances"] = args.instances
    if args.name == "sec61" and "seed" in kwargs:
        kwargs.pop("seed")
    result = SUITES[args.name](**kwargs)
    with _output(args.out) as out:
        uio.write_report(result.report(), out)
    if not result.passed:
        raise ToleranceBreach(f"experiment {args.name} missed its thresholds")


def cmd_report(args):
    failed = 0
    for path in args.files:
        rep = uio.read_report(path)
        name = rep.get("experiment", path)
        ok = rep.get("passed") == "true"
        failed += not ok
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
        for k, v in rep.items():
            if k not in ("experiment", "passed") and not k.startswith("param."):
                print(f"  {k} = {v}")
    if failed:
        raise ToleranceBreach(f"{failed} report(s) failed")


def build_parser() -> Parser:
    ap = Parser(prog="ultra-ot", description="Exact optimal transport on finite ultrametric spaces.")
    sub = ap.add_subparsers(dest="command", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("validate", help="check the ultrametric inequality")
    p.add_argument("--matrix", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("tree", help="convert a matrix to a tree file, or back")
    _add_space(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("wp", help="Wasserstein distance from the closed form")
    _add_space(p)
    _add_measures(p)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--oracle", action="store_true", help="cross-check with the transport simplex")
    p.add_argument("--cap", type=int, default=None, help="oracle point cap (default: ULTRA_OT_CAP or 64)")
    p.set_defaults(func=cmd_wp)

    p = sub.add_parser("embed", help="l1 coordinates of a measure")
    _add_space(p)
    _add_measures(p, ("mu",))
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("plan", help="optimal transport plan")
    _add_space(p)
    _add_measures(p)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--oracle", action="store_true", help="use the simplex oracle plan")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="example spaces")
    p.add_argument("kind", choices=["regular", "smallparts", "countable", "random-ultra"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--budget", type=int, default=8)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["srt", "matrix"], default="srt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("quantize", help="round heights up to the grid q**-n/2")
    _add_space(p)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("regroup", help="regroup branches into mass windows")
    _add_space(p)
    p.add_argument("--mu", help="measure CSV (default: uniform)")
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--s-prime", dest="s_prime", type=float, required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--out", help="write the regrouped tree here")
    p.add_argument("--map-out", dest="map_out", help="write the point map CSV here")
    p.set_defaults(func=cmd_regroup)

    for name, func, help_ in (
        ("cover", cmd_cover, "covering numbers as CSV"),
        ("dim", cmd_dim, "Minkowski slope"),
        ("crit", cmd_crit, "power-exponential slope"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_space(p)
        p.add_argument("--eps", help="comma-separated decreasing scales")
        p.add_argument("--eps-pow", dest="eps_pow", help="BASE:FIRST:LAST for BASE**-j")
        if name == "cover":
            p.add_argument("--greedy", action="store_true", help="greedy count on the matrix")
            p.add_argument("--out")
        else:
            p.add_argument("--curve", help="covering curve CSV instead of a space")
            p.add_argument("--window", help="START:STOP sample indices")
        p.set_defaults(func=func)

    p = sub.add_parser("cube", help="Banach cube covering and ball-mass estimates")
    p.add_argument("action", choices=["cover", "mass"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--truncation", type=int, default=30)
    p.add_argument("--eps")
    p.add_argument("--eps-pow", dest="eps_pow")
    p.add_argument("--r", type=float)
    p.add_argument("--x", choices=["center", "zero"], default="center")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cube)

    p = sub.add_parser("frostman-seq", help="greedy separated sequence")
    _add_space(p)
    p.add_argument("--mu", help="measure CSV (default: uniform)")
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--d2", type=float, required=True)
    p.add_argument("--C1", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_frostman_seq)

    p = sub.add_parser("experiment", help="run an acceptance suite")
    p.add_argument("name", choices=sorted(SUITES))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize experiment reports")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_report)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UltrametricError as e:
        v = e.violation
        print(f"invalid: not ultrametric; witness ({v.x}, {v.y}, {v.z}): {v}", file=sys.stderr)
        return EXIT_INVALID
    except FrostmanError as e:
        print(f"invalid: {e}; ball: {' '.join(e.ball[:20])}", file=sys.stderr)
        return EXIT_INVALID
    except ToleranceBreach as e:
        print(f"tolerance breach: {e}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (StructureError, RegroupError, OracleCapError, uio.FormatError, ValueError, KeyError, OSError) as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_INVALID
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
