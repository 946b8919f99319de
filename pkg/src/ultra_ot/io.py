"""Text formats: matrices, trees, measures, plans, covering curves, reports.

Every reader accepts a path or ``-`` for standard input; every writer takes an
open text stream.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from contextlib import contextmanager
from typing import Mapping, TextIO

from .dimension_lab import CoveringCurve
from .transport import L1Coordinates, Measure, TransportPlan
from .ultra_core import DistanceMatrix, Srt


class FormatError(ValueError):
    pass


@contextmanager
def _open(path, mode: str = "r"):
    if path == "-" or path is None:
        yield sys.stdin if "r" in mode else sys.stdout
    elif isinstance(path, io.IOBase) or hasattr(path, "read"):
        yield path
    else:
        with open(path, mode, newline="") as fh:
            yield fh


def fmt(x: float) -> str:
    """Shortest repr that round-trips (dyadics print exactly)."""
    return repr(float(x))


def _number(s: str, what: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise FormatError(f"bad {what}: {s!r}") from None


# -- distance matrices -----------------------------------------------------


def read_matrix(path, tol: float = 1e-9) -> DistanceMatrix:
    with _open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError("empty matrix file")
    labels = [c.strip() for c in rows[0]]
    body = rows[1:]
    if len(body) != len(labels) or any(len(r) != len(labels) for r in body):
        raise FormatError(f"expected {len(labels)} rows of {len(labels)} entries")
    d = [[_number(c.strip(), "matrix entry") for c in r] for r in body]
    return DistanceMatrix(labels, d, tol=tol)


def write_matrix(m: DistanceMatrix, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(m.labels)
    for row in m.d:
        w.writerow([fmt(x) for x in row])


# -- trees -----------------------------------------------------------------


def read_srt(path) -> Srt:
    """Lines ``id parent height [label]``; the root's parent is ``-``.

    Ids may be arbitrary tokens; vertices are renumbered in file order.
    """
    entries = []
    with _open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise FormatError(f"line {lineno}: expected 'id parent height [label]'")
            entries.append(parts)
    if not entries:
        raise FormatError("empty tree file")
    index = {}
    for i, e in enumerate(entries):
        if e[0] in index:
            raise FormatError(f"duplicate vertex id {e[0]!r}")
        index[e[0]] = i
    parent, height, labels = [], [], {}
    for i, e in enumerate(entries):
        if e[1] == "-":
            parent.append(-1)
        elif e[1] in index:
            parent.append(index[e[1]])
        else:
            raise FormatError(f"unknown parent {e[1]!r}")
        height.append(_number(e[2], "height"))
        if len(e) == 4:
            labels[i] = e[3]
    return Srt(parent, height, labels)


def write_srt(t: Srt, out: TextIO) -> None:
    for v in t.order:
        v = int(v)
        p = "-" if t.parent[v] < 0 else str(int(t.parent[v]))
        line = f"{v} {p} {fmt(t.height[v])}"
        if v in t.labels:
            line += f" {t.labels[v]}"
        out.write(line + "\n")


# -- measures --------------------------------------------------------------


def read_measure(path, renormalize: bool = False, atol: float = 1e-9) -> Measure:
    """CSV rows ``label,weight`` (an optional header row is skipped).

    Weights must sum to 1 within ``atol`` unless ``renormalize`` is set.
    """
    weights: dict[str, float] = {}
    with _open(path) as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FormatError(f"row {i + 1}: expected 'label,weight'")
            lab, w = row[0].strip(), row[1].strip()
            if i == 0:
                try:
                    float(w)
                except ValueError:
                    continue
            if lab in weights:
                raise FormatError(f"duplicate label {lab!r}")
            weights[lab] = _number(w, "weight")
    if not weights:
        raise FormatError("empty measure file")
    total = math.fsum(weights.values())
    if renormalize:
        if not total > 0:
            raise FormatError("cannot renormalize a zero measure")
        weights = {k: v / total for k, v in weights.items()}
        return Measure(weights, atol=atol)
    if abs(total - 1) > atol:
        raise FormatError(f"weights sum to {total!r}; pass the renormalize flag to rescale")
    return Measure(weights, atol=atol)


def write_measure(mu: Measure, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["label", "weight"])
    for lab, x in mu.items():
        w.writerow([lab, fmt(x)])


# -- plans, coordinates, curves -------------------------------------------


def write_plan(plan: TransportPlan, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["source", "target", "mass"])
    for a, b, m in plan.sorted_entries():
        w.writerow([a, b, fmt(float(m))])
    out.write(f"# cost={fmt(plan.cost)} p={fmt(plan.p)}\n")


def read_plan(path) -> dict[tuple[str, str], float]:
    entries = {}
    with _open(path) as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if not row or row[0] == "source":
                continue
            entries[(row[0], row[1])] = float(row[2])
    return entries


def write_coordinates(t: Srt, phi: L1Coordinates, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["vertex", "weight", "coord"])
    for v, wt, c in zip(phi.vertices, phi.weight, phi.coord):
        w.writerow([int(v), fmt(wt), fmt(c)])


def write_curve(c: CoveringCurve, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epsilon", "count", "log_count"])
    for e, n, lg in c.rows():
        w.writerow([fmt(e), "" if n is None else n, fmt(lg)])


def read_curve(path, source: str | None = None) -> CoveringCurve:
    eps, counts, logs = [], [], []
    with _open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "epsilon":
                continue
            eps.append(_number(row[0], "epsilon"))
            counts.append(int(row[1]) if row[1].strip() else None)
            logs.append(_number(row[2], "log_count") if len(row) > 2 and row[2].strip() else math.log(counts[-1]))
    have_counts = all(c is not None for c in counts)
    name = source or (path if isinstance(path, str) else "curve")
    return CoveringCurve(tuple(eps), tuple(logs), name, exact=have_counts, counts=tuple(counts) if have_counts else None)


# -- key=value reports -----------------------------------------------------


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_value(x) for x in v)
    return str(v)


def write_report(items: Mapping[str, object], out: TextIO) -> None:
    for k, v in items.items():
        out.write(f"{k}={_value(v)}\n")


def read_report(path) -> dict[str, str]:
    out = {}
    with _open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"not a key=value line: {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
