import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import brute_blocks, nested_matrix
from ultra_ot.ultra_core import (
    DistanceMatrix,
    Srt,
    StructureError,
    UltrametricError,
    build_srt,
    check_srt,
    covering_number,
    covering_partition,
    distance_row,
    lca_distance,
    matrix_from_srt,
    quantize_heights,
    remove_ball,
    restrict,
    sorted_labels,
    srt_from_matrix,
    validate_ultrametric,
)
from ultra_ot.generators import random_ultrametric
from ultra_ot.rng import stream


def abc():
    return DistanceMatrix(["a", "b", "c"], [[0, 1, 2], [1, 0, 2], [2, 2, 0]])


def all_triples_ok(d, tol=0.0):
    n = len(d)
    return all(d[x][z] <= max(d[x][y], d[y][z]) + tol for x, y, z in itertools.product(range(n), repeat=3))


def test_three_point_tree():
    t = srt_from_matrix(abc())
    assert t.n_leaves == 3 and t.n_vertices == 5
    assert t.height[t.root] == 1.0
    assert lca_distance(t, "a", "b") == 1.0
    assert lca_distance(t, "a", "c") == 2.0
    assert check_srt(t) == []


def test_violation_witness():
    m = DistanceMatrix(["a", "b", "c"], [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    v = validate_ultrametric(m)
    assert v is not None
    assert v.dxz > max(v.dxy, v.dyz)
    assert {v.x, v.z} == {"a", "c"} and v.y == "b"
    with pytest.raises(UltrametricError) as e:
        srt_from_matrix(m)
    assert e.value.violation == v


def test_tolerance_absorbs_noise():
    d = np.array([[0, 1, 2], [1, 0, 2 + 1e-12], [2, 2 + 1e-12, 0]])
    m = DistanceMatrix(["a", "b", "c"], d)
    assert validate_ultrametric(m, tol=1e-9) is None
    d2 = np.array([[0, 1, 2 + 1e-6], [1, 0, 2], [2 + 1e-6, 2, 0]])
    m2 = DistanceMatrix(["a", "b", "c"], d2)
    assert validate_ultrametric(m2, tol=0.0) is not None


@pytest.mark.parametrize(
    "d, msg",
    [
        ([[0, 1], [2, 0]], "asymmetric"),
        ([[0, -1], [-1, 0]], "negative"),
        ([[1, 1], [1, 0]], "diagonal"),
        ([[0, 0], [0, 0]], "zero distance"),
    ],
)
def test_matrix_rejects_malformed(d, msg):
    with pytest.raises(StructureError, match=msg):
        DistanceMatrix(["a", "b"], d)


def test_srt_rejects_malformed():
    with pytest.raises(StructureError, match="decrease"):
        Srt([-1, 0, 0], [1.0, 1.0, 0.0], {1: "a", 2: "b"})
    with pytest.raises(StructureError, match="single child"):
        Srt([-1, 0, 1, 1], [1.0, 0.5, 0.0, 0.0], {2: "a", 3: "b"})
    with pytest.raises(StructureError, match="one root"):
        Srt([-1, -1], [0.0, 0.0], {0: "a", 1: "b"})
    with pytest.raises(StructureError, match="labels"):
        Srt([-1, 0, 0], [1.0, 0.0, 0.0], {1: "a"})


def test_build_srt_splices_single_children():
    t = build_srt([-1, 0, 1, 1, 0], [1.0, 0.5, 0.0, 0.0, 0.0], {2: "a", 3: "b", 4: "c"})
    assert check_srt(t) == []
    assert t.n_vertices == 5


@given(st.integers(0, 10**6), st.integers(1, 25))
def test_independent_ultrametric_roundtrip(seed, n):
    labels, d = nested_matrix(seed, n)
    assert all_triples_ok(d)
    m = DistanceMatrix(labels, d, tol=0.0)
    assert validate_ultrametric(m, tol=0.0) is None
    t = srt_from_matrix(m, tol=0.0)
    assert check_srt(t) == []
    back = matrix_from_srt(t, labels)
    assert np.array_equal(back.d, m.d)


@given(st.integers(0, 10**6), st.integers(3, 12))
def test_random_perturbation_detected(seed, n):
    labels, d = nested_matrix(seed, n)
    r = np.random.default_rng(seed)
    i, j = r.choice(n, 2, replace=False)
    d = np.array(d)
    d[i, j] = d[j, i] = d[i, j] * 1.5 + 0.1
    m = DistanceMatrix(labels, d, tol=0.0)
    expected_ok = all_triples_ok(d.tolist())
    v = validate_ultrametric(m, tol=0.0)
    assert (v is None) == expected_ok
    if v is not None:
        a, b, c = (m.index(x) for x in (v.x, v.y, v.z))
        assert d[a, c] > max(d[a, b], d[b, c])


@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_ball_diameter_is_twice_height(seed, n):
    t = random_ultrametric(n, stream(seed))
    m = matrix_from_srt(t)
    for v in range(t.n_vertices):
        idx = [m.index(x) for x in t.ball(v)]
        assert m.d[np.ix_(idx, idx)].max() == 2 * t.height[v]


@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_distance_row_matches_lca(seed, n):
    t = random_ultrametric(n, stream(seed))
    for x in t.leaf_labels[:5]:
        row = distance_row(t, x)
        assert row.tolist() == [lca_distance(t, x, y) for y in t.leaf_labels]


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.sampled_from([1.5, 2.0, 3.0]))
def test_quantization_bounds(seed, n, q):
    t = random_ultrametric(n, stream(seed))
    tq = quantize_heights(t, q)
    assert check_srt(tq) == []
    d = matrix_from_srt(t).d
    dq = matrix_from_srt(tq, t.leaf_labels).d
    off = ~np.eye(t.n_leaves, dtype=bool)
    assert np.all(d[off] <= dq[off])
    assert np.all(dq[off] < q * d[off])
    levels = {round(float(-np.log(2 * h) / np.log(q)), 9) for h in tq.height if h > 0}
    assert all(abs(x - round(x)) < 1e-9 for x in levels)


def test_quantize_rejects():
    t = srt_from_matrix(abc())
    with pytest.raises(ValueError):
        quantize_heights(t, 1.0)
    with pytest.raises(ValueError, match="diameter"):
        quantize_heights(t, 2.0)


@given(st.integers(0, 10**6), st.integers(1, 20), st.floats(0.01, 1.2))
def test_covering_number_matches_union_find(seed, n, eps):
    labels, d = nested_matrix(seed, n)
    t = srt_from_matrix(DistanceMatrix(labels, d, tol=0.0), tol=0.0)
    assert covering_number(t, eps) == brute_blocks(labels, d, eps)
    blocks = covering_partition(t, eps)
    assert len(blocks) == covering_number(t, eps)
    assert sorted(x for b in blocks for x in b) == sorted(labels)


@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_restrict_is_isometric(seed, n):
    t = random_ultrametric(n, stream(seed))
    keep = t.leaf_labels[::2]
    s = restrict(t, keep)
    assert np.array_equal(matrix_from_srt(s, keep).d, matrix_from_srt(t, keep).d)


def test_remove_ball():
    t = srt_from_matrix(abc())
    v = t.lca(t.vertex_of("a"), t.vertex_of("b"))
    s = remove_ball(t, v)
    assert s.leaf_labels == ("c",)
    with pytest.raises(KeyError):
        restrict(t, ["zz"])


def test_natural_label_order():
    assert sorted_labels(["w10", "w2", "w1"]) == ["w1", "w2", "w10"]
