from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import shuffled
from wirehouse.sequencing import (
    InvalidInput, bfs_sequence, canonical_sort, canonicalize, continuous_features,
    dump_features, extract_features, load_features,
)
from wirehouse.wireframe import (
    Wireframe, bin_to_coord, build_graph, connected_components, coord_to_bin, normalize,
)


def oracle_bfs(segments, presorted):
    """Second BFS, written against the plain rule: roots and neighbours by
    ascending presorted position."""
    pos = {s: i for i, s in enumerate(presorted)}
    touching = {}
    for i, (a, b) in enumerate(segments):
        touching.setdefault(a, []).append(i)
        touching.setdefault(b, []).append(i)
    order, seen = [], set()
    for root in presorted:
        if root in seen:
            continue
        seen.add(root)
        q = deque([root])
        while q:
            i = q.popleft()
            order.append(i)
            nbrs = {j for v in segments[i] for j in touching[v] if j != i}
            for j in sorted(nbrs, key=pos.get):
                if j not in seen:
                    seen.add(j)
                    q.append(j)
    return order


def test_z_orders_first():
    w = Wireframe([[0, 0, 1], [0, 0, 0]], [[0, 1]])
    c = canonicalize(w)
    assert c.vertices.tolist() == [[0, 0, 0], [0, 0, 1]]
    assert c.segments.tolist() == [[0, 1]]


def test_y_breaks_z_tie():
    w = Wireframe([[0, 1, 0], [5, 0, 0]], [[0, 1]])
    assert canonicalize(w).vertices.tolist() == [[5, 0, 0], [0, 1, 0]]


def test_x_breaks_zy_tie():
    w = Wireframe([[1, 0, 0], [0, 0, 0]], [[0, 1]])
    assert canonicalize(w).vertices[0].tolist() == [0, 0, 0]


def test_lower_square_comes_first(two_squares):
    c = canonicalize(two_squares)
    z = c.vertices[c.segments[:, 0], 2]
    assert (z[:4] == 0.0).all() and (z[4:] == 1.0).all()


def test_permutation_invariance_cube(cube):
    base = canonicalize(cube)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert canonicalize(shuffled(cube, rng)) == base


def test_houses_permutation_invariant_and_contiguous(desk_houses):
    rng = np.random.default_rng(1)
    for w in desk_houses:
        c = canonicalize(w)
        assert canonicalize(shuffled(w, rng)) == c
        s = shuffled(w, rng)
        assert np.array_equal(extract_features(s, order=canonical_sort(s)),
                              extract_features(c))
        label = connected_components(build_graph(c)).label
        for k in np.unique(label):
            where = np.flatnonzero(label == k)
            assert where[-1] - where[0] + 1 == len(where)


def test_canonical_segments_are_ordered(desk_houses):
    for w in desk_houses[:3]:
        c = canonicalize(w)
        assert (c.segments[:, 0] < c.segments[:, 1]).all()
        keys = [tuple(v) for v in c.vertices[:, ::-1].tolist()]
        assert keys == sorted(keys)


def test_bfs_matches_oracle(desk_houses, cube):
    for w in [cube] + desk_houses[:5]:
        order = canonical_sort(w)
        got = bfs_sequence(w, build_graph(w), order.presorted)
        assert got.tolist() == oracle_bfs(w.segments.tolist(), order.presorted.tolist())
        assert sorted(got.tolist()) == list(range(w.num_segments))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bfs_oracle_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 14))
    pts = rng.integers(-3, 4, size=(n, 3)).astype(float)
    pts = np.unique(pts, axis=0)
    n = len(pts)
    if n < 2:
        return
    pairs = {tuple(sorted(p)) for p in rng.integers(0, n, size=(n, 2)).tolist() if p[0] != p[1]}
    if not pairs:
        return
    w = Wireframe(pts, sorted(pairs))
    order = canonical_sort(w)
    got = bfs_sequence(w, build_graph(w), order.presorted)
    assert got.tolist() == oracle_bfs(w.segments.tolist(), order.presorted.tolist())
    assert canonicalize(shuffled(w, rng)) == canonicalize(w)


def test_bins():
    assert coord_to_bin(-1.0) == 0
    assert coord_to_bin(0.0) == 64
    assert coord_to_bin(1.0) == 127
    assert bin_to_coord(0) == -1 + 0.5 / 64
    b = np.arange(128)
    assert np.array_equal(coord_to_bin(bin_to_coord(b)), b)


def test_direction_bins_for_unit_x():
    w = Wireframe([[0, 0, 0], [1, 0, 0]], [[0, 1]])
    f = extract_features(canonicalize(w))
    assert f[0, 7:10].tolist() == [127, 64, 64]
    assert f[0, 13:16].tolist() == [0, 0, 0]


def test_cube_angles(cube):
    c = canonicalize(normalize(cube))
    f = extract_features(c)
    cont = continuous_features(c)
    assert np.allclose(cont[:, 13:16], 90.0)
    assert (f[:, 13] == f[:, 14]).all() and (f[:, 14] == f[:, 15]).all()
    assert (f[:, 13] == 64).all()


def test_features_in_range(desk_houses):
    for w in desk_houses:
        f = extract_features(canonicalize(w))
        assert f.shape == (w.num_segments, 16)
        assert f.min() >= 0 and f.max() < 128


def test_zero_length_rejected():
    # a raw, non-validated pair of coincident endpoints cannot be built as a
    # Wireframe, so exercise the feature guard directly
    class Fake:
        vertices = np.zeros((2, 3))
        segments = np.array([[0, 1]])
        num_segments = 1
        num_vertices = 2

    with pytest.raises(InvalidInput):
        continuous_features(Fake(), build_graph(Wireframe([[0, 0, 0], [1, 0, 0]], [[0, 1]])))


def test_feature_dump_roundtrip(desk_houses):
    f = extract_features(canonicalize(desk_houses[0]))
    text = dump_features(f)
    assert text.startswith("[[")
    assert np.array_equal(load_features(text), f)
