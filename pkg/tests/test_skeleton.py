import numpy as np
import pytest
from scipy.spatial import ConvexHull

from skeleton_oracle import check_skeleton, convex_arrival, linf_arrival
from wirehouse.synthesis.layout import random_rectilinear_polygon
from wirehouse.synthesis.skeleton import InvalidPolygon, straight_skeleton


def interior(sk):
    return sk.points[sk.boundary_count:], sk.times[sk.boundary_count:]


def test_unit_square():
    sk = straight_skeleton([[0, 0], [1, 0], [1, 1], [0, 1]])
    pts, times = interior(sk)
    assert pts.tolist() == [[0.5, 0.5]]
    assert times.tolist() == [0.5]
    assert sorted(sorted(a) for a in sk.arcs) == [[0, 4], [1, 4], [2, 4], [3, 4]]


def test_two_by_one_rectangle():
    sk = straight_skeleton([[0, 0], [2, 0], [2, 1], [0, 1]])
    pts, times = interior(sk)
    order = np.argsort(pts[:, 0])
    assert np.allclose(pts[order], [[0.5, 0.5], [1.5, 0.5]], atol=1e-9, rtol=0)
    assert np.allclose(times, 0.5, atol=1e-12)
    ridge = [a for a in sk.arcs if min(a) >= 4]
    assert len(ridge) == 1
    assert len(sk.arcs) == 5


def test_clockwise_input_is_accepted():
    sk = straight_skeleton([[0, 0], [0, 1], [1, 1], [1, 0]])
    assert np.allclose(interior(sk)[0], [[0.5, 0.5]])


def test_rectilinear_octagon_matches_oracle():
    poly = np.array([[0, 0], [3, 0], [3, 1], [2, 1], [2, 2], [1, 2], [1, 1], [0, 1]], float)
    # a T-shape turned upside down: walk it counterclockwise
    assert check_skeleton(poly, straight_skeleton(poly), linf_arrival) == []


@pytest.mark.parametrize("seed", range(12))
def test_random_rectilinear_matches_oracle(seed):
    poly = random_rectilinear_polygon(np.random.default_rng(seed))
    assert check_skeleton(poly, straight_skeleton(poly), linf_arrival, grid=25) == []


@pytest.mark.parametrize("seed", range(10))
def test_convex_skeleton_is_a_tree(seed):
    rng = np.random.default_rng(100 + seed)
    pts = rng.uniform(-1, 1, size=(int(rng.integers(5, 12)), 2))
    poly = pts[ConvexHull(pts).vertices]
    sk = straight_skeleton(poly)
    k = len(poly)
    assert len(sk.arcs) == sk.node_count - 1
    # a convex skeleton has k leaves (the corners)
    assert (sk.degree()[:k] == 1).all()
    assert check_skeleton(poly, sk, convex_arrival, grid=20) == []


def test_boundary_nodes_and_interior_degrees():
    poly = random_rectilinear_polygon(np.random.default_rng(7))
    sk = straight_skeleton(poly)
    k = sk.boundary_count
    assert np.array_equal(sk.points[:k], poly)
    assert (sk.times[:k] == 0).all()
    assert (sk.degree()[k:] >= 2).all()
    assert (sk.times[k:] > 0).all()


@pytest.mark.parametrize("poly", [
    [[0, 0], [1, 0]],
    [[0, 0], [1, 0], [0, 0], [0, 1]],
    [[0, 0], [1, 1], [1, 0], [0, 1]],
    [[0, 0], [1, 0], [2, 0]],
    [[0, 0], [1, 0], [np.nan, 1]],
])
def test_invalid_polygons(poly):
    with pytest.raises(InvalidPolygon):
        straight_skeleton(poly)
