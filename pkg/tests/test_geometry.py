import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Polygon, box

from generators import convex_polygon
from oracles import shoelace, svd_plane

from hl3d.geometry import (
    Plane,
    Polygon3,
    cdt_triangulate,
    fit_plane,
    plane_basis,
    point_to_edge_distance,
    point_to_polygon_distance,
    polygon_area_3d,
    polygon_hausdorff,
    rdp_simplify,
    ring_is_simple,
    segment_polygon_intersection,
    signed_area_2d,
    triangulate_polygon3,
)

finite = st.integers(-1000, 1000).map(lambda i: i / 100.0)
vec3 = st.tuples(finite, finite, finite).map(np.array)
seeds = st.integers(0, 2**32 - 1)


@given(vec3.filter(lambda v: np.linalg.norm(v) > 1e-3), vec3)
def test_plane_2d_roundtrip(n, p):
    plane = Plane.through(n, p)
    x = p + np.array([0.3, -1.2, 2.0])
    q = plane.project(x)
    assert abs(plane.signed_distance(q)) < 1e-9
    assert np.allclose(plane.from_2d(plane.to_2d(q)), q, atol=1e-9)


@given(vec3.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_plane_basis_is_orthonormal(n):
    n = n / np.linalg.norm(n)
    u, v = plane_basis(n)
    m = np.stack([u, v, n])
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)


def test_plane_rejects_non_unit_normal():
    with pytest.raises(ValueError):
        Plane(np.array([0.0, 0.0, 2.0]), 1.0)


@given(seeds)
def test_fit_plane_matches_svd_oracle(seed):
    rng = np.random.default_rng(seed)
    pts = convex_polygon(rng, n=(5, 9)) + rng.normal(0, 1e-3, (1, 3))
    plane = fit_plane(pts)
    n, d = svd_plane(pts)
    s = np.sign(plane.normal @ n)
    assert np.allclose(plane.normal, s * n, atol=1e-9)
    assert abs(plane.offset - s * d) < 1e-9


def test_fit_plane_orientation_from_reference_normals():
    pts = np.array([[0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=float)
    assert fit_plane(pts, ref_normals=[[0, 0, 1]] * 3).normal[2] > 0
    assert fit_plane(pts, ref_normals=[[0, 0, -1]] * 3).normal[2] < 0


def test_fit_plane_rejects_collinear():
    with pytest.raises(ValueError):
        fit_plane([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]])


def test_point_to_polygon_distance_cases(unit_square):
    assert point_to_polygon_distance([0.5, 0.5, 2.0], unit_square) == pytest.approx(2.0)
    assert point_to_polygon_distance([2.0, 0.5, 0.0], unit_square) == pytest.approx(1.0)
    assert point_to_polygon_distance([2.0, 2.0, 1.0], unit_square) == pytest.approx(np.sqrt(3.0))
    assert point_to_polygon_distance([1.0, 1.0, 0.0], unit_square) == 0.0


def test_point_to_polygon_distance_in_hole():
    outer = np.array([[0, 0, 0], [4, 0, 0], [4, 4, 0], [0, 4, 0]], dtype=float)
    hole = np.array([[1, 1, 0], [1, 3, 0], [3, 3, 0], [3, 1, 0]], dtype=float)
    assert point_to_polygon_distance([2, 2, 0], outer, [hole]) == pytest.approx(1.0)
    assert point_to_polygon_distance([0.5, 2, 0.3], outer, [hole]) == pytest.approx(0.3)


def test_point_to_edge_distance():
    assert point_to_edge_distance([0, 1, 0], ([0, 0, 0], [2, 0, 0])) == pytest.approx(1.0)
    assert point_to_edge_distance([-3, 4, 0], ([0, 0, 0], [2, 0, 0])) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        point_to_edge_distance([0, 0, 0], ([1, 1, 1], [1, 1, 1]))


def test_segment_polygon_intersection(unit_square):
    hit = segment_polygon_intersection([0.5, 0.5, -1], [0.5, 0.5, 1], unit_square)
    assert np.allclose(hit, [0.5, 0.5, 0])
    assert segment_polygon_intersection([2, 2, -1], [2, 2, 1], unit_square) is None
    assert segment_polygon_intersection([0.5, 0.5, 1], [0.5, 0.5, 2], unit_square) is None
    # coplanar segments never count
    assert segment_polygon_intersection([0.2, 0.5, 0], [0.8, 0.5, 0], unit_square) is None


@given(seeds)
def test_hausdorff_symmetric_and_zero_on_self(seed):
    rng = np.random.default_rng(seed)
    a, b = convex_polygon(rng), convex_polygon(rng)
    assert polygon_hausdorff(a, a) == 0.0
    assert polygon_hausdorff(a, b) == pytest.approx(polygon_hausdorff(b, a))
    shift = np.array([0.0, 0.0, 0.37])
    flat = a.copy()
    flat[:, 2] = 0.0
    assert polygon_hausdorff(flat, flat + shift) == pytest.approx(0.37)


@given(seeds)
def test_triangulation_preserves_area(seed):
    rng = np.random.default_rng(seed)
    poly = convex_polygon(rng)
    tris = triangulate_polygon3(poly)
    area = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1).sum()
    # CDT snaps to a fine grid, so agreement is limited by perimeter * grid
    assert area == pytest.approx(polygon_area_3d(poly), abs=1e-7)


def test_triangulation_with_hole():
    outer = np.array([[0, 0, 1], [4, 0, 1], [4, 4, 1], [0, 4, 1]], dtype=float)
    hole = np.array([[1, 1, 1], [1, 3, 1], [3, 3, 1], [3, 1, 1]], dtype=float)
    tris = triangulate_polygon3(outer, [hole])
    area = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1).sum()
    assert area == pytest.approx(12.0)
    assert np.allclose(tris[..., 2], 1.0)


def test_cdt_respects_constraints():
    region = box(0, 0, 2, 1)
    pts, tris = cdt_triangulate(region, [np.array([[1.0, -1.0], [1.0, 2.0]])])
    # every triangle lies on one side of x = 1
    cx = pts[tris].mean(axis=1)[:, 0]
    for t, c in zip(tris, cx):
        xs = pts[t][:, 0]
        assert np.all(xs <= 1 + 1e-12) if c < 1 else np.all(xs >= 1 - 1e-12)
    assert sum(shoelace(pts[t]) for t in tris) == pytest.approx(2.0)


def test_rdp_drops_collinear_points():
    ring = np.array([[0, 0], [1, 0], [2, 0.001], [3, 0], [3, 2], [0, 2]], dtype=float)
    out = rdp_simplify(ring, 0.01)
    assert len(out) == 4
    assert signed_area_2d(out) == pytest.approx(6.0)


def test_ring_is_simple():
    assert ring_is_simple([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert not ring_is_simple([[0, 0], [1, 1], [1, 0], [0, 1]])


def test_polygon3_rejects_short_ring():
    with pytest.raises(ValueError):
        Polygon3(Plane(np.array([0.0, 0.0, 1.0]), 0.0), (0, 1))


def test_polygon3_edges_cover_holes():
    p = Polygon3(Plane(np.array([0.0, 0.0, 1.0]), 0.0), (0, 1, 2, 3), holes=((4, 5, 6),))
    assert len(p.edges()) == 7
    assert sorted(p.vertex_ids()) == list(range(7))


def test_shoelace_agrees_with_shapely():
    ring = np.array([[0, 0], [3, 0], [3, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    assert shoelace(ring) == pytest.approx(Polygon(ring).area)
