import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Point

from generators import star_polygon
from oracles import central_difference

from hl3d.config import FitConfig
from hl3d.geometry import Plane, Polygon3, polygon_area_3d
from hl3d.prototype import losses as L
from hl3d.prototype.holes import close_floor_holes, close_wall_holes
from hl3d.prototype.init import alpha_shape, ransac_planes, simplify_outline
from hl3d.prototype.merge import merge_and_simplify, merge_close_vertices, merge_polygons, simplify_rings
from hl3d.prototype.optimize import FitTrace, optimize
from hl3d.prototype.types import PrototypeSet, project_vertices, read_prototype, write_prototype
from hl3d.scene_io import LabeledMesh, ObservationSegments
from hl3d.semantics import SemanticClass as C

UP = Plane(np.array([0.0, 0.0, 1.0]), 0.0)


def _two_floors(gap=0.04):
    pool = np.array([[0, 0, 0], [2, 0, 0], [2, 2, 0], [0, 2, 0], [2 + gap, 0, 0], [4, 0, 0], [4, 2, 0], [2 + gap, 2, 0]], dtype=float)
    return PrototypeSet(pool, [Polygon3(UP, (0, 1, 2, 3), C.FLOOR), Polygon3(UP, (4, 5, 6, 7), C.FLOOR)])


def _floor_points(rng, lo=(0, 0), hi=(4, 2), n=800):
    return np.column_stack([rng.uniform(lo[0], hi[0], n), rng.uniform(lo[1], hi[1], n), np.zeros(n)])


# --- losses ----------------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_prox_gradient_small_configs(seed):
    rng = np.random.default_rng(seed)
    pts_poly, n, d = star_polygon(rng, m=5)
    loops = [[np.arange(5)]]
    x = rng.normal(size=(10, 3))
    f = lambda P: L.loss_prox(P, n[None], np.array([d]), loops, x).value  # noqa: E731
    g = L.loss_prox(pts_poly, n[None], np.array([d]), loops, x).g_pool
    assert np.allclose(g, central_difference(f, pts_poly), atol=1e-5)


def test_prox_zero_for_points_on_polygon(unit_square):
    loops = [[np.arange(4)]]
    x = np.array([[0.2, 0.3, 0.0], [0.9, 0.9, 0.0]])
    r = L.loss_prox(unit_square, UP.normal[None], np.array([0.0]), loops, x)
    assert r.value == pytest.approx(0.0, abs=1e-12)


def test_simple_is_perimeter(unit_square):
    r = L.loss_simple(unit_square, UP.normal[None], np.array([0.0]), [[np.arange(4)]])
    assert r.value == pytest.approx(4.0)


def test_empty_counts_crossing_segments(unit_square):
    loops = [[np.arange(4)]]
    a = np.array([[0.5, 0.5, -1.0], [3.0, 3.0, -1.0]])
    b = np.array([[0.5, 0.5, 1.0], [3.0, 3.0, 1.0]])
    hit = L.loss_empty(unit_square, UP.normal[None], np.array([0.0]), loops, a, b, 0.5)
    miss = L.loss_empty(unit_square, UP.normal[None], np.array([0.0]), loops, a[1:], b[1:], 0.5)
    assert hit.value > 0
    assert miss.value == 0.0


def test_edge_share_counts():
    counts = L.edge_share_counts([[np.array([0, 1, 2])], [np.array([2, 1, 3])]])
    assert counts[(1, 2)] == 2
    assert counts[(0, 1)] == 1


# --- vertex projection and serialization ------------------------------------------


def test_project_vertices_onto_corner():
    N = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    D = np.array([1.0, 2.0, 3.0])
    pool = np.array([[0.9, 2.2, 2.7], [5.0, 5.0, 5.0]])
    out, worst = project_vertices(pool, N, D, [[0, 1, 2], [2]])
    assert np.allclose(out[0], [1, 2, 3])
    assert np.allclose(out[1], [5, 5, 3])
    assert worst < 1e-12


def test_prototype_json_roundtrip(tmp_path):
    p = _two_floors()
    write_prototype(p, tmp_path / "p.json")
    q = read_prototype(tmp_path / "p.json")
    assert np.allclose(q.pool, p.pool)
    assert [x.ring for x in q.polygons] == [x.ring for x in p.polygons]
    assert all(x.cls == C.FLOOR for x in q.polygons)


# --- initialization ---------------------------------------------------------------


def test_ransac_finds_two_planes():
    rng = np.random.default_rng(0)
    a = _floor_points(rng, n=400)
    b = np.column_stack([rng.uniform(0, 4, 400), np.zeros(400), rng.uniform(0, 2, 400)])
    found = ransac_planes(np.vstack([a, b]), None, 0.02, rng)
    assert len(found) == 2
    normals = sorted((np.abs(p.normal) for p, _ in found), key=lambda n: n[2])
    assert np.allclose(normals, [[0, 1, 0], [0, 0, 1]], atol=0.01)


def test_alpha_shape_recovers_l_shape():
    g = np.mgrid[0:2:0.05, 0:2:0.05].reshape(2, -1).T
    pts = g[~((g[:, 0] > 1.0) & (g[:, 1] > 1.0))]
    parts = alpha_shape(pts, 0.15)
    assert len(parts) == 1
    poly = simplify_outline(parts[0], 0.05)
    # the reflex corner may come back chamfered
    assert len(poly.exterior.coords) - 1 <= 7
    assert not poly.contains(Point(1.5, 1.5))
    assert poly.area == pytest.approx(1.95**2 - 0.9**2, rel=0.05)


# --- merging ------------------------------------------------------------------------


def test_merge_close_vertices_shares_the_seam():
    q = merge_close_vertices(_two_floors(), 0.1)
    assert len(q.pool) == 6
    assert set(q.polygons[0].ring) & set(q.polygons[1].ring) and len(set(q.polygons[0].ring) & set(q.polygons[1].ring)) == 2
    assert q.plane_residual() <= 1e-4


def test_merge_polygons_joins_coplanar_neighbours():
    rng = np.random.default_rng(0)
    q = merge_polygons(merge_close_vertices(_two_floors(), 0.1), _floor_points(rng), 0.1)
    assert len(q) == 1
    assert polygon_area_3d(q.coords(0)) == pytest.approx(8.0, abs=0.1)


def test_merge_keeps_far_apart_polygons():
    rng = np.random.default_rng(0)
    q = merge_and_simplify(_two_floors(gap=1.0), 0.1, _floor_points(rng))
    assert len(q) == 2


def test_simplify_rings_drops_near_collinear_vertex():
    pool = np.array([[0, 0, 0], [1, 0.01, 0], [2, 0, 0], [2, 2, 0], [0, 2, 0]], dtype=float)
    q = simplify_rings(PrototypeSet(pool, [Polygon3(UP, (0, 1, 2, 3, 4), C.FLOOR)]), 0.05)
    assert len(q.polygons[0].ring) == 4


# --- optimization -------------------------------------------------------------------


def test_optimize_levels_a_tilted_floor():
    rng = np.random.default_rng(0)
    pts = _floor_points(rng, hi=(2, 2), n=2000)
    plane = Plane.through([0.05, 0, 1], [0, 0, 0.1])
    ring = np.array([[0.1, 0.1], [1.8, 0.2], [1.9, 1.9], [0.2, 1.8]])
    start = PrototypeSet(np.column_stack([ring, plane.height_at(ring)]), [Polygon3(plane, (0, 1, 2, 3), C.FLOOR)])
    trace = FitTrace()
    out = optimize(start, pts, None, FitConfig(n_iters=100), trace)
    assert trace.accepted_nonincreasing()
    assert trace.max_residual <= 1e-4
    assert abs(out.polygons[0].plane.normal[2]) > 1 - 1e-6
    assert np.abs(out.pool[:, 2]).max() < 1e-3
    assert polygon_area_3d(out.coords(0)) > polygon_area_3d(start.coords(0))


def test_optimize_rejects_nan():
    start = _two_floors()
    pts = np.full((3, 3), np.nan)
    with pytest.raises(FloatingPointError):
        optimize(start, pts, None, FitConfig(n_iters=2))


# --- hole closing ---------------------------------------------------------------------


def test_floor_hole_closed_by_object_footprint():
    outer = [[0, 0, 0], [4, 0, 0], [4, 3, 0], [0, 3, 0]]
    hole = [[1, 1, 0], [1, 2, 0], [2, 2, 0], [2, 1, 0]]
    proto = PrototypeSet(np.array(outer + hole, dtype=float), [Polygon3(UP, (0, 1, 2, 3), C.FLOOR, ((4, 5, 6, 7),))])
    # an object box top and sides over the hole
    v = np.array([[1, 1, 0.5], [2, 1, 0.5], [2, 2, 0.5], [1, 2, 0.5], [1, 1, 0.01], [2, 1, 0.01]], dtype=float)
    obj = LabeledMesh(v, np.array([[0, 1, 2], [0, 2, 3], [4, 5, 1], [4, 1, 0]]), np.full(6, C.OBJECT, dtype=np.uint8))
    out = close_floor_holes(proto, obj)
    assert out.polygons[0].holes == ()
    assert polygon_area_3d(out.coords(0)) == pytest.approx(12.0)


def test_floor_hole_kept_without_objects():
    outer = [[0, 0, 0], [4, 0, 0], [4, 3, 0], [0, 3, 0]]
    hole = [[1, 1, 0], [1, 2, 0], [2, 2, 0], [2, 1, 0]]
    proto = PrototypeSet(np.array(outer + hole, dtype=float), [Polygon3(UP, (0, 1, 2, 3), C.FLOOR, ((4, 5, 6, 7),))])
    empty = LabeledMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.uint8))
    assert close_floor_holes(proto, empty).polygons[0].holes == ((4, 5, 6, 7),)


def _wall_over_floor(gap):
    pool = np.array([[0, 0, 0], [4, 0, 0], [4, 3, 0], [0, 3, 0], [1, 1.5, gap], [3, 1.5, gap], [3, 1.5, 2.5], [1, 1.5, 2.5]], dtype=float)
    wall = Polygon3(Plane(np.array([0.0, -1.0, 0.0]), -1.5), (4, 5, 6, 7), C.WALL)
    return PrototypeSet(pool, [Polygon3(UP, (0, 1, 2, 3), C.FLOOR), wall])


@pytest.mark.parametrize("gap", [0.1, 0.4, 1.0])
def test_unobserved_wall_gap_is_closed(gap):
    out = close_wall_holes(_wall_over_floor(gap), ObservationSegments.empty(), 0.002)
    assert out.coords(1)[:, 2].min() == pytest.approx(0.0, abs=1e-9)
    assert out.plane_residual() <= 1e-4


def test_tiny_wall_gap_left_alone():
    out = close_wall_holes(_wall_over_floor(0.01), ObservationSegments.empty(), 0.002)
    assert out.coords(1)[:, 2].min() == pytest.approx(0.01)


def test_sparse_crossings_still_close_the_gap():
    # 0.001 crossings / cm^2 is below the 0.002 threshold
    rng = np.random.default_rng(0)
    n = 8
    hit = np.column_stack([rng.uniform(1, 3, n), np.full(n, 1.5), rng.uniform(0, 0.4, n)])
    segs = ObservationSegments(hit - [0, 1, 0], hit + [0, 1, 0], np.zeros(n, dtype=np.int64))
    out = close_wall_holes(_wall_over_floor(0.4), segs, 0.002)
    assert out.coords(1)[:, 2].min() == pytest.approx(0.0, abs=1e-9)
