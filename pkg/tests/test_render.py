import numpy as np
import pytest

from oracles import ray_cast_depth

from hl3d import synthetic
from hl3d.render import polygons_to_triangles, rasterize, render_depth
from hl3d.synthetic import make_camera


def _facing_wall(y=3.0):
    return np.array([[-5, y, -5], [5, y, -5], [5, y, 5], [-5, y, 5]], dtype=float)


def test_fronto_parallel_wall_has_constant_depth():
    cam = make_camera("c", (0, 0, 0), (0, 1, 0), 32, 24)
    d = render_depth([_facing_wall(3.0)], cam)
    assert np.allclose(d, 3.0)


def test_nearer_polygon_wins():
    cam = make_camera("c", (0, 0, 0), (0, 1, 0), 32, 24)
    small = np.array([[-0.2, 1.0, -0.2], [0.2, 1.0, -0.2], [0.2, 1.0, 0.2], [-0.2, 1.0, 0.2]])
    d = render_depth([_facing_wall(3.0), small], cam)
    assert d[12, 16] == pytest.approx(1.0)
    assert d[0, 0] == pytest.approx(3.0)


def test_behind_camera_is_empty():
    cam = make_camera("c", (0, 0, 0), (0, 1, 0), 16, 12)
    assert np.all(render_depth([_facing_wall(-3.0)], cam) == 0.0)


def test_polygon_straddling_the_camera_plane_is_clipped():
    cam = make_camera("c", (0, 0, 0), (0, 1, 0), 16, 12)
    floor = np.array([[-5, -5, -1], [5, -5, -1], [5, 5, -1], [-5, 5, -1]], dtype=float)
    d = render_depth([floor], cam)
    assert np.all(d[-1] > 0)
    assert np.all(d[0] == 0)


def test_triangle_owner_index():
    tris, owner = polygons_to_triangles([_facing_wall(3.0), _facing_wall(4.0)])
    assert owner.tolist() == [0, 0, 1, 1]
    _, index = rasterize(tris, make_camera("c", (0, 0, 0), (0, 1, 0), 8, 6))
    assert set(np.unique(index)) <= {0, 1}


def test_box_room_matches_ray_cast_oracle():
    scene = synthetic.box_room(n_cameras=2, width=40, height=30)
    polys = [s.coords for s in scene.surfaces]
    for cam in scene.cameras:
        d = render_depth(polys, cam)
        ref = ray_cast_depth(polygons_to_triangles(polys)[0], cam)
        both = (d > 0) & (ref > 0)
        assert both.mean() > 0.99
        assert np.mean(np.abs(d[both] - ref[both]) <= 1e-6) > 0.99
