import json

import numpy as np
import pytest

from hl3d import synthetic
from hl3d.layout.graph import GraphEdge, LevelInfo, RoomNode, SceneGraph
from hl3d.scene_io import (
    CameraFrame,
    LabeledMesh,
    SceneFormatError,
    backproject_labeled_pixels,
    build_observation_segments,
    clean_mesh,
    dumps_scene_graph,
    load_frames,
    load_labeled_mesh,
    read_depth_png,
    read_scene_graph,
    read_vertex_property,
    scene_graph_polygons,
    write_depth_png,
    write_frames,
    write_labeled_mesh,
    write_layout_obj,
    write_scene_graph,
)
from hl3d.semantics import SemanticClass as C


def _quad_mesh():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return LabeledMesh(v, np.array([[0, 1, 2], [0, 2, 3]]), np.array([C.FLOOR] * 4, dtype=np.uint8))


def test_mesh_roundtrip_with_extra_property(tmp_path):
    mesh = _quad_mesh()
    path = tmp_path / "m.ply"
    write_labeled_mesh(mesh, path, {"superpoint": [0, 0, 1, 1]})
    back = load_labeled_mesh(path, clean=False)
    assert np.allclose(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.labels, mesh.labels)
    assert read_vertex_property(path, "superpoint").tolist() == [0, 0, 1, 1]


def test_clean_mesh_welds_and_drops_degenerate():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1e-9], [2, 2, 0]], dtype=float)
    t = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 4]])
    m = clean_mesh(v, t, np.zeros(5, dtype=np.uint8))
    assert m.n_vertices == 4
    # vertex 3 welds onto 2; (0, 2, 4) is collinear and goes
    assert m.triangles.tolist() == [[0, 1, 2], [0, 1, 2]]
    assert m.dropped_triangles == 1


def test_missing_label_property_is_rejected(tmp_path):
    from plyfile import PlyData, PlyElement

    vert = np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0)], dtype=[("x", "f4"), ("y", "f4"), ("z", "f4")])
    face = np.array([([0, 1, 2],)], dtype=[("vertex_indices", "i4", (3,))])
    path = tmp_path / "bad.ply"
    PlyData([PlyElement.describe(vert, "vertex"), PlyElement.describe(face, "face")]).write(str(path))
    with pytest.raises(SceneFormatError, match="label"):
        load_labeled_mesh(path)


def test_unreadable_ply(tmp_path):
    path = tmp_path / "junk.ply"
    path.write_text("not a ply")
    with pytest.raises(SceneFormatError):
        load_labeled_mesh(path)


def test_camera_rotation_must_be_proper():
    T = np.eye(4)
    T[0, 0] = -1.0
    with pytest.raises(SceneFormatError):
        CameraFrame("c", 4, 3, 2.0, 2.0, 2.0, 1.5, T)


def test_depth_png_is_millimetres(tmp_path):
    d = np.array([[0.0, 1.2344], [2.5, 65.0]])
    write_depth_png(d, tmp_path / "d.png")
    back = read_depth_png(tmp_path / "d.png")
    assert np.allclose(back, [[0.0, 1.234], [2.5, 65.0]])


def test_frames_roundtrip(tmp_path):
    frames = synthetic.box_room(n_cameras=2, width=32, height=24).render_frames()
    write_frames(frames, tmp_path)
    back = load_frames(tmp_path)
    assert [f.id for f in back] == [f.id for f in frames]
    for a, b in zip(frames, back):
        assert np.allclose(a.world_from_camera, b.world_from_camera)
        assert np.max(np.abs(a.depth - b.depth)) <= 5e-4
        assert np.array_equal(a.labels, b.labels)


def test_label_map_remaps_ids(tmp_path):
    frames = synthetic.box_room(n_cameras=1, width=16, height=12).render_frames()
    f = frames[0]
    f.labels = np.where(f.labels == C.WALL, 200, f.labels).astype(np.uint8)
    write_frames([f], tmp_path)
    (tmp_path / "label_map.json").write_text(json.dumps({"200": "wall", "2": "floor", "3": "ceiling"}))
    back = load_frames(tmp_path)[0]
    assert set(np.unique(back.labels)) <= {0, int(C.WALL), int(C.FLOOR), int(C.CEILING)}
    assert np.any(back.labels == C.WALL)


def test_missing_depth_map(tmp_path):
    frames = synthetic.box_room(n_cameras=1, width=16, height=12).render_frames()
    write_frames(frames, tmp_path)
    (tmp_path / "depth" / f"{frames[0].id}.png").unlink()
    with pytest.raises(FileNotFoundError):
        load_frames(tmp_path)


def test_bad_camera_file(tmp_path):
    (tmp_path / "cameras.json").write_text(json.dumps([{"id": "x"}]))
    with pytest.raises(SceneFormatError):
        load_frames(tmp_path)


def test_observation_segments_end_on_surfaces():
    frames = synthetic.box_room(n_cameras=2, width=40, height=30).render_frames()
    segs = build_observation_segments(frames, stride=4)
    assert len(segs) > 0
    e = segs.endpoints
    # every endpoint lies on one of the box faces
    on_face = (
        np.isclose(e[:, 0], 0, atol=1e-6) | np.isclose(e[:, 0], 4, atol=1e-6)
        | np.isclose(e[:, 1], 0, atol=1e-6) | np.isclose(e[:, 1], 3, atol=1e-6)
        | np.isclose(e[:, 2], 0, atol=1e-6) | np.isclose(e[:, 2], 2.5, atol=1e-6)
    )
    assert on_face.all()


def test_backprojection_keeps_labels():
    f = synthetic.box_room(n_cameras=1, width=40, height=30).render_frames()[0]
    pts = backproject_labeled_pixels(f, m=200, rng=0)
    assert len(pts) == 200
    floors = pts.positions[pts.labels == C.FLOOR]
    assert np.allclose(floors[:, 2], 0.0, atol=1e-6)


def _tiny_graph():
    floor = np.array([[0, 0, 0], [2, 0, 0], [2, 2, 0], [0, 2, 0]], dtype=float)
    wall = np.array([[0, 0, 0], [2, 0, 0], [2, 0, 2.5], [0, 0, 2.5]], dtype=float)
    rooms = [RoomNode(0, 0, floor, [wall], [floor + [0, 0, 2.5]]), RoomNode(1, 0, floor + [2, 0, 0])]
    door = np.array([[2, 0.5, 0], [2, 1.4, 0], [2, 1.4, 2.1], [2, 0.5, 2.1]], dtype=float)
    return SceneGraph([LevelInfo(0, 0.0)], rooms, [GraphEdge("door", 0, 1, door, 0.9)])


def test_scene_graph_json_roundtrip(tmp_path):
    g = _tiny_graph()
    write_scene_graph(g, tmp_path / "g.json")
    back = read_scene_graph(tmp_path / "g.json")
    assert dumps_scene_graph(back) == dumps_scene_graph(g)
    data = json.loads((tmp_path / "g.json").read_text())
    assert data["edges"][0]["type"] == "door"
    assert data["edges"][0]["width_m"] == 0.9
    assert data["levels"] == [{"id": 0, "height_m": 0.0}]


def test_malformed_scene_graph(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps({"levels": [], "rooms": [{"id": 0}], "edges": []}))
    with pytest.raises(SceneFormatError):
        read_scene_graph(tmp_path / "g.json")


def test_layout_obj_groups(tmp_path):
    path = tmp_path / "layout.obj"
    write_layout_obj(scene_graph_polygons(_tiny_graph()), path)
    text = path.read_text()
    assert text.count("\nv ") == 4 * 5
    assert "door" in text and "wall" in text
