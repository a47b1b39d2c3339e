import numpy as np

from hl3d import synthetic
from hl3d.scene_io import LabeledMesh, LabeledPoints
from hl3d.semantics import CATEGORY_OF, Category, SemanticClass as C, class_from_name
from hl3d.skeleton import (
    compute_superpoints,
    extract_skeleton,
    refine_labels,
    split_by_category,
    superpoint_index,
    triangle_adjacency,
    triangle_categories,
    vote_vertex_labels,
)


def test_category_table():
    assert CATEGORY_OF[C.WALL] == Category.STRUCTURAL
    assert CATEGORY_OF[C.WINDOW] == Category.INACCURATE
    assert CATEGORY_OF[C.STAIRS] == Category.STAIRS
    assert CATEGORY_OF[C.DOOR] == Category.OBJECT
    assert class_from_name("Ceiling") == C.CEILING


def test_triangle_adjacency_shares_edges():
    tris = np.array([[0, 1, 2], [2, 1, 3], [3, 4, 5]])
    adj = triangle_adjacency(tris)
    assert adj[0] == [1] and adj[1] == [0] and adj[2] == []


def test_vote_takes_plurality_and_lowest_id_on_ties():
    verts = np.array([[0, 0, 0], [10, 0, 0]], dtype=float)
    pts = LabeledPoints(
        np.array([[0.1, 0, 0], [0.2, 0, 0], [-0.1, 0, 0], [9.9, 0, 0], [10.1, 0, 0]]),
        np.array([C.WALL, C.FLOOR, C.FLOOR, C.CEILING, C.WALL], dtype=np.uint8),
        np.zeros(5, dtype=np.int64),
    )
    assert vote_vertex_labels(verts, pts).tolist() == [C.FLOOR, C.WALL]


def test_superpoints_of_box_are_its_faces():
    mesh = synthetic.box_room().mesh(spacing=0.25)
    sps = compute_superpoints(mesh, angle_deg=20.0, max_offset=0.05, min_vertices=10)
    assert len(sps) == 6
    idx = superpoint_index(sps, mesh.n_vertices)
    # corner vertices may belong to either face; every vertex gets one
    assert np.all(idx >= 0)
    normals = sorted(tuple(np.round(np.abs(s.plane.normal), 6)) for s in sps)
    assert normals == sorted([(1.0, 0.0, 0.0)] * 2 + [(0.0, 1.0, 0.0)] * 2 + [(0.0, 0.0, 1.0)] * 2)


def test_refine_labels_makes_superpoints_uniform():
    mesh = synthetic.box_room().mesh(spacing=0.25)
    sps = compute_superpoints(mesh)
    rng = np.random.default_rng(0)
    noisy = mesh.labels.copy()
    flip = rng.random(len(noisy)) < 0.2
    noisy[flip] = C.OBJECT
    refined = refine_labels(noisy, sps)
    assert np.array_equal(refined, mesh.labels)


def test_split_by_category_partitions_triangles():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5], [6, 5, 5], [5, 6, 5]], dtype=float)
    labels = np.array([C.FLOOR] * 3 + [C.OBJECT] * 3, dtype=np.uint8)
    mesh = LabeledMesh(v, np.array([[0, 1, 2], [3, 4, 5]]), labels)
    assert triangle_categories(mesh).tolist() == [Category.STRUCTURAL, Category.OBJECT]
    bundle = split_by_category(mesh)
    assert len(bundle.structural.triangles) == 1
    assert len(bundle.objects.triangles) == 1
    assert len(bundle.stairs.triangles) == 0


def test_extract_skeleton_separates_stairs_and_objects():
    scene = synthetic.two_floors_with_stairs(width=64, height=48)
    mesh = scene.mesh(spacing=0.1)
    bundle = extract_skeleton(mesh, scene.render_frames(), pixels_per_frame=2000)
    assert bundle.stairs.n_vertices > 0
    # the split is per triangle; vertices on the seam keep their own labels
    assert np.all(triangle_categories(bundle.stairs) == Category.STAIRS)
    assert np.all(triangle_categories(bundle.structural) == Category.STRUCTURAL)
    assert np.all(triangle_categories(bundle.objects) == Category.OBJECT)
    assert len(bundle.structural_superpoints) == bundle.structural.n_vertices
    total = sum(len(p.triangles) for p in bundle.parts().values())
    assert total == len(mesh.triangles)


def test_extract_skeleton_without_frames_uses_mesh_labels():
    mesh = synthetic.box_room().mesh(spacing=0.25)
    bundle = extract_skeleton(mesh)
    assert bundle.structural.n_vertices == mesh.n_vertices
    assert bundle.objects.n_vertices == 0
