"""Scene ingestion (meshes, cameras, depth, labels) and artifact writers.

Camera convention: right-handed, the camera looks down its +z axis with x
right and y down; pixel (col, row) = (u, v) sits at integer coordinates.
Depth values are z-depths in meters, stored as 16-bit millimeter PNGs with
0 meaning invalid.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .layout.graph import GraphEdge, LevelInfo, RoomNode, SceneGraph
from .semantics import SemanticClass, class_from_name

log = logging.getLogger(__name__)

WELD_TOL = 1e-6


class SceneFormatError(ValueError):
    """Raised for malformed or incomplete input files."""


@dataclass
class LabeledMesh:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64
    labels: np.ndarray  # (n,) uint8 SemanticClass ids
    dropped_triangles: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(self.labels) != len(self.vertices):
            raise SceneFormatError("label array length must equal vertex count")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise SceneFormatError("triangle index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def triangle_normals(self, unit: bool = True) -> np.ndarray:
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if unit:
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(norm > 0, norm, 1.0)
        return n

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_normals(unit=False), axis=1)

    def submesh(self, tri_mask: np.ndarray) -> tuple["LabeledMesh", np.ndarray]:
        """Mesh of the selected triangles; also returns the kept vertex ids."""
        tris = self.triangles[tri_mask]
        used = np.unique(tris)
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        sub = LabeledMesh(self.vertices[used], remap[tris], self.labels[used])
        return sub, used


def clean_mesh(vertices, triangles, labels) -> LabeledMesh:
    """Weld vertices closer than WELD_TOL and drop degenerate triangles."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.uint8)
    n = len(vertices)
    pairs = cKDTree(vertices).query_pairs(WELD_TOL, output_type="ndarray")
    if len(pairs):
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, comp = connected_components(graph, directed=False)
        # representative = lowest original index in each component
        rep = np.full(comp.max() + 1, n, dtype=np.int64)
        np.minimum.at(rep, comp, np.arange(n))
        keep = np.unique(rep)
        new_id = np.full(n, -1, dtype=np.int64)
        new_id[keep] = np.arange(len(keep))
        vmap = new_id[rep[comp]]
        vertices, labels = vertices[keep], labels[keep]
        triangles = vmap[triangles]
    tv = vertices[triangles]
    area = 0.5 * np.linalg.norm(np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)
    repeated = (triangles[:, 0] == triangles[:, 1]) | (triangles[:, 1] == triangles[:, 2]) | (triangles[:, 0] == triangles[:, 2])
    good = (area > 1e-12) & ~repeated
    dropped = int(np.sum(~good))
    if dropped:
        log.info("dropped %d degenerate triangles", dropped)
    return LabeledMesh(vertices, triangles[good], labels, dropped_triangles=dropped)


def load_labeled_mesh(path, clean: bool = True) -> LabeledMesh:
    """Read a labeled PLY; ``clean=False`` keeps vertex order and count as stored."""
    try:
        ply = PlyData.read(str(path))
    except Exception as exc:  # plyfile raises a mix of exception types
        raise SceneFormatError(f"cannot read PLY {path}: {exc}") from exc
    if "vertex" not in ply or "face" not in ply:
        raise SceneFormatError(f"{path}: PLY needs vertex and face elements")
    vert = ply["vertex"]
    names = {p.name for p in vert.properties}
    for prop in ("x", "y", "z"):
        if prop not in names:
            raise SceneFormatError(f"missing vertex property {prop}")
    if "label" not in names:
        raise SceneFormatError("missing vertex property label")
    xyz = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(float)
    labels = np.asarray(vert["label"], dtype=np.uint8)
    if labels.size and labels.max() >= len(SemanticClass):
        raise SceneFormatError(f"{path}: label id {labels.max()} outside the class table")
    faces = ply["face"]
    key = "vertex_indices" if "vertex_indices" in {p.name for p in faces.properties} else "vertex_index"
    raw = faces[key]
    tris = []
    for f in raw:
        f = np.asarray(f, dtype=np.int64)
        for k in range(1, len(f) - 1):
            tris.append((f[0], f[k], f[k + 1]))
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if len(tris) and (tris.min() < 0 or tris.max() >= len(xyz)):
        raise SceneFormatError(f"{path}: face index out of range")
    if not clean:
        return LabeledMesh(xyz, tris, labels)
    return clean_mesh(xyz, tris, labels)


def write_labeled_mesh(mesh: LabeledMesh, path, extra: Optional[dict] = None) -> None:
    """Binary little-endian PLY; ``extra`` adds int32 per-vertex properties."""
    extra = extra or {}
    dtype = [("x", "f4"), ("y", "f4"), ("z", "f4"), ("label", "u1")] + [(k, "i4") for k in extra]
    vert = np.empty(len(mesh.vertices), dtype=dtype)
    vert["x"], vert["y"], vert["z"] = mesh.vertices.T.astype(np.float32)
    vert["label"] = mesh.labels
    for k, v in extra.items():
        vert[k] = np.asarray(v, dtype=np.int32)
    face = np.empty(len(mesh.triangles), dtype=[("vertex_indices", "i4", (3,))])
    face["vertex_indices"] = mesh.triangles.astype(np.int32)
    PlyData(
        [PlyElement.describe(vert, "vertex"), PlyElement.describe(face, "face")], byte_order="<"
    ).write(str(path))


def read_vertex_property(path, name: str) -> np.ndarray:
    ply = PlyData.read(str(path))
    return np.asarray(ply["vertex"][name])


@dataclass
class CameraFrame:
    id: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_from_camera: np.ndarray  # (4, 4)
    depth: Optional[np.ndarray] = None  # (h, w) meters, 0 = invalid
    labels: Optional[np.ndarray] = None  # (h, w) uint8 class ids

    def __post_init__(self):
        T = np.asarray(self.world_from_camera, dtype=float).reshape(4, 4)
        R = T[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise SceneFormatError(f"camera {self.id}: rotation is not orthonormal with det +1")
        self.world_from_camera = T
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=float)
            if self.depth.shape != (self.height, self.width):
                raise SceneFormatError(f"camera {self.id}: depth shape {self.depth.shape} != ({self.height}, {self.width})")
            if np.any(self.depth < 0) or not np.all(np.isfinite(self.depth)):
                raise SceneFormatError(f"camera {self.id}: depth must be finite and >= 0")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8)
            if self.labels.shape != (self.height, self.width):
                raise SceneFormatError(f"camera {self.id}: label image shape mismatch")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.world_from_camera[:3, 3].copy()

    def ray_directions(self, u, v) -> np.ndarray:
        """World-frame directions with unit camera-z component."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        cam = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        return cam @ self.rotation.T

    def unproject(self, u, v, depth) -> np.ndarray:
        return self.center + np.asarray(depth, dtype=float)[..., None] * self.ray_directions(u, v)

    def project(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points -> (u, v, z-depth)."""
        cam = (np.asarray(points, dtype=float) - self.center) @ self.rotation
        z = cam[..., 2]
        return self.fx * cam[..., 0] / z + self.cx, self.fy * cam[..., 1] / z + self.cy, z

    def camera_record(self) -> dict:
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "world_from_camera": [float(x) for x in self.world_from_camera.reshape(-1)],
        }


@dataclass
class ObservationSegments:
    """Camera-center to back-projected-depth segments (observed free space)."""

    origins: np.ndarray
    endpoints: np.ndarray
    frame_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.origins)

    @classmethod
    def empty(cls) -> "ObservationSegments":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))


@dataclass
class LabeledPoints:
    positions: np.ndarray
    labels: np.ndarray
    frame_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def concat(cls, parts: Sequence["LabeledPoints"]) -> "LabeledPoints":
        if not parts:
            return cls(np.zeros((0, 3)), np.zeros(0, np.uint8), np.zeros(0, np.int64))
        return cls(
            np.vstack([p.positions for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.frame_ids for p in parts]),
        )


def build_observation_segments(frames: Sequence[CameraFrame], stride: int = 8) -> ObservationSegments:
    origins, ends, ids = [], [], []
    for k, f in enumerate(frames):
        if f.depth is None:
            continue
        rows = np.arange(0, f.height, stride)
        cols = np.arange(0, f.width, stride)
        vv, uu = np.meshgrid(rows, cols, indexing="ij")
        d = f.depth[vv, uu]
        ok = d > 0
        if not np.any(ok):
            continue
        pts = f.unproject(uu[ok], vv[ok], d[ok])
        ends.append(pts)
        origins.append(np.broadcast_to(f.center, pts.shape).copy())
        ids.append(np.full(len(pts), k, dtype=np.int64))
    if not ends:
        return ObservationSegments.empty()
    return ObservationSegments(np.vstack(origins), np.vstack(ends), np.concatenate(ids))


def backproject_labeled_pixels(frame: CameraFrame, m: int = 5000, rng=None, frame_index: int = 0) -> LabeledPoints:
    if frame.labels is None:
        raise SceneFormatError(f"camera {frame.id}: no pixel labels to back-project")
    if frame.depth is None:
        raise SceneFormatError(f"camera {frame.id}: no depth map")
    rng = np.random.default_rng(rng)
    rows, cols = np.nonzero(frame.depth > 0)
    take = min(m, len(rows))
    pick = np.sort(rng.choice(len(rows), size=take, replace=False))
    r, c = rows[pick], cols[pick]
    pts = frame.unproject(c, r, frame.depth[r, c])
    return LabeledPoints(pts, frame.labels[r, c].astype(np.uint8), np.full(take, frame_index, dtype=np.int64))


# --- camera / image files ---------------------------------------------------


def load_cameras(path) -> list[dict]:
    try:
        records = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(records, list):
        raise SceneFormatError(f"{path}: expected a JSON array of camera records")
    for r in records:
        missing = {"id", "width", "height", "fx", "fy", "cx", "cy", "world_from_camera"} - set(r)
        if missing:
            raise SceneFormatError(f"{path}: camera record missing {sorted(missing)}")
        if len(r["world_from_camera"]) != 16:
            raise SceneFormatError(f"{path}: world_from_camera must have 16 entries")
    return records


def read_depth_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path)).astype(np.float64)
    return arr / 1000.0


def write_depth_png(depth: np.ndarray, path) -> None:
    mm = np.clip(np.round(np.nan_to_num(depth, nan=0.0) * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)


def read_label_png(path, mapping: Optional[dict[int, int]] = None) -> np.ndarray:
    arr = np.asarray(Image.open(path)).astype(np.uint8)
    if mapping:
        lut = np.zeros(256, dtype=np.uint8)
        for ext, cls in mapping.items():
            lut[int(ext)] = int(cls)
        arr = lut[arr]
    return arr


def write_label_png(labels: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(labels, dtype=np.uint8)).save(path)


def load_label_map(path) -> dict[int, int]:
    """External label id -> SemanticClass id; values may be class names."""
    raw = json.loads(Path(path).read_text())
    out = {}
    for k, v in raw.items():
        out[int(k)] = int(class_from_name(v)) if isinstance(v, str) else int(SemanticClass(v))
    return out


def load_frames(scene_dir, with_depth: bool = True, with_labels: bool = True) -> list[CameraFrame]:
    scene_dir = Path(scene_dir)
    records = load_cameras(scene_dir / "cameras.json")
    mapping = None
    if (scene_dir / "label_map.json").exists():
        mapping = load_label_map(scene_dir / "label_map.json")
    frames = []
    for r in records:
        depth = labels = None
        dpath = scene_dir / "depth" / f"{r['id']}.png"
        lpath = scene_dir / "labels" / f"{r['id']}.png"
        if with_depth:
            if not dpath.exists():
                raise FileNotFoundError(f"missing depth map {dpath}")
            depth = read_depth_png(dpath)
        if with_labels and lpath.exists():
            labels = read_label_png(lpath, mapping)
        frames.append(
            CameraFrame(
                id=str(r["id"]),
                width=int(r["width"]),
                height=int(r["height"]),
                fx=float(r["fx"]),
                fy=float(r["fy"]),
                cx=float(r["cx"]),
                cy=float(r["cy"]),
                world_from_camera=np.asarray(r["world_from_camera"], dtype=float).reshape(4, 4),
                depth=depth,
                labels=labels,
            )
        )
    return frames


def write_frames(frames: Sequence[CameraFrame], scene_dir) -> None:
    scene_dir = Path(scene_dir)
    (scene_dir / "depth").mkdir(parents=True, exist_ok=True)
    (scene_dir / "labels").mkdir(parents=True, exist_ok=True)
    (scene_dir / "cameras.json").write_text(json.dumps([f.camera_record() for f in frames], indent=1) + "\n")
    for f in frames:
        if f.depth is not None:
            write_depth_png(f.depth, scene_dir / "depth" / f"{f.id}.png")
        if f.labels is not None:
            write_label_png(f.labels, scene_dir / "labels" / f"{f.id}.png")


# --- scene graph / OBJ ----------------------------------------------------


def _r(x: float) -> float:
    return round(float(x), 6) + 0.0


def _pts(a) -> list[list[float]]:
    return [[_r(c) for c in p] for p in np.asarray(a, dtype=float).reshape(-1, 3)]


def scene_graph_to_dict(graph: SceneGraph) -> dict:
    rooms = []
    for r in graph.rooms:
        rec = {
            "id": int(r.id),
            "level_id": int(r.level_id),
            "floor": _pts(r.floor),
            "walls": [_pts(w) for w in r.walls],
            "ceilings": [_pts(c) for c in r.ceilings],
            "windows": [_pts(w) for w in r.windows],
        }
        if r.floor_holes:
            rec["floor_holes"] = [_pts(h) for h in r.floor_holes]
        rooms.append(rec)
    return {
        "levels": [{"id": int(l.id), "height_m": _r(l.height)} for l in graph.levels],
        "rooms": rooms,
        "edges": [
            {
                "type": e.kind,
                "room_a": int(e.room_a),
                "room_b": int(e.room_b),
                "geometry": _pts(e.geometry),
                "width_m": _r(e.width),
            }
            for e in graph.edges
        ],
    }


def scene_graph_from_dict(data: dict) -> SceneGraph:
    arr = lambda x: np.asarray(x, dtype=float).reshape(-1, 3)  # noqa: E731
    try:
        levels = [LevelInfo(int(l["id"]), float(l["height_m"])) for l in data["levels"]]
        rooms = [
            RoomNode(
                id=int(r["id"]),
                level_id=int(r["level_id"]),
                floor=arr(r["floor"]),
                walls=[arr(w) for w in r.get("walls", [])],
                ceilings=[arr(c) for c in r.get("ceilings", [])],
                windows=[arr(w) for w in r.get("windows", [])],
                floor_holes=[arr(h) for h in r.get("floor_holes", [])],
            )
            for r in data["rooms"]
        ]
        edges = [
            GraphEdge(e["type"], int(e["room_a"]), int(e["room_b"]), arr(e["geometry"]), float(e["width_m"]))
            for e in data["edges"]
        ]
    except (KeyError, TypeError) as exc:
        raise SceneFormatError(f"malformed scene graph: {exc}") from exc
    return SceneGraph(levels, rooms, edges)


def dumps_scene_graph(graph: SceneGraph) -> str:
    return json.dumps(scene_graph_to_dict(graph), indent=1) + "\n"


def write_scene_graph(graph: SceneGraph, path) -> None:
    Path(path).write_text(dumps_scene_graph(graph))


def read_scene_graph(path) -> SceneGraph:
    return scene_graph_from_dict(json.loads(Path(path).read_text()))


def scene_graph_polygons(graph: SceneGraph) -> list[tuple[str, np.ndarray]]:
    """Flatten a graph into (class name, polygon) pairs in a stable order."""
    out = []
    for r in graph.rooms:
        out.append(("floor", r.floor))
        out += [("wall", w) for w in r.walls]
        out += [("ceiling", c) for c in r.ceilings]
        out += [("window", w) for w in r.windows]
    for e in graph.edges:
        out.append(("door" if e.kind in ("door",) else e.kind, e.geometry))
    return out


def write_layout_obj(polys: Sequence[tuple[str, np.ndarray]], path) -> None:
    lines = ["# layout polygons, fan-triangulated"]
    faces = []
    count: dict[str, int] = {}
    base = 1
    for cls, coords in polys:
        coords = np.asarray(coords, dtype=float).reshape(-1, 3)
        k = count.get(cls, 0)
        count[cls] = k + 1
        for p in coords:
            lines.append(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
        faces.append(f"g {cls}_{k}")
        for i in range(1, len(coords) - 1):
            faces.append(f"f {base} {base + i} {base + i + 1}")
        base += len(coords)
    Path(path).write_text("\n".join(lines + faces) + "\n")
