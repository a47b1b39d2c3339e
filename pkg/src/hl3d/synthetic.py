"""Synthetic indoor scenes with analytic ground truth.

A scene is a list of oriented planar surfaces. From it we derive a densely
tessellated labeled mesh, rendered camera frames (depth + pixel labels) and
ground-truth layout entities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import triangle
from shapely.geometry import Polygon

from .geometry import Plane, polygon_frame, triangulate_polygon3
from .render import rasterize
from .scene_io import CameraFrame, LabeledMesh, clean_mesh, write_frames, write_labeled_mesh
from .semantics import SemanticClass as C


@dataclass
class Surface:
    """Planar polygon; vertices are ordered counter-clockwise seen from the
    side the surface faces (its normal)."""

    coords: np.ndarray
    label: C
    holes: list = field(default_factory=list)
    gt: bool = True  # part of the ground-truth layout

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        self.holes = [np.asarray(h, dtype=float) for h in self.holes]

    @property
    def normal(self) -> np.ndarray:
        c = self.coords
        n = np.sum(np.cross(c, np.roll(c, -1, axis=0)), axis=0)
        return n / np.linalg.norm(n)


@dataclass
class SyntheticScene:
    surfaces: list[Surface]
    cameras: list[CameraFrame]
    extra_gt: list[tuple[str, np.ndarray]] = field(default_factory=list)

    def mesh(self, spacing: float = 0.02) -> LabeledMesh:
        return tessellate(self.surfaces, spacing)

    def render_frames(self) -> list[CameraFrame]:
        tris, labels = [], []
        for s in self.surfaces:
            t = triangulate_polygon3(s.coords, s.holes)
            tris.append(t)
            labels.append(np.full(len(t), int(s.label), dtype=np.uint8))
        tris = np.concatenate(tris)
        labels = np.concatenate(labels)
        out = []
        for cam in self.cameras:
            depth, idx = rasterize(tris, cam)
            lab = np.where(idx >= 0, labels[np.maximum(idx, 0)], 0).astype(np.uint8)
            depth = np.where(np.isfinite(depth), depth, 0.0)
            out.append(
                CameraFrame(cam.id, cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
                            cam.world_from_camera, depth=depth, labels=lab)
            )
        return out

    def gt_entities(self) -> list[tuple[str, np.ndarray]]:
        names = {C.WALL: "wall", C.FLOOR: "floor", C.CEILING: "ceiling", C.WINDOW: "window", C.DOOR: "door"}
        out = [(names[s.label], s.coords) for s in self.surfaces if s.gt and s.label in names]
        return out + list(self.extra_gt)

    def write(self, scene_dir, spacing: float = 0.02, quantize_depth: bool = True) -> None:
        scene_dir = Path(scene_dir)
        scene_dir.mkdir(parents=True, exist_ok=True)
        write_labeled_mesh(self.mesh(spacing), scene_dir / "mesh.ply")
        write_frames(self.render_frames(), scene_dir)
        gt = [{"class": c, "corners": np.round(p, 6).tolist()} for c, p in self.gt_entities()]
        (scene_dir / "gt.json").write_text(json.dumps(gt, indent=1) + "\n")


def tessellate(surfaces: Sequence[Surface], spacing: float) -> LabeledMesh:
    """Triangulate every surface with edge length about ``spacing``.

    Boundary edges are split uniformly first so coincident edges of adjacent
    surfaces produce identical vertices (welded on cleanup).
    """
    verts, tris, labels = [], [], []
    base = 0
    for s in surfaces:
        plane, _ = polygon_frame(s.coords, s.holes)
        n = s.normal
        plane = Plane(n, float(n @ s.coords[0]))
        loops = [plane.to_2d(s.coords)] + [plane.to_2d(h) for h in s.holes]
        pts2, segs = [], []
        for loop in loops:
            start = len(pts2)
            k = len(loop)
            for i in range(k):
                a, b = loop[i], loop[(i + 1) % k]
                nseg = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing - 1e-9)))
                for j in range(nseg):
                    pts2.append(a + (b - a) * j / nseg)
            stop = len(pts2)
            segs += [(i, i + 1) for i in range(start, stop - 1)] + [(stop - 1, start)]
        pslg = {"vertices": np.asarray(pts2), "segments": np.asarray(segs)}
        if s.holes:
            holes2 = []
            for h in loops[1:]:
                holes2.append(np.asarray(Polygon(h).representative_point().coords)[0])
            pslg["holes"] = np.asarray(holes2)
        res = triangle.triangulate(pslg, f"pqYQa{0.5 * spacing * spacing:.10f}")
        p3 = plane.from_2d(res["vertices"])
        t = np.asarray(res["triangles"], dtype=np.int64)
        # orient triangles with the surface normal
        e = np.cross(p3[t[:, 1]] - p3[t[:, 0]], p3[t[:, 2]] - p3[t[:, 0]]) @ n
        t[e < 0] = t[e < 0][:, [0, 2, 1]]
        verts.append(p3)
        tris.append(t + base)
        labels.append(np.full(len(p3), int(s.label), dtype=np.uint8))
        base += len(p3)
    return clean_mesh(np.vstack(verts), np.vstack(tris), np.concatenate(labels))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """world_from_camera for a camera at ``eye`` looking at ``target`` (x right, y down)."""
    eye = np.asarray(eye, dtype=float)
    f = np.asarray(target, dtype=float) - eye
    f /= np.linalg.norm(f)
    right = np.cross(f, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(f, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    T = np.eye(4)
    T[:3, :3] = np.stack([right, down, f], axis=1)
    T[:3, 3] = eye
    return T


def make_camera(cid, eye, target, width=160, height=120, hfov_deg=90.0) -> CameraFrame:
    fx = (width / 2) / np.tan(np.radians(hfov_deg) / 2)
    return CameraFrame(str(cid), width, height, fx, fx, (width - 1) / 2, (height - 1) / 2, look_at(eye, target))


def _quad(a, b, c, d) -> np.ndarray:
    return np.array([a, b, c, d], dtype=float)


def box_surfaces(x0, y0, z0, x1, y1, z1, ceiling=True, floor=True, walls=(True, True, True, True)) -> list[Surface]:
    """Inward-facing surfaces of an axis-aligned room box."""
    out = []
    if floor:
        out.append(Surface(_quad((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)), C.FLOOR))
    if ceiling:
        out.append(Surface(_quad((x0, y0, z1), (x0, y1, z1), (x1, y1, z1), (x1, y0, z1)), C.CEILING))
    south, east, north, west = walls
    if south:  # y = y0, facing +y
        out.append(Surface(_quad((x0, y0, z0), (x0, y0, z1), (x1, y0, z1), (x1, y0, z0)), C.WALL))
    if east:  # x = x1, facing -x
        out.append(Surface(_quad((x1, y0, z0), (x1, y0, z1), (x1, y1, z1), (x1, y1, z0)), C.WALL))
    if north:  # y = y1, facing -y
        out.append(Surface(_quad((x1, y1, z0), (x1, y1, z1), (x0, y1, z1), (x0, y1, z0)), C.WALL))
    if west:  # x = x0, facing +x
        out.append(Surface(_quad((x0, y1, z0), (x0, y1, z1), (x0, y0, z1), (x0, y0, z0)), C.WALL))
    return out


def room_cameras(prefix, x0, y0, x1, y1, z, n=8, width=160, height=120, hfov_deg=100.0) -> list[CameraFrame]:
    """Cameras near the room center looking around, alternately tilted down and up."""
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    cams = []
    for k in range(n):
        yaw = 2 * np.pi * k / n
        tilt = -0.45 if k % 2 == 0 else 0.45
        eye = np.array([cx + 0.2 * np.cos(yaw + 1.0), cy + 0.2 * np.sin(yaw + 1.0), z])
        target = eye + np.array([np.cos(yaw), np.sin(yaw), np.tan(tilt)])
        cams.append(make_camera(f"{prefix}{k:02d}", eye, target, width, height, hfov_deg))
    return cams


def box_room(size=(4.0, 3.0, 2.5), n_cameras: int = 8, width: int = 160, height: int = 120) -> SyntheticScene:
    sx, sy, sz = size
    surfaces = box_surfaces(0, 0, 0, sx, sy, sz)
    cams = room_cameras("c", 0, 0, sx, sy, 1.4, n_cameras, width, height)
    return SyntheticScene(surfaces, cams)


def two_rooms_with_door(door_width: float = 0.9, door_height: float = 2.1, width: int = 192, height: int = 144) -> SyntheticScene:
    """Rooms [0,4]x[0,3] and [4.1,8.1]x[0,3] split by a 0.1 m wall with a door gap."""
    h = 2.5
    xa, xb = 4.0, 4.1
    y0 = 1.5 - door_width / 2
    y1 = 1.5 + door_width / 2
    surfaces = box_surfaces(0, 0, 0, xa, 3, h, walls=(True, False, True, True))
    surfaces += box_surfaces(xb, 0, 0, 8.1, 3, h, walls=(True, True, True, False))
    # partition faces with the door notch cut from below
    surfaces.append(Surface(np.array([
        (xa, 0, 0), (xa, 0, h), (xa, 3, h), (xa, 3, 0), (xa, y1, 0),
        (xa, y1, door_height), (xa, y0, door_height), (xa, y0, 0)]), C.WALL))
    surfaces.append(Surface(np.array([
        (xb, 3, 0), (xb, 3, h), (xb, 0, h), (xb, 0, 0), (xb, y0, 0),
        (xb, y0, door_height), (xb, y1, door_height), (xb, y1, 0)]), C.WALL))
    surfaces.append(Surface(_quad((xa, y0, 0), (xb, y0, 0), (xb, y0, door_height), (xa, y0, door_height)), C.WALL, gt=False))
    surfaces.append(Surface(_quad((xa, y1, 0), (xa, y1, door_height), (xb, y1, door_height), (xb, y1, 0)), C.WALL, gt=False))
    surfaces.append(Surface(_quad((xa, y0, door_height), (xb, y0, door_height), (xb, y1, door_height), (xa, y1, door_height)), C.WALL, gt=False))
    surfaces.append(Surface(_quad((xa, y0, 0), (xa, y1, 0), (xb, y1, 0), (xb, y0, 0))[::-1], C.FLOOR, gt=False))
    cams = room_cameras("a", 0, 0, xa, 3, 1.4, 6, width, height) + room_cameras("b", xb, 0, 8.1, 3, 1.4, 6, width, height)
    # frames looking through the door from both sides
    for k, (ex, tx) in enumerate([(1.8, 8.0), (6.3, 0.1), (2.6, 8.0), (5.5, 0.1)]):
        cams.append(make_camera(f"d{k}", (ex, 1.5, 1.2), (tx, 1.5, 0.9), width, height, 90.0))
    door = np.array([(4.05, y0, 0), (4.05, y1, 0), (4.05, y1, door_height), (4.05, y0, door_height)])
    return SyntheticScene(surfaces, cams, extra_gt=[("door", door)])


def staircase_surfaces(x0, x1, y0, y1, z0, z1, n_steps) -> list[Surface]:
    """Straight stair rising along +x: alternating risers and treads."""
    out = []
    run = (x1 - x0) / n_steps
    rise = (z1 - z0) / n_steps
    for k in range(n_steps):
        xs = x0 + k * run
        zb, zt = z0 + k * rise, z0 + (k + 1) * rise
        out.append(Surface(_quad((xs, y1, zb), (xs, y1, zt), (xs, y0, zt), (xs, y0, zb)), C.STAIRS, gt=False))
        out.append(Surface(_quad((xs, y0, zt), (xs + run, y0, zt), (xs + run, y1, zt), (xs, y1, zt)), C.STAIRS, gt=False))
    return out


def two_floors_with_stairs(width: int = 160, height: int = 120) -> SyntheticScene:
    """Two stacked 4x3 rooms (floors at z=0 and z=3) joined by a straight
    stair rising through a stairwell in the 0.5 m slab between them."""
    hx0, hx1, hy0, hy1 = 0.9, 3.4, 2.2, 2.9
    well = lambda z: np.array([(hx0, hy0, z), (hx0, hy1, z), (hx1, hy1, z), (hx1, hy0, z)])  # noqa: E731
    lower = box_surfaces(0, 0, 0, 4, 3, 2.5, ceiling=False)
    upper = box_surfaces(0, 0, 3.0, 4, 3, 5.5, floor=False)
    surfaces = lower + upper
    surfaces.append(Surface(_quad((0, 0, 2.5), (0, 3, 2.5), (4, 3, 2.5), (4, 0, 2.5)), C.CEILING, holes=[well(2.5)]))
    surfaces.append(Surface(_quad((0, 0, 3.0), (4, 0, 3.0), (4, 3, 3.0), (0, 3, 3.0)), C.FLOOR, holes=[well(3.0)[::-1]]))
    # stairwell sides inside the slab, facing into the well
    lo, hi = well(2.5), well(3.0)
    for i in range(4):
        j = (i + 1) % 4
        surfaces.append(Surface(_quad(lo[i], hi[i], hi[j], lo[j])[::-1], C.OBJECT, gt=False))
    surfaces += staircase_surfaces(0.4, 3.4, hy0, hy1, 0.0, 3.0, 12)
    cams = room_cameras("l0_", 0, 0, 4, 3, 1.4, 8, width, height) + room_cameras("l1_", 0, 0, 4, 3, 4.4, 8, width, height)
    # views along the stair from both ends
    cams.append(make_camera("s0", (0.3, 1.2, 1.6), (3.4, 2.55, 2.4), width, height, 90.0))
    cams.append(make_camera("s1", (3.6, 1.2, 4.6), (1.0, 2.55, 1.5), width, height, 90.0))
    return SyntheticScene(surfaces, cams)


def room_with_floor_hole(width: int = 160, height: int = 120) -> SyntheticScene:
    """Box room whose floor is missing a 1x1 m patch under a box object."""
    surfaces = box_surfaces(0, 0, 0, 4, 3, 2.5, floor=False)
    hole = np.array([(1.5, 1.0, 0), (1.5, 2.0, 0), (2.5, 2.0, 0), (2.5, 1.0, 0)])
    surfaces.insert(0, Surface(_quad((0, 0, 0), (4, 0, 0), (4, 3, 0), (0, 3, 0)), C.FLOOR, holes=[hole]))
    box = [s for s in box_surfaces(1.5, 1.0, 0.0, 2.5, 2.0, 0.5, floor=False)]
    for s in box:
        # outward-facing object surfaces
        surfaces.append(Surface(s.coords[::-1], C.OBJECT, gt=False))
    cams = room_cameras("c", 0, 0, 4, 3, 1.4, 8, width, height)
    return SyntheticScene(surfaces, cams, extra_gt=[])


def room_with_window(window=(1.2, 1.0), width: int = 192, height: int = 144) -> SyntheticScene:
    """Box room with a window patch on the north wall (y = 3)."""
    ww, wh = window
    sx, sy, sz = 4.0, 3.0, 2.5
    surfaces = box_surfaces(0, 0, 0, sx, sy, sz, walls=(True, True, False, True))
    x0, x1 = 2.0 - ww / 2, 2.0 + ww / 2
    z0, z1 = 1.0, 1.0 + wh
    win = np.array([(x1, sy, z0), (x1, sy, z1), (x0, sy, z1), (x0, sy, z0)])
    north = np.array([(sx, sy, 0), (sx, sy, sz), (0, sy, sz), (0, sy, 0)])
    surfaces.append(Surface(north, C.WALL, holes=[win[::-1]]))
    surfaces.append(Surface(win, C.WINDOW))
    cams = room_cameras("c", 0, 0, sx, sy, 1.4, 8, width, height)
    cams.append(make_camera("w0", (2.0, 0.6, 1.5), (2.0, 3.0, 1.5), width, height, 80.0))
    cams.append(make_camera("w1", (1.0, 0.8, 1.4), (2.2, 3.0, 1.5), width, height, 80.0))
    return SyntheticScene(surfaces, cams)
