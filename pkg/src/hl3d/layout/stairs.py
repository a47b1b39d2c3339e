"""Stair edges from connected components of the stairs submesh."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from shapely.geometry import MultiPoint, Polygon

from ..geometry import fit_plane
from ..scene_io import LabeledMesh
from .graph import GraphEdge

log = logging.getLogger(__name__)

LEVEL_TOLERANCE = 0.25


@dataclass
class RoomFootprint:
    id: int
    level_id: int
    footprint: Polygon


def mesh_components(mesh: LabeledMesh, min_vertices: int = 50) -> list[np.ndarray]:
    """Vertex index arrays of the connected components with enough vertices."""
    n = mesh.n_vertices
    if n == 0 or len(mesh.triangles) == 0:
        return []
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    used = np.zeros(n, dtype=bool)
    used[t.ravel()] = True
    comps = []
    for lab in np.unique(labels[used]):
        idx = np.flatnonzero((labels == lab) & used)
        if len(idx) >= min_vertices:
            comps.append(idx)
    return comps


def level_of(z: float, level_heights: Sequence[float]) -> int:
    """Highest level whose floor is at most slightly above ``z``."""
    heights = np.asarray(level_heights, dtype=float)
    below = np.flatnonzero(heights <= z + LEVEL_TOLERANCE)
    return int(below[-1]) if len(below) else 0


def room_at(p: np.ndarray, level_id: int, rooms: Sequence[RoomFootprint]):
    cands = [r for r in rooms if r.level_id == level_id]
    if not cands:
        return None
    pt = shapely.Point(p[0], p[1])
    for r in cands:
        if r.footprint.covers(pt):
            return r
    return min(cands, key=lambda r: (r.footprint.distance(pt), r.id))


def stair_geometry(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Ramp plane rectangle over the 2D footprint of the points, and its width."""
    plane = fit_plane(points)
    rect = MultiPoint(points[:, :2]).minimum_rotated_rectangle
    if not isinstance(rect, Polygon):
        raise ValueError("degenerate stair footprint")
    xy = np.asarray(rect.exterior.coords)[:-1]
    z = plane.height_at(xy)
    sides = np.linalg.norm(np.roll(xy, -1, axis=0) - xy, axis=1)
    return np.column_stack([xy, z]), float(sides.min())


def ramp_slope_deg(geometry: np.ndarray) -> float:
    n = np.cross(geometry[1] - geometry[0], geometry[2] - geometry[0])
    n /= np.linalg.norm(n)
    return float(np.degrees(np.arccos(abs(n[2]))))


def detect_stairs(
    stairs_mesh: LabeledMesh, rooms: Sequence[RoomFootprint], level_heights: Sequence[float], min_vertices: int = 50
) -> list[GraphEdge]:
    edges = []
    if stairs_mesh is None:
        return edges
    for comp in mesh_components(stairs_mesh, min_vertices):
        pts = stairs_mesh.vertices[comp]
        lo, hi = pts[np.argmin(pts[:, 2])], pts[np.argmax(pts[:, 2])]
        la, lb = level_of(lo[2], level_heights), level_of(hi[2], level_heights)
        if la == lb:
            log.warning("stair component with %d vertices stays on level %d; skipped", len(comp), la)
            continue
        ra, rb = room_at(lo, la, rooms), room_at(hi, lb, rooms)
        if ra is None or rb is None:
            log.warning("stair component has no room on one of its levels; skipped")
            continue
        try:
            geom, width = stair_geometry(pts)
        except ValueError as exc:
            log.warning("stair component skipped: %s", exc)
            continue
        edges.append(GraphEdge("stairs", ra.id, rb.id, geom, width))
    return edges
