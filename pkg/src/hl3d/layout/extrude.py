"""Lifting a 2D room footprint into a closed 3D shell under its ceiling candidates."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from ..geometry import Plane, as_polygons, cdt_triangulate, fit_plane, rdp_indices
from .graph import Shell

log = logging.getLogger(__name__)

MIN_CLEARANCE = 0.1
HEIGHT_TOL = 1e-7  # heights closer than this at one vertex are the same corner


@dataclass
class CeilingCandidate:
    plane: Plane
    footprint: Polygon  # xy projection

    @classmethod
    def from_coords(cls, coords, holes: Sequence = ()) -> "CeilingCandidate":
        coords = np.asarray(coords, dtype=float)
        allpts = np.vstack([coords, *[np.asarray(h, dtype=float) for h in holes]]) if len(holes) else coords
        plane = fit_plane(allpts)
        if plane.normal[2] < 0:
            plane = plane.flipped()
        fp = Polygon(coords[:, :2], [np.asarray(h)[:, :2] for h in holes])
        if not fp.is_valid:
            fp = shapely.make_valid(fp)
            parts = as_polygons(fp)
            fp = shapely.union_all(parts) if parts else Polygon()
        return cls(plane, fp)

    @property
    def area(self) -> float:
        return float(self.footprint.area)


@dataclass
class ExtrudedRoom:
    shell: Shell
    floor: np.ndarray
    floor_holes: list[np.ndarray] = field(default_factory=list)
    walls: list[np.ndarray] = field(default_factory=list)
    ceilings: list[np.ndarray] = field(default_factory=list)
    triangle_planes: np.ndarray = field(default_factory=lambda: np.zeros(0, int))


def _intersection_line(a: Plane, b: Plane, region: Polygon):
    """xy projection of the line where the two height functions agree, clipped to ``region``."""
    na, nb = a.normal, b.normal
    # h(x, y) = (d - n_x x - n_y y) / n_z; the difference is linear in xy
    ca = np.array([-na[0], -na[1]]) / na[2]
    cb = np.array([-nb[0], -nb[1]]) / nb[2]
    g = ca - cb
    c0 = a.offset / na[2] - b.offset / nb[2]
    gn = np.linalg.norm(g)
    if gn < 1e-9:
        return None
    p0 = -c0 * g / (gn * gn)
    t = np.array([-g[1], g[0]]) / gn
    minx, miny, maxx, maxy = region.bounds
    reach = np.hypot(maxx - minx, maxy - miny) + np.linalg.norm(p0 - [minx, miny]) + 1.0
    return np.array([p0 - reach * t, p0 + reach * t])


def _triangle_neighbors(tris: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Undirected edge -> [(triangle, local edge index)]."""
    out: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for t, tri in enumerate(tris):
        for e in range(3):
            a, b = int(tri[e]), int(tri[(e + 1) % 3])
            out[(min(a, b), max(a, b))].append((t, e))
    return out


def assign_ceilings(
    pts: np.ndarray, tris: np.ndarray, candidates: Sequence[CeilingCandidate], floor_z: float
) -> tuple[np.ndarray, list[Plane]]:
    """Plane index per triangle.

    A vertical ray from the triangle centroid picks the lowest candidate above
    the floor (lowest index on ties). Triangles without a hit inherit the
    lowest assigned plane reachable through unassigned neighbours.
    """
    planes = [c.plane for c in candidates]
    cent = pts[tris].mean(axis=1)
    assign = np.full(len(tris), -1, dtype=int)
    best = np.full(len(tris), np.inf)
    for i, c in enumerate(candidates):
        inside = shapely.contains_xy(c.footprint, cent[:, 0], cent[:, 1])
        if not np.any(inside):
            continue
        h = c.plane.height_at(cent)
        hit = inside & (h > floor_z) & (h < best - 1e-12)
        assign[hit] = i
        best[hit] = h[hit]
    if np.all(assign >= 0):
        return assign, planes

    nbrs = _triangle_neighbors(tris)
    adj: list[list[int]] = [[] for _ in range(len(tris))]
    for users in nbrs.values():
        if len(users) == 2:
            (s, _), (t, _) = users
            adj[s].append(t)
            adj[t].append(s)
    seen = np.zeros(len(tris), dtype=bool)
    for start in range(len(tris)):
        if assign[start] >= 0 or seen[start]:
            continue
        comp, stack, reach = [], [start], set()
        seen[start] = True
        while stack:
            t = stack.pop()
            comp.append(t)
            for s in adj[t]:
                if assign[s] >= 0:
                    reach.add(int(assign[s]))
                elif not seen[s]:
                    seen[s] = True
                    stack.append(s)
        cc = cent[comp].mean(axis=0)
        options = sorted(reach, key=lambda i: (float(planes[i].height_at(cc)), i))
        options = [i for i in options if planes[i].height_at(cc) > floor_z]
        if options:
            assign[comp] = options[0]
        else:
            log.warning("no ceiling reachable for part of the room; using a flat ceiling at the default height")
            assign[comp] = -2
    return assign, planes


def extrude_room(
    footprint: Polygon,
    candidates: Sequence[CeilingCandidate],
    floor_z: float,
    *,
    max_ceilings: int = 30,
    default_height: float = 2.5,
) -> ExtrudedRoom:
    """Triangulate the footprint, assign triangles to ceiling planes and
    build the closed shell (floor, ceiling, boundary walls and the vertical
    faces along ceiling height jumps)."""
    if footprint.is_empty or not footprint.is_valid:
        raise ValueError("invalid room footprint")
    cands = [c for c in candidates if abs(c.plane.normal[2]) > 0.1 and c.footprint.intersects(footprint)]
    cands = sorted(cands, key=lambda c: -c.area)[:max_ceilings]

    constraints = []
    for c in cands:
        for g in [c.footprint] if isinstance(c.footprint, Polygon) else list(c.footprint.geoms):
            for ring in [g.exterior, *g.interiors]:
                constraints.append(np.asarray(ring.coords))
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            line = _intersection_line(cands[i].plane, cands[j].plane, footprint)
            if line is not None:
                constraints.append(line)
    pts, tris = cdt_triangulate(footprint, constraints)
    assign, planes = assign_ceilings(pts, tris, cands, floor_z)
    default = Plane(np.array([0.0, 0.0, 1.0]), floor_z + default_height)
    if np.any(assign == -2):
        planes = planes + [default]
        assign = np.where(assign == -2, len(planes) - 1, assign)
    lo = floor_z + MIN_CLEARANCE

    snapped: dict[int, list[float]] = defaultdict(list)

    def top(v: int, k: int) -> float:
        z = max(float(planes[k].height_at(pts[v])), lo)
        for h in snapped[v]:
            if abs(h - z) <= HEIGHT_TOL:
                return h
        snapped[v].append(z)
        return z

    verts: list[np.ndarray] = []
    key_id: dict[tuple[int, float], int] = {}
    heights: dict[int, set] = defaultdict(set)

    def vid(v: int, z: float) -> int:
        key = (v, z)
        if key not in key_id:
            key_id[key] = len(verts)
            verts.append(np.array([pts[v, 0], pts[v, 1], z]))
            heights[v].add(z)
        return key_id[key]

    fz = float(floor_z)
    tri_top = [[top(int(v), int(assign[t])) for v in tri] for t, tri in enumerate(tris)]
    faces: list[tuple[int, ...]] = []
    kinds: list[str] = []
    for t, tri in enumerate(tris):
        floor_face = tuple(vid(int(v), fz) for v in tri[::-1])
        faces.append(floor_face)
        kinds.append("floor")
        faces.append(tuple(vid(int(v), z) for v, z in zip(tri, tri_top[t])))
        kinds.append("ceiling")

    nbrs = _triangle_neighbors(tris)
    vertical: list[tuple[int, int, float, float, float, float, str, int]] = []
    for users in nbrs.values():
        for t, e in users:
            a, b = int(tris[t][e]), int(tris[t][(e + 1) % 3])
            za_top, zb_top = tri_top[t][e], tri_top[t][(e + 1) % 3]
            if len(users) == 1:
                vertical.append((a, b, fz, fz, za_top, zb_top, "wall", t))
                continue
            s, f = next(u for u in users if u[0] != t)
            # the neighbour sees the edge reversed
            zb_s, za_s = tri_top[s][f], tri_top[s][(f + 1) % 3]
            if za_top >= za_s and zb_top >= zb_s and (za_top > za_s or zb_top > zb_s):
                vertical.append((a, b, za_s, zb_s, za_top, zb_top, "step", t))
    # register every height before building side rings
    for a, b, za0, zb0, za1, zb1, _, _ in vertical:
        for v, z in ((a, za0), (b, zb0), (a, za1), (b, zb1)):
            vid(v, z)
    walls_by_edge: dict[int, list[np.ndarray]] = defaultdict(list)
    rings = [np.asarray(r.coords)[:-1] for r in [footprint.exterior, *footprint.interiors]]
    fedges = [(r[i], r[(i + 1) % len(r)]) for r in rings for i in range(len(r))]
    for a, b, za0, zb0, za1, zb1, kind, _ in vertical:
        up_b = sorted(z for z in heights[b] if zb0 < z < zb1)
        down_a = sorted((z for z in heights[a] if za0 < z < za1), reverse=True)
        ring = [vid(a, za0), vid(b, zb0)] + [vid(b, z) for z in up_b]
        ring += [vid(b, zb1), vid(a, za1)] + [vid(a, z) for z in down_a]
        ring = [r for i, r in enumerate(ring) if r != ring[i - 1]]
        if len(ring) < 3:
            continue
        faces.append(tuple(ring))
        kinds.append(kind)
        if kind == "wall":
            mid = 0.5 * (pts[a] + pts[b])
            k = min(range(len(fedges)), key=lambda i: LineString(fedges[i]).distance(shapely.Point(mid)))
            walls_by_edge[k].append(np.array([verts[i] for i in ring]))

    shell = Shell(np.asarray(verts), faces, kinds)
    walls = [_merge_wall(fedges[k], walls_by_edge[k]) for k in sorted(walls_by_edge)]
    ceilings = _ceiling_polygons(pts, tris, assign, planes, lo)
    floor = np.column_stack([rings[0], np.full(len(rings[0]), floor_z)])
    holes = [np.column_stack([r, np.full(len(r), floor_z)]) for r in rings[1:]]
    return ExtrudedRoom(shell, floor, holes, [w for w in walls if w is not None], ceilings, assign)


def _merge_wall(edge, pieces: list[np.ndarray]):
    a, b = np.asarray(edge[0]), np.asarray(edge[1])
    d = (b - a) / np.linalg.norm(b - a)

    def to2(x):
        return np.stack([(x[:, :2] - a) @ d, x[:, 2]], axis=1)

    polys = [Polygon(to2(p)) for p in pieces]
    merged = shapely.union_all([p.buffer(0) for p in polys if p.area > 1e-12])
    parts = as_polygons(merged)
    if not parts:
        return None
    g = max(parts, key=lambda p: p.area)
    ring = np.asarray(g.exterior.coords)[:-1]
    ring = ring[rdp_indices(ring, 1e-9)]
    xy = a + ring[:, :1] * d
    return np.column_stack([xy, ring[:, 1]])


def _ceiling_polygons(pts, tris, assign, planes, lo) -> list[np.ndarray]:
    out = []
    for k in sorted(set(int(x) for x in assign)):
        sel = tris[assign == k]
        merged = shapely.union_all(shapely.polygons(pts[sel]))
        for g in as_polygons(merged):
            ring = np.asarray(g.exterior.coords)[:-1]
            ring = ring[rdp_indices(ring, 1e-9)]
            z = np.maximum(planes[k].height_at(ring), lo)
            out.append(np.column_stack([ring, z]))
    return out


def ceiling_hits(shell: Shell, xy) -> np.ndarray:
    """Number of ceiling faces a vertical line through each xy crosses."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    counts = np.zeros(len(xy), dtype=int)
    for f in shell.faces_of("ceiling"):
        tri = Polygon(f[:, :2])
        if tri.area <= 0:
            continue
        counts += shapely.contains_xy(tri, xy[:, 0], xy[:, 1])
    return counts
