"""Closing floor holes under objects and wall gaps above floors."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import Polygon

from ..geometry import Plane, as_polygons, point_to_polygon_distance
from ..scene_io import LabeledMesh, ObservationSegments
from ..semantics import SemanticClass
from .init import MIN_HOLE_AREA
from .losses import build_geoms, segment_hits
from .merge import _collapse
from .types import EPS_FIT, PrototypeSet

log = logging.getLogger(__name__)

MIN_GAP = 0.02


def _loop_ids(coords, old_xy_tree, old_ids, plane: Plane, pool: list) -> list[int]:
    out = []
    for q in np.asarray(coords)[:-1]:
        d, k = old_xy_tree.query(q) if old_xy_tree is not None else (np.inf, -1)
        if d < 1e-9:
            out.append(old_ids[k])
        else:
            pool.append(plane.from_2d(q))
            out.append(len(pool) - 1)
    return _collapse(out)


def close_floor_holes(proto: PrototypeSet, objects: LabeledMesh) -> PrototypeSet:
    """Extend floors by the projection of the object triangles standing on them."""
    floors = proto.of_class(SemanticClass.FLOOR)
    if not floors or objects is None or len(objects.triangles) == 0:
        return proto
    tris = objects.vertices[objects.triangles]
    cents = tris.mean(axis=1)
    floor_cent = np.array([proto.coords(k).mean(axis=0) for k in floors])
    dist = np.full((len(cents), len(floors)), np.inf)
    for col, k in enumerate(floors):
        below = floor_cent[col, 2] < cents[:, 2]
        if np.any(below):
            p = proto.polygons[k]
            dist[below, col] = point_to_polygon_distance(cents[below], proto.coords(k), proto.hole_coords(k), p.plane)
    best = np.argmin(dist, axis=1)
    has = np.isfinite(dist[np.arange(len(cents)), best])
    pool = list(proto.pool)
    polys = list(proto.polygons)
    for col, k in enumerate(floors):
        sel = has & (best == col)
        if not np.any(sel):
            continue
        p = proto.polygons[k]
        plane = p.plane
        tri2 = plane.to_2d(tris[sel])
        area = 0.5 * np.abs(
            (tri2[:, 1, 0] - tri2[:, 0, 0]) * (tri2[:, 2, 1] - tri2[:, 0, 1])
            - (tri2[:, 1, 1] - tri2[:, 0, 1]) * (tri2[:, 2, 0] - tri2[:, 0, 0])
        )
        tri2 = tri2[area > 1e-10]
        if len(tri2) == 0:
            continue
        base = Polygon(plane.to_2d(proto.pool[list(p.ring)]), [plane.to_2d(proto.pool[list(h)]) for h in p.holes])
        patch = shapely.union_all(shapely.polygons(tri2))
        merged = shapely.union_all([base, patch])
        parts = as_polygons(merged)
        if not parts:
            continue
        # keep the part that carries the original floor
        keep = max(parts, key=lambda g: g.intersection(base).area)
        if keep.area < base.area - 1e-9:
            continue
        # float noise along the projected outline leaves sliver holes behind
        keep = Polygon(keep.exterior, [h for h in keep.interiors if Polygon(h).area >= MIN_HOLE_AREA]).simplify(0.0)
        old_ids = p.vertex_ids()
        tree = cKDTree(plane.to_2d(proto.pool[old_ids]))
        ring = _loop_ids(keep.exterior.coords, tree, old_ids, plane, pool)
        holes = tuple(tuple(_loop_ids(h.coords, tree, old_ids, plane, pool)) for h in keep.interiors)
        polys[k] = replace(p, ring=tuple(ring), holes=holes)
    return PrototypeSet(np.asarray(pool), polys).compact()


def _crossings(quad: np.ndarray, segments: ObservationSegments, margin: float) -> int:
    if segments is None or len(segments) == 0:
        return 0
    n = np.cross(quad[1] - quad[0], quad[2] - quad[0])
    if np.linalg.norm(n) < 1e-12:
        return 0
    n /= np.linalg.norm(n)
    ids = np.arange(len(quad))
    geom = build_geoms(quad, n[None], np.array([n @ quad[0]]), [[ids]])[0]
    hits, _, _ = segment_hits(segments.origins, segments.endpoints - segments.origins, geom, margin)
    return len(hits)


def _target_plane(proto: PrototypeSet, cls: SemanticClass, mid: np.ndarray, below: bool):
    """Nearest floor (below) or ceiling (above) plane over ``mid``."""
    best, best_gap = None, np.inf
    for k in proto.of_class(cls):
        p = proto.polygons[k]
        if abs(p.plane.normal[2]) < 0.5:
            continue
        fp = Polygon(proto.pool[list(p.ring)][:, :2])
        if not fp.is_valid or fp.buffer(0.5).disjoint(shapely.Point(mid[:2])):
            continue
        z = float(p.plane.height_at(mid[:2]))
        gap = mid[2] - z if below else z - mid[2]
        if gap > -1e-9 and gap < best_gap:
            best, best_gap = k, gap
    return best, best_gap


def close_wall_holes(proto: PrototypeSet, segments: ObservationSegments, tau_extend: float, margin: float = 0.0, eps: float = EPS_FIT) -> PrototypeSet:
    """Extend wall edges facing down (up) to the floor (ceiling) when the gap
    between them is not observed as free space."""
    pool = proto.pool.copy()
    owners = proto.owners()
    N, D = proto.normals(), proto.offsets()
    moved = set()
    for k in proto.of_class(SemanticClass.WALL):
        p = proto.polygons[k]
        n = p.plane.normal
        ring = list(p.ring)
        for a, b in zip(ring, ring[1:] + ring[:1]):
            if a in moved or b in moved:
                continue
            d = pool[b] - pool[a]
            length = np.linalg.norm(d)
            if length < 1e-9:
                continue
            out = np.cross(d, n) / length
            if out[2] < -0.7:
                cls, below = SemanticClass.FLOOR, True
            elif out[2] > 0.7:
                cls, below = SemanticClass.CEILING, False
            else:
                continue
            mid = 0.5 * (pool[a] + pool[b])
            target, gap = _target_plane(proto, cls, mid, below)
            if target is None or gap <= MIN_GAP:
                continue
            tp = proto.polygons[target].plane
            new = {}
            for v in (a, b):
                drop = pool[v].copy()
                drop[2] = float(tp.height_at(drop[:2]))
                Nk = np.vstack([N[owners[v]], tp.normal[None]])
                Dk = np.append(D[owners[v]], tp.offset)
                x = drop + np.linalg.lstsq(Nk, Dk - Nk @ drop, rcond=1e-8)[0]
                if np.max(np.abs(Nk @ x - Dk)) > eps:
                    break
                new[v] = x
            if len(new) != 2:
                continue
            quad = np.array([pool[a], pool[b], new[b], new[a]])
            area_cm2 = 0.5 * np.linalg.norm(np.cross(quad[2] - quad[0], quad[3] - quad[1])) * 1e4
            if area_cm2 <= 0:
                continue
            density = _crossings(quad, segments, margin) / area_cm2
            if density < tau_extend:
                old = pool[a].copy(), pool[b].copy()
                pool[a], pool[b] = new[a], new[b]
                touched = sorted(set(owners[a]) | set(owners[b]))
                if not PrototypeSet(pool, [proto.polygons[q] for q in touched]).rings_simple():
                    pool[a], pool[b] = old
                    continue
                log.debug("extending wall %d edge (%d, %d) by %.3f m", k, a, b, gap)
                moved.update((a, b))
            else:
                log.debug("wall %d edge gap observed as free space (%.4f / cm^2)", k, density)
    return PrototypeSet(pool, list(proto.polygons))
