"""Room segmentation of a floorplan and classification of the openings between rooms."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import LineString, MultiLineString, Polygon
from skimage.segmentation import watershed

from ..geometry import as_polygons, point_segment_distance, polygon_frame, rdp_indices
from .graph import DOOR_MAX_WIDTH

log = logging.getLogger(__name__)

SLICE_HEIGHTS = (0.5, 0.75, 1.0)


@dataclass
class Opening:
    room_a: int
    room_b: int
    p0: np.ndarray  # 2D end points of the passage
    p1: np.ndarray

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


def slice_walls(walls: Sequence[np.ndarray], z: float) -> list[np.ndarray]:
    """2D segments where near-vertical wall polygons cross the plane at height ``z``."""
    out = []
    for w in walls:
        w = np.asarray(w, dtype=float)
        try:
            plane, poly2 = polygon_frame(w)
        except ValueError:
            continue
        if abs(plane.normal[2]) > 0.3 or not poly2.is_valid:
            continue
        u, v = plane.basis()
        o = plane.origin
        # z(a, b) = o_z + a u_z + b v_z; the cut line in plane coordinates
        coef = np.array([u[2], v[2]])
        if np.linalg.norm(coef) < 1e-9:
            continue
        base = coef * (z - o[2]) / (coef @ coef)
        along = np.array([-coef[1], coef[0]])
        along /= np.linalg.norm(along)
        big = 1e3
        cut = poly2.intersection(LineString([base - big * along, base + big * along]))
        for g in getattr(cut, "geoms", [cut]):
            if g.is_empty or g.geom_type != "LineString":
                continue
            c = np.asarray(g.coords)
            xyz = plane.from_2d(c)
            for a, b in zip(xyz[:-1], xyz[1:]):
                if np.linalg.norm(b[:2] - a[:2]) > 1e-6:
                    out.append(np.array([a[:2], b[:2]]))
    return out


def _rasterize_segments(cx: np.ndarray, cy: np.ndarray, segs: Sequence[np.ndarray], radius: float) -> np.ndarray:
    blocked = np.zeros(cx.shape, dtype=bool)
    pts = np.stack([cx.ravel(), cy.ravel(), np.zeros(cx.size)], axis=1)
    for s in segs:
        lo = s.min(axis=0) - radius
        hi = s.max(axis=0) + radius
        near = (pts[:, 0] >= lo[0]) & (pts[:, 0] <= hi[0]) & (pts[:, 1] >= lo[1]) & (pts[:, 1] <= hi[1])
        if not np.any(near):
            continue
        a = np.append(s[0], 0.0)
        b = np.append(s[1], 0.0)
        d = point_segment_distance(pts[near], a, b)
        flat = blocked.ravel()
        idx = np.flatnonzero(near)
        flat[idx[d <= radius]] = True
    return blocked


def _cells_to_polygon(mask: np.ndarray, x0: float, y0: float, cell: float) -> Polygon:
    boxes = []
    for r in range(mask.shape[0]):
        row = mask[r]
        if not row.any():
            continue
        d = np.diff(np.concatenate([[0], row.astype(np.int8), [0]]))
        starts = np.flatnonzero(d == 1)
        stops = np.flatnonzero(d == -1)
        for a, b in zip(starts, stops):
            boxes.append(shapely.box(x0 + a * cell, y0 + r * cell, x0 + b * cell, y0 + (r + 1) * cell))
    return shapely.union_all(boxes) if boxes else Polygon()


def _simplify(poly: Polygon, tol: float) -> Polygon:
    ext = np.asarray(poly.exterior.coords)[:-1]
    ext = ext[rdp_indices(ext, tol)]
    holes = []
    for h in poly.interiors:
        hc = np.asarray(h.coords)[:-1]
        hc = hc[rdp_indices(hc, tol)]
        if len(hc) >= 3 and Polygon(hc).area > tol * tol:
            holes.append(hc)
    out = Polygon(ext, holes)
    if not out.is_valid:
        out = poly.simplify(tol, preserve_topology=True)
    parts = as_polygons(out)
    return max(parts, key=lambda g: g.area) if parts else poly


def _passage_extent(mid: np.ndarray, direction: np.ndarray, obstacles: Sequence[np.ndarray], plan: Polygon, reach: float, band_width: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """End points of the free passage through ``mid`` along ``direction``.

    Each side stops at the nearest wall segment; the floorplan outline only
    bounds a side that has no wall (it is less reliable around thin passages).
    """
    direction = direction / np.linalg.norm(direction)
    line = LineString([mid - reach * direction, mid + reach * direction])

    def hits(geoms) -> tuple[list[float], list[float]]:
        neg, pos = [], []
        for g in geoms:
            hit = line.intersection(g)
            if hit.is_empty:
                continue
            for h in getattr(hit, "geoms", [hit]):
                for p in np.asarray(h.coords):
                    t = float((p - mid) @ direction)
                    if t < 0:
                        neg.append(t)
                    elif t > 0:
                        pos.append(t)
        return neg, pos

    # walls running along the passage line rarely touch it exactly; any wall
    # piece inside a thin band counts with its extent projected onto the line
    band = line.buffer(band_width, cap_style="flat")
    neg, pos = [], []
    for s in obstacles:
        piece = band.intersection(LineString(s))
        if piece.is_empty:
            continue
        t = np.concatenate([(np.asarray(g.coords) - mid) @ direction for g in getattr(piece, "geoms", [piece])])
        if t.max() < 0:
            neg.append(float(t.max()))
        elif t.min() > 0:
            pos.append(float(t.min()))
    if not neg or not pos:
        neg_p, pos_p = hits([plan.boundary])
        neg = neg or neg_p or [-reach]
        pos = pos or pos_p or [reach]
    return mid + max(neg) * direction, mid + min(pos) * direction


def segment_rooms(
    floorplan: Sequence[Polygon],
    walls: Sequence[np.ndarray],
    floor_height: float,
    *,
    cell: float = 0.05,
    wall_thickness: float = 0.10,
    seed_clearance: float = 0.5,
    min_opening_width: float = 0.25,
    simplify_tol: float = 0.05,
) -> tuple[list[Polygon], list[Opening]]:
    """Distance-transform watershed room segmentation of one level.

    Returns room footprints and the openings (shared room boundaries not
    covered by walls).
    """
    plan = shapely.union_all(list(floorplan))
    if plan.is_empty:
        raise ValueError("empty floorplan")
    segs = []
    for dz in SLICE_HEIGHTS:
        segs.extend(slice_walls(walls, floor_height + dz))
    minx, miny, maxx, maxy = plan.bounds
    x0, y0 = minx - 2 * cell, miny - 2 * cell
    nx = int(np.ceil((maxx - x0) / cell)) + 2
    ny = int(np.ceil((maxy - y0) / cell)) + 2
    cx, cy = np.meshgrid(x0 + (np.arange(nx) + 0.5) * cell, y0 + (np.arange(ny) + 0.5) * cell)
    inside = shapely.contains_xy(plan, cx, cy)
    blocked = _rasterize_segments(cx, cy, segs, wall_thickness / 2)
    free = inside & ~blocked
    dist = ndimage.distance_transform_edt(free) * cell
    cores, n_cores = ndimage.label(dist > seed_clearance)
    comps, n_comps = ndimage.label(free)
    markers = cores.copy()
    n = n_cores
    for c in range(1, n_comps + 1):
        comp = comps == c
        if not np.any(markers[comp]):
            # narrow free space without a core still gets its own seed
            r, q = np.unravel_index(np.argmax(np.where(comp, dist, -1)), dist.shape)
            if comp.sum() * cell * cell >= 1.0:
                n += 1
                markers[r, q] = n
    if n == 0:
        r, q = np.unravel_index(np.argmax(dist), dist.shape)
        markers[r, q] = 1
        n = 1
    labels = watershed(-dist, markers, mask=free)
    # walls and unreachable cells take the label of the nearest room cell
    missing = inside & (labels == 0)
    if np.any(missing) and np.any(labels > 0):
        _, (ri, ci) = ndimage.distance_transform_edt(labels == 0, return_indices=True)
        labels = np.where(missing, labels[ri, ci], labels)
    labels[~inside] = 0
    present = [l for l in range(1, n + 1) if np.any(labels == l)]

    raw: dict[int, Polygon] = {}
    for l in present:
        cells = _cells_to_polygon(labels == l, x0, y0, cell).intersection(plan)
        parts = as_polygons(cells)
        if not parts:
            continue
        raw[l] = shapely.union_all(parts)
    # order rooms deterministically by footprint centroid
    order = sorted(raw, key=lambda l: (round(raw[l].centroid.x, 6), round(raw[l].centroid.y, 6)))
    rooms = []
    index = {}
    for l in order:
        parts = as_polygons(raw[l])
        main = max(parts, key=lambda g: g.area)
        index[l] = len(rooms)
        rooms.append(_simplify(main, simplify_tol))

    openings = []
    wall_zone = shapely.union_all([LineString(s).buffer(wall_thickness / 2 + cell) for s in segs]) if segs else Polygon()
    for i, la in enumerate(order):
        for lb in order[i + 1 :]:
            shared = raw[la].boundary.intersection(raw[lb].boundary)
            if shared.is_empty:
                continue
            free_part = shared.difference(wall_zone) if not wall_zone.is_empty else shared
            lines = [g for g in getattr(free_part, "geoms", [free_part]) if g.geom_type == "LineString" and g.length > 0]
            if not lines:
                continue
            merged = shapely.line_merge(MultiLineString(lines)) if len(lines) > 1 else lines[0]
            # nearby fragments of one passage are grouped by proximity
            frags = [g for g in getattr(merged, "geoms", [merged])]
            groups = []
            for f in sorted(frags, key=lambda g: -g.length):
                for grp in groups:
                    if grp[0].distance(f) < 2 * cell + 1e-9:
                        grp.append(f)
                        break
                else:
                    groups.append([f])
            for grp in groups:
                geo = shapely.union_all(grp)
                pts = np.vstack([np.asarray(g.coords) for g in grp])
                # principal direction of the boundary piece
                c = pts.mean(axis=0)
                if len(pts) < 2 or np.allclose(pts, c):
                    continue
                dvec = np.linalg.svd(pts - c)[2][0]
                mid = np.asarray(geo.interpolate(0.5, normalized=True).coords)[0] if geo.geom_type == "LineString" else c
                reach = geo.length + float(np.hypot(maxx - minx, maxy - miny))
                p0, p1 = _passage_extent(mid, dvec, segs, plan, reach, wall_thickness / 2 + cell)
                op = Opening(index[la], index[lb], p0, p1)
                if op.width >= min_opening_width:
                    openings.append(op)
    return rooms, openings


def classify_opening(width: float, door_max_width: float = DOOR_MAX_WIDTH) -> str:
    """Passages narrower than the door limit are doors; the rest stay openings."""
    return "door" if width < door_max_width else "opening"


def opening_rectangle(op: Opening, floor_z: float, ceiling_z: float, door_height: float = 2.1) -> np.ndarray:
    top = floor_z + min(door_height, ceiling_z - floor_z)
    a, b = op.p0, op.p1
    return np.array([[a[0], a[1], floor_z], [b[0], b[1], floor_z], [b[0], b[1], top], [a[0], a[1], top]])
