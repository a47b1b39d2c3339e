"""Initial polygons: one or more planes per superpoint, alpha-shape outlines."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import shapely
from scipy.spatial import Delaunay
from shapely.geometry import Polygon

from ..geometry import Plane, Polygon3, as_polygons, fit_plane, rdp_indices, ring_is_simple
from ..scene_io import LabeledMesh
from ..semantics import CATEGORY_LUT, N_CLASSES, Category, SemanticClass
from .types import PrototypeSet

log = logging.getLogger(__name__)

MIN_POLYGON_AREA = 0.02
MIN_HOLE_AREA = 0.01
STRUCTURAL_MASK = np.array([c == Category.STRUCTURAL for c in CATEGORY_LUT])


def ransac_planes(
    points: np.ndarray,
    normals: Optional[np.ndarray],
    threshold: float,
    rng: np.random.Generator,
    iters: int = 200,
    min_inliers: int = 10,
) -> list[tuple[Plane, np.ndarray]]:
    """Greedy sequential RANSAC. Returns (plane, inlier indices) pairs."""
    remaining = np.arange(len(points))
    out = []
    while len(remaining) >= max(3, min_inliers):
        pts = remaining_pts = points[remaining]
        best = None
        for _ in range(iters):
            s = rng.choice(len(pts), 3, replace=False)
            n = np.cross(pts[s[1]] - pts[s[0]], pts[s[2]] - pts[s[0]])
            norm = np.linalg.norm(n)
            if norm < 1e-12:
                continue
            n /= norm
            inl = np.abs((remaining_pts - pts[s[0]]) @ n) < threshold
            cnt = int(inl.sum())
            if best is None or cnt > best[0]:
                best = (cnt, inl)
            if cnt == len(pts):
                break
        if best is None or best[0] < min_inliers:
            break
        inl = best[1]
        try:
            plane = fit_plane(pts[inl], None if normals is None else normals[remaining][inl])
        except ValueError:
            break
        # refine the inlier set against the least-squares plane
        inl = np.abs(plane.signed_distance(pts)) < threshold
        if inl.sum() < min_inliers:
            break
        plane = fit_plane(pts[inl], None if normals is None else normals[remaining][inl])
        out.append((plane, remaining[inl]))
        remaining = remaining[~inl]
    return out


def alpha_shape(uv: np.ndarray, alpha: float) -> list[Polygon]:
    """Region covered by Delaunay triangles with circumradius below ``alpha``."""
    if len(uv) < 3:
        return []
    try:
        tri = Delaunay(uv)
    except Exception:
        return []
    s = tri.simplices
    a, b, c = uv[s[:, 0]], uv[s[:, 1]], uv[s[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(a - c, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    area2 = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        radius = la * lb * lc / (2.0 * area2)
    keep = (area2 > 1e-14) & (radius < alpha)
    if not np.any(keep):
        return []
    # boundary edges are used by exactly one kept triangle
    k = s[keep]
    e = np.sort(np.concatenate([k[:, [0, 1]], k[:, [1, 2]], k[:, [2, 0]]]), axis=1).astype(np.int64)
    uniq, cnt = np.unique(e[:, 0] * len(uv) + e[:, 1], return_counts=True)
    once = uniq[cnt == 1]
    border = np.stack([once // len(uv), once % len(uv)], axis=1)
    faces = shapely.get_parts(shapely.polygonize(shapely.linestrings(uv[border])))
    out = []
    for f in faces:
        if f.area <= 0:
            continue
        p = np.asarray(f.representative_point().coords)[0]
        t = int(tri.find_simplex(p))
        if t >= 0 and keep[t]:
            out.append(f)
    return as_polygons(shapely.union_all(out)) if len(out) > 1 else as_polygons(out[0]) if out else []


def simplify_outline(poly: Polygon, tol: float) -> Optional[Polygon]:
    """RDP on every ring; tiny or collapsed holes are dropped."""
    ext = np.asarray(poly.exterior.coords)[:-1]
    ext = ext[rdp_indices(ext, tol)]
    holes = []
    for h in poly.interiors:
        hc = np.asarray(h.coords)[:-1]
        if Polygon(hc).area < MIN_HOLE_AREA:
            continue
        hc = hc[rdp_indices(hc, tol)]
        if len(hc) >= 3 and Polygon(hc).area >= MIN_HOLE_AREA and ring_is_simple(hc):
            holes.append(hc)
    out = Polygon(ext, holes)
    if not out.is_valid or not ring_is_simple(ext):
        out = poly.simplify(tol, preserve_topology=True)
        if not out.is_valid or out.is_empty:
            return None
    parts = as_polygons(out)
    return parts[0] if parts else None


def _superpoint_groups(mesh: LabeledMesh, sp_of_vertex: np.ndarray) -> dict[int, np.ndarray]:
    """Triangles touching each superpoint (so outlines reach shared creases)."""
    tri_sp = sp_of_vertex[mesh.triangles]
    groups: dict[int, list] = {}
    for col in range(3):
        for sp in np.unique(tri_sp[:, col]).tolist():
            if sp < 0:
                continue
            groups.setdefault(sp, []).append(np.flatnonzero(tri_sp[:, col] == sp))
    return {sp: np.unique(np.concatenate(v)) for sp, v in sorted(groups.items())}


def init_polygons(
    structural: LabeledMesh,
    sp_of_vertex: np.ndarray,
    *,
    alpha: float = 0.15,
    tol: float = 0.10,
    plane_threshold: float = 0.05,
    ransac_iters: int = 200,
    seed: int = 0,
) -> PrototypeSet:
    """Fit planar polygons to every superpoint of the structural mesh."""
    rng = np.random.default_rng(seed)
    tri_normals = structural.triangle_normals() if len(structural.triangles) else np.zeros((0, 3))
    vert_normals = np.zeros_like(structural.vertices)
    np.add.at(vert_normals, structural.triangles.ravel(), np.repeat(tri_normals, 3, axis=0))
    pool: list[np.ndarray] = []
    polys: list[Polygon3] = []
    for sp, tids in _superpoint_groups(structural, np.asarray(sp_of_vertex)).items():
        vids = np.unique(structural.triangles[tids])
        own = vids[sp_of_vertex[vids] == sp]
        counts = np.bincount(structural.labels[own], minlength=N_CLASSES)
        # only structural classes may name a layout polygon
        counts[~STRUCTURAL_MASK] = 0
        if counts.sum() == 0:
            continue
        cls = SemanticClass(int(np.argmax(counts)))
        pts = structural.vertices[vids]
        if len(pts) < 3:
            log.warning("superpoint %d has %d points; skipped", sp, len(pts))
            continue
        for plane, inl in ransac_planes(pts, vert_normals[vids], plane_threshold, rng, ransac_iters):
            uv = plane.to_2d(pts[inl])
            for part in alpha_shape(uv, alpha):
                if part.area < MIN_POLYGON_AREA:
                    continue
                simple = simplify_outline(part, tol)
                if simple is None or simple.area < MIN_POLYGON_AREA:
                    continue
                ext = np.asarray(simple.exterior.coords)[:-1]
                if len(ext) < 3:
                    log.warning("superpoint %d produced fewer than 3 boundary points; skipped", sp)
                    continue
                base = len(pool)
                pool.extend(plane.from_2d(ext))
                ring = tuple(range(base, base + len(ext)))
                holes = []
                for h in simple.interiors:
                    hc = np.asarray(h.coords)[:-1]
                    b = len(pool)
                    pool.extend(plane.from_2d(hc))
                    holes.append(tuple(range(b, b + len(hc))))
                polys.append(Polygon3(plane, ring, cls, tuple(holes)))
    return PrototypeSet(np.asarray(pool).reshape(-1, 3), polys)
