"""Geometric primitives shared by the fitting, layout and evaluation code.

World frame is z-up, units are meters. 3D polygons are handled as (n, 3)
vertex arrays, optionally with hole loops; 2D polygons are shapely
``Polygon`` objects (outer ring counter-clockwise, holes clockwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import shapely
import triangle
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.geometry.polygon import orient

from .semantics import SemanticClass

EPS_PLANE = 1e-6
SNAP_GRID = 1e-4
CDT_GRID = 1e-9


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane axes (u, v) with u x v = normal.

    For vertical planes u is horizontal and v points up; for horizontal
    planes u is +-x.
    """
    n = np.asarray(normal, dtype=float)
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane {x : normal . x = offset} with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got |n|={norm}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def through(cls, normal, point) -> "Plane":
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ np.asarray(point, dtype=float)))

    @property
    def origin(self) -> np.ndarray:
        return self.offset * self.normal

    def signed_distance(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - self.signed_distance(x)[..., None] * self.normal

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        return plane_basis(self.normal)

    def to_2d(self, x) -> np.ndarray:
        u, v = self.basis()
        rel = np.asarray(x, dtype=float) - self.origin
        return np.stack([rel @ u, rel @ v], axis=-1)

    def from_2d(self, uv) -> np.ndarray:
        u, v = self.basis()
        uv = np.asarray(uv, dtype=float)
        return self.origin + uv[..., 0:1] * u + uv[..., 1:2] * v

    def height_at(self, xy) -> np.ndarray:
        """z of the plane above the given xy positions (non-vertical planes)."""
        n = self.normal
        if abs(n[2]) < 1e-9:
            raise ValueError("vertical plane has no height function")
        xy = np.asarray(xy, dtype=float)
        return (self.offset - xy[..., 0] * n[0] - xy[..., 1] * n[1]) / n[2]

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def angle_to(self, other: "Plane") -> float:
        """Angle between the oriented normals, radians."""
        return float(np.arccos(np.clip(self.normal @ other.normal, -1.0, 1.0)))


@dataclass(frozen=True)
class Polygon3:
    """Planar polygon whose ring indexes an external vertex pool."""

    plane: Plane
    ring: tuple[int, ...]
    cls: SemanticClass = SemanticClass.UNKNOWN
    holes: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if len(self.ring) < 3:
            raise ValueError("polygon ring needs at least 3 vertices")

    @property
    def loops(self) -> tuple[tuple[int, ...], ...]:
        return (self.ring, *self.holes)

    def vertex_ids(self) -> list[int]:
        return [i for loop in self.loops for i in loop]

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for loop in self.loops:
            out.extend(zip(loop, loop[1:] + loop[:1]))
        return out

    def coords(self, pool: np.ndarray) -> np.ndarray:
        return pool[list(self.ring)]


def fit_plane(points, ref_normals=None) -> Plane:
    """Total-least-squares plane through ``points``.

    The normal is flipped to agree with the majority of ``ref_normals`` when
    given; otherwise it points from the centroid towards the origin.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise ValueError("plane fit needs at least 3 points")
    c = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - c, full_matrices=False)
    if s[1] <= 1e-9 * max(1.0, s[0]):
        raise ValueError("points are collinear; plane is undefined")
    n = vt[2]
    if ref_normals is not None:
        votes = np.asarray(ref_normals, dtype=float).reshape(-1, 3) @ n
        if np.sum(votes > 0) < np.sum(votes < 0):
            n = -n
    else:
        side = n @ c
        if side > 1e-12 or (abs(side) <= 1e-12 and n[np.argmax(np.abs(n))] < 0):
            n = -n
    n = n / np.linalg.norm(n)
    return Plane(n, float(n @ c))


def polygon_frame(coords, holes: Sequence = (), plane: Optional[Plane] = None):
    """Return (plane, 2D shapely polygon in plane coordinates)."""
    coords = np.asarray(coords, dtype=float)
    if len(coords) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if plane is None:
        allpts = np.vstack([coords, *[np.asarray(h, dtype=float) for h in holes]]) if holes else coords
        plane = fit_plane(allpts)
    poly2 = Polygon(plane.to_2d(coords), [plane.to_2d(np.asarray(h, dtype=float)) for h in holes])
    if poly2.area <= 1e-12:
        raise ValueError("degenerate polygon (zero area)")
    return plane, poly2


def _loop_edges(loops) -> tuple[np.ndarray, np.ndarray]:
    a = np.vstack([np.asarray(l, dtype=float) for l in loops])
    b = np.vstack([np.roll(np.asarray(l, dtype=float), -1, axis=0) for l in loops])
    return a, b


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from points ``p`` (..., 3) to segments (a, b), broadcast."""
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def point_to_edge_distance(p, segment) -> float:
    a, b = (np.asarray(x, dtype=float) for x in segment)
    if np.linalg.norm(b - a) == 0.0:
        raise ValueError("zero-length segment")
    return float(point_segment_distance(p, a, b))


def point_to_polygon_distance(p, coords, holes: Sequence = (), plane: Optional[Plane] = None):
    """Distance from point(s) to the closed surface of a planar polygon.

    Returns a float for a single point, an array for an (m, 3) input.
    """
    single = np.ndim(p) == 1
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    plane, poly2 = polygon_frame(coords, holes, plane)
    h = plane.signed_distance(pts)
    q = plane.to_2d(pts)
    inside = shapely.intersects_xy(poly2, q[:, 0], q[:, 1])
    a, b = _loop_edges([coords, *holes])
    d_edge = point_segment_distance(pts[:, None, :], a[None], b[None]).min(axis=1)
    # |h| <= d_edge inside; the min keeps points on the boundary at exactly 0
    out = np.where(inside, np.minimum(np.abs(h), d_edge), d_edge)
    return float(out[0]) if single else out


def segment_polygon_intersection(a, b, coords, holes: Sequence = (), plane: Optional[Plane] = None):
    """Transversal crossing point of the open segment (a, b) with a polygon.

    Coplanar segments and crossings at a segment endpoint return None.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    plane, poly2 = polygon_frame(coords, holes, plane)
    r = b - a
    denom = plane.normal @ r
    length = np.linalg.norm(r)
    if length == 0.0 or abs(denom) <= 1e-12 * length:
        return None
    t = (plane.offset - plane.normal @ a) / denom
    if not (1e-12 < t < 1.0 - 1e-12):
        return None
    hit = a + t * r
    uv = plane.to_2d(hit)
    if not shapely.intersects_xy(poly2, uv[0], uv[1]):
        return None
    return hit


def polygon_hausdorff(coords_a, coords_b) -> float:
    """Vertex-to-surface Hausdorff distance between two planar polygons."""
    a = np.asarray(coords_a, dtype=float)
    b = np.asarray(coords_b, dtype=float)
    d_ab = np.max(point_to_polygon_distance(a, b))
    d_ba = np.max(point_to_polygon_distance(b, a))
    return float(max(d_ab, d_ba))


def polygon_area_3d(coords) -> float:
    c = np.asarray(coords, dtype=float)
    return float(0.5 * np.linalg.norm(np.sum(np.cross(c, np.roll(c, -1, axis=0)), axis=0)))


def _segments_of(geom) -> list:
    if geom.is_empty:
        return []
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(_segments_of(g))
        return out
    if geom.geom_type in ("LineString", "LinearRing"):
        c = np.asarray(geom.coords)
        return [(c[i], c[i + 1]) for i in range(len(c) - 1)]
    if geom.geom_type == "Polygon":
        return _segments_of(geom.boundary)
    return []


def cdt_triangulate(region, constraints: Sequence = ()) -> tuple[np.ndarray, np.ndarray]:
    """Constrained Delaunay triangulation of a 2D region.

    ``constraints`` are 2D segments (or polylines) that may extend beyond the
    region; only their parts inside it are enforced. Returns (points (n, 2),
    triangles (m, 3)) with counter-clockwise triangles covering the region.
    """
    if region.is_empty or not region.is_valid or region.area <= 0:
        raise ValueError("invalid triangulation region")
    lines = [region.boundary]
    for c in constraints:
        c = np.asarray(c, dtype=float)
        if len(c) < 2 or np.allclose(c[0], c[-1]) and len(c) == 2:
            continue
        clipped = LineString(c).intersection(region)
        if not clipped.is_empty:
            lines.append(clipped)
    noded = shapely.union_all(lines, grid_size=CDT_GRID)

    index: dict[tuple[float, float], int] = {}
    verts: list[tuple[float, float]] = []
    segs: list[tuple[int, int]] = []

    def vid(pt) -> int:
        key = (float(pt[0]), float(pt[1]))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    for p, q in _segments_of(noded):
        i, j = vid(p), vid(q)
        if i != j:
            segs.append((min(i, j), max(i, j)))
    segs = sorted(set(segs))
    result = triangle.triangulate(
        {"vertices": np.asarray(verts), "segments": np.asarray(segs, dtype=np.int32)}, "pQ"
    )
    pts = np.asarray(result["vertices"], dtype=float)
    tris = np.asarray(result.get("triangles", np.zeros((0, 3), int)), dtype=np.int64)
    if len(tris) == 0:
        return pts, tris
    cent = pts[tris].mean(axis=1)
    keep = shapely.contains_xy(region, cent[:, 0], cent[:, 1])
    tris = tris[keep]
    p0, p1, p2 = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    cross = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris


def as_polygons(geom) -> list[Polygon]:
    """Flatten any shapely geometry into a list of oriented polygons."""
    if geom is None or geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [orient(geom, 1.0)] if geom.area > 0 else []
    if isinstance(geom, MultiPolygon) or hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(as_polygons(g))
        return out
    return []


def polygon_union_2d(polys: Sequence[Polygon]) -> list[Polygon]:
    """Boolean union; disjoint parts come back as separate polygons."""
    polys = [p for p in polys if p is not None and not p.is_empty]
    if not polys:
        return []
    try:
        merged = shapely.union_all([shapely.make_valid(p) for p in polys])
        if not merged.is_valid:
            raise shapely.errors.GEOSException("invalid union")
    except shapely.errors.GEOSException:
        snapped = [shapely.set_precision(p, SNAP_GRID) for p in polys]
        merged = shapely.union_all(snapped, grid_size=SNAP_GRID)
    out = as_polygons(merged)
    out.sort(key=lambda p: -p.area)
    return out


def _rdp_open(points: np.ndarray, tol: float) -> np.ndarray:
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = points[i], points[j]
        mid = points[i + 1 : j]
        d = point_segment_distance(_pad3(mid), _pad3(a), _pad3(b))
        k = int(np.argmax(d))
        if d[k] > tol:
            k += i + 1
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return keep


def _pad3(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 3:
        return x
    return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)


def rdp_indices(ring, tol: float) -> np.ndarray:
    """Indices of the ring vertices kept by Ramer-Douglas-Peucker (closed ring)."""
    pts = np.asarray(ring, dtype=float)
    n = len(pts)
    if n <= 3:
        return np.arange(n)
    # anchors are extreme points, so they are never removable mid-edge vertices
    i0 = int(np.argmax(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    i1 = int(np.argmax(np.linalg.norm(pts - pts[i0], axis=1)))
    order = np.roll(np.arange(n), -i0)
    k = int(np.where(order == i1)[0][0])
    first = order[: k + 1]
    second = np.append(order[k:], order[0])
    keep = set(first[_rdp_open(pts[first], tol)]) | set(second[_rdp_open(pts[second], tol)])
    if len(keep) < 3:
        chord = point_segment_distance(_pad3(pts), _pad3(pts[i0]), _pad3(pts[i1]))
        chord[list(keep)] = -1
        keep.add(int(np.argmax(chord)))
    return np.array(sorted(keep))


def rdp_simplify(ring, tol: float) -> np.ndarray:
    pts = np.asarray(ring, dtype=float)
    return pts[rdp_indices(pts, tol)]


def point_in_polygon_2d(p, poly: Polygon) -> bool:
    """Containment test; points on the boundary count as inside."""
    return bool(shapely.intersects_xy(poly, float(p[0]), float(p[1])))


def ring_is_simple(ring2d) -> bool:
    r = np.asarray(ring2d, dtype=float)
    if len(r) < 3:
        return False
    return bool(shapely.is_simple(shapely.linearrings(r)))


def signed_area_2d(ring2d) -> float:
    r = np.asarray(ring2d, dtype=float)
    x, y = r[:, 0], r[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def fan_triangles(n: int) -> list[tuple[int, int, int]]:
    return [(0, i, i + 1) for i in range(1, n - 1)]


def triangulate_polygon3(coords, holes: Sequence = ()) -> np.ndarray:
    """Triangles (m, 3, 3) covering a planar 3D polygon; [] for degenerate input."""
    coords = np.asarray(coords, dtype=float)
    try:
        plane, poly2 = polygon_frame(coords, holes)
    except ValueError:
        return np.zeros((0, 3, 3))
    if not poly2.is_valid:
        poly2 = shapely.make_valid(poly2)
    tris = []
    for part in as_polygons(poly2):
        pts, t = cdt_triangulate(part)
        if len(t):
            tris.append(plane.from_2d(pts)[t])
    if not tris:
        return np.zeros((0, 3, 3))
    return np.concatenate(tris)
