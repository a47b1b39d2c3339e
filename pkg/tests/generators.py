"""Random geometry used across the tests."""

import numpy as np
import shapely
from shapely.geometry import box
from shapely.geometry.polygon import orient

from hl3d.geometry import plane_basis
from hl3d.layout.extrude import CeilingCandidate


def unit_vector(rng):
    n = rng.normal(size=3)
    return n / np.linalg.norm(n)


def convex_polygon(rng, center=None, radius=(0.3, 0.6), n=(4, 8), normal=None):
    """Random convex polygon (counter-clockwise about ``normal``) in a random plane."""
    normal = unit_vector(rng) if normal is None else np.asarray(normal, dtype=float)
    center = rng.normal(size=3) * 0.5 if center is None else np.asarray(center, dtype=float)
    u, v = plane_basis(normal)
    m = int(rng.integers(n[0], n[1] + 1))
    ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    # convex: all vertices on one circle
    r = rng.uniform(*radius)
    return center + np.outer(r * np.cos(ang), u) + np.outer(r * np.sin(ang), v)


def star_polygon(rng, m=6, normal=None):
    """Random star-shaped (not necessarily convex) polygon; loss tests need
    the vertices off a common circle."""
    normal = unit_vector(rng) if normal is None else normal
    u, v = plane_basis(normal)
    c = rng.normal(size=3) * 0.5
    ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    rad = rng.uniform(0.6, 1.2, m)
    return c + np.outer(rad * np.cos(ang), u) + np.outer(rad * np.sin(ang), v), normal, float(normal @ c)


def rect3(x0, y0, x1, y1, z0, z1=None, axis="x"):
    """Rectangle over [x0, x1] x [y0, y1]; with ``z1`` it slopes along ``axis``."""
    z1 = z0 if z1 is None else z1
    if axis == "x":
        return np.array([[x0, y0, z0], [x1, y0, z1], [x1, y1, z1], [x0, y1, z0]], dtype=float)
    return np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z1], [x0, y1, z1]], dtype=float)


def rectilinear_room(rng):
    """Footprint made of 1-3 overlapping axis-aligned boxes (largest component)."""
    fp = box(0, 0, rng.uniform(2, 6), rng.uniform(2, 6))
    for _ in range(int(rng.integers(0, 3))):
        x0, y0 = rng.uniform(0, 5, 2)
        fp = fp.union(box(x0, y0, x0 + rng.uniform(1, 3), y0 + rng.uniform(1, 3)))
    parts = list(getattr(fp, "geoms", [fp]))
    return orient(max(parts, key=lambda g: g.area))


def ceiling_candidates(rng, k=None):
    """1-5 flat or sloped rectangles above a floor at z = 0."""
    k = int(rng.integers(1, 6)) if k is None else k
    out = []
    for _ in range(k):
        x0, y0 = rng.uniform(-1, 6, 2)
        w, h = rng.uniform(1, 5, 2)
        za, zb = rng.uniform(2.0, 3.5, 2)
        if rng.random() < 0.5:
            zb = za
        out.append(CeilingCandidate.from_coords(rect3(x0, y0, x0 + w, y0 + h, za, zb, axis=rng.choice(["x", "y"]))))
    return out


def interior_points(poly, rng, n=400):
    bx = poly.bounds
    xy = rng.uniform(bx[:2], bx[2:], size=(n, 2))
    inside = shapely.contains_xy(poly, xy[:, 0], xy[:, 1])
    return xy[inside]
