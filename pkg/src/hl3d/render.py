"""Z-buffer rasterization of layout polygons into pinhole depth images."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import triangulate_polygon3
from .scene_io import CameraFrame

NEAR = 1e-3


def _clip_near(tri: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of a camera-space triangle against z >= near."""
    out = []
    n = len(tri)
    for i in range(n):
        a, b = tri[i], tri[(i + 1) % n]
        ina, inb = a[2] >= near, b[2] >= near
        if ina:
            out.append(a)
        if ina != inb:
            t = (near - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    if len(out) < 3:
        return []
    return [np.array([out[0], out[k], out[k + 1]]) for k in range(1, len(out) - 1)]


def rasterize(triangles: np.ndarray, frame: CameraFrame, near: float = NEAR) -> tuple[np.ndarray, np.ndarray]:
    """Render world triangles (m, 3, 3).

    Returns (z-depth with inf where nothing is hit, triangle index or -1).
    Depth is interpolated perspective-correctly (1/z is affine in screen space).
    """
    h, w = frame.height, frame.width
    depth = np.full((h, w), np.inf)
    index = np.full((h, w), -1, dtype=np.int64)
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    if len(tris) == 0:
        return depth, index
    cam = (tris - frame.center) @ frame.rotation
    for k, tri in enumerate(cam):
        if np.all(tri[:, 2] < near):
            continue
        pieces = [tri] if np.all(tri[:, 2] >= near) else _clip_near(tri, near)
        for piece in pieces:
            z = piece[:, 2]
            u = frame.fx * piece[:, 0] / z + frame.cx
            v = frame.fy * piece[:, 1] / z + frame.cy
            area = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0])
            if abs(area) < 1e-12:
                continue
            c0 = max(int(np.ceil(u.min())), 0)
            c1 = min(int(np.floor(u.max())), w - 1)
            r0 = max(int(np.ceil(v.min())), 0)
            r1 = min(int(np.floor(v.max())), h - 1)
            if c0 > c1 or r0 > r1:
                continue
            pu, pv = np.meshgrid(np.arange(c0, c1 + 1, dtype=float), np.arange(r0, r1 + 1, dtype=float))
            w0 = ((u[1] - pu) * (v[2] - pv) - (u[2] - pu) * (v[1] - pv)) / area
            w1 = ((u[2] - pu) * (v[0] - pv) - (u[0] - pu) * (v[2] - pv)) / area
            w2 = 1.0 - w0 - w1
            eps = -1e-9
            inside = (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
            if not np.any(inside):
                continue
            zz = 1.0 / (w0 / z[0] + w1 / z[1] + w2 / z[2])
            sub = depth[r0 : r1 + 1, c0 : c1 + 1]
            closer = inside & (zz < sub)
            sub[closer] = zz[closer]
            index[r0 : r1 + 1, c0 : c1 + 1][closer] = k
    return depth, index


def polygons_to_triangles(polygons: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate polygons; also returns the source polygon of each triangle."""
    tris, owner = [], []
    for i, poly in enumerate(polygons):
        t = triangulate_polygon3(poly)
        if len(t):
            tris.append(t)
            owner.append(np.full(len(t), i, dtype=np.int64))
    if not tris:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64)
    return np.concatenate(tris), np.concatenate(owner)


def render_depth(polygons: Sequence[np.ndarray], frame: CameraFrame) -> np.ndarray:
    """Depth image of layout polygons; 0 marks pixels with no hit."""
    tris, _ = polygons_to_triangles(polygons)
    depth, _ = rasterize(tris, frame)
    depth[~np.isfinite(depth)] = 0.0
    return depth
