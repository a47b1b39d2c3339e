"""Window rectangles from window-labeled pixels cast onto the room walls."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon
from sklearn.cluster import DBSCAN
from sklearn.neighbors import LocalOutlierFactor

from ..scene_io import CameraFrame
from ..semantics import SemanticClass
from .graph import _wall_frame

log = logging.getLogger(__name__)


@dataclass
class WallFrame:
    coords: np.ndarray
    origin: np.ndarray
    u: np.ndarray  # horizontal
    v: np.ndarray  # up
    normal: np.ndarray
    poly2: Polygon

    @classmethod
    def of(cls, wall: np.ndarray) -> "WallFrame":
        wall = np.asarray(wall, dtype=float)
        c, u, v = _wall_frame(wall)
        n = np.cross(u, v)
        poly2 = Polygon(np.stack([(wall - c) @ u, (wall - c) @ v], axis=1))
        return cls(wall, c, u, v, n, poly2 if poly2.is_valid else poly2.buffer(0))

    def to_2d(self, x: np.ndarray) -> np.ndarray:
        rel = x - self.origin
        return np.stack([rel @ self.u, rel @ self.v], axis=-1)

    def from_2d(self, uv: np.ndarray) -> np.ndarray:
        return self.origin + uv[..., :1] * self.u + uv[..., 1:2] * self.v


def cast_window_rays(frames: Sequence[CameraFrame], walls: Sequence[WallFrame], stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """First wall hit of every window-labeled pixel ray: (points (n, 3), wall index (n,))."""
    pts_out, wall_out = [], []
    for f in frames:
        if f.labels is None:
            continue
        rows, cols = np.nonzero(f.labels[::stride, ::stride] == SemanticClass.WINDOW)
        if len(rows) == 0:
            continue
        d = f.ray_directions(cols * stride, rows * stride)
        o = f.center
        best_t = np.full(len(d), np.inf)
        best_w = np.full(len(d), -1)
        for k, w in enumerate(walls):
            denom = d @ w.normal
            ok = np.abs(denom) > 1e-12
            t = np.full(len(d), np.inf)
            t[ok] = ((w.origin - o) @ w.normal) / denom[ok]
            front = ok & (t > 1e-6) & (t < best_t)
            if not np.any(front):
                continue
            hit = o + t[front, None] * d[front]
            uv = w.to_2d(hit)
            inside = shapely.intersects_xy(w.poly2, uv[:, 0], uv[:, 1])
            idx = np.flatnonzero(front)[inside]
            best_t[idx] = t[idx]
            best_w[idx] = k
        hit_mask = best_w >= 0
        pts_out.append(o + best_t[hit_mask, None] * d[hit_mask])
        wall_out.append(best_w[hit_mask])
    if not pts_out:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)
    return np.vstack(pts_out), np.concatenate(wall_out)


def lof_filter(points: np.ndarray, k: int = 20, threshold: float = 1.5) -> np.ndarray:
    """Boolean inlier mask; scores above ``threshold`` are outliers."""
    n = len(points)
    if n < 3:
        return np.ones(n, dtype=bool)
    lof = LocalOutlierFactor(n_neighbors=min(k, n - 1))
    lof.fit(points)
    return -lof.negative_outlier_factor_ <= threshold


def window_rectangles(
    uv: np.ndarray, *, eps: float = 0.2, min_samples: int = 5, min_points: int = 10, min_size: float = 0.30
) -> list[np.ndarray]:
    """Axis-aligned (u, v) rectangles of DBSCAN clusters that pass the size limits."""
    if len(uv) < min_points:
        return []
    labels = DBSCAN(eps=eps, min_samples=min_samples).fit_predict(uv)
    out = []
    for lab in sorted(set(labels.tolist()) - {-1}):
        pts = uv[labels == lab]
        if len(pts) < min_points:
            continue
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        if np.all(hi - lo > min_size):
            out.append(np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]))
    return out


def detect_windows(
    frames: Sequence[CameraFrame],
    walls: Sequence[np.ndarray],
    *,
    stride: int = 1,
    lof_neighbors: int = 20,
    lof_threshold: float = 1.5,
    eps: float = 0.2,
    min_samples: int = 5,
    min_points: int = 10,
    min_size: float = 0.30,
) -> dict[int, list[np.ndarray]]:
    """Window rectangles (3D, on the wall plane) keyed by wall index."""
    frames_w = [WallFrame.of(w) for w in walls]
    pts, wid = cast_window_rays(frames, frames_w, stride)
    out: dict[int, list[np.ndarray]] = {}
    if len(pts) == 0:
        return out
    keep = lof_filter(pts, lof_neighbors, lof_threshold)
    pts, wid = pts[keep], wid[keep]
    for k in sorted(set(wid.tolist())):
        wf = frames_w[k]
        rects = window_rectangles(
            wf.to_2d(pts[wid == k]), eps=eps, min_samples=min_samples, min_points=min_points, min_size=min_size
        )
        if rects:
            out[k] = [wf.from_2d(r) for r in rects]
    log.info("detected %d windows from %d hits", sum(len(v) for v in out.values()), len(pts))
    return out
