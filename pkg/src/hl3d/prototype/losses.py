"""Fitting losses and their analytic (sub)gradients.

Every loss is a function of the free variables (vertex pool, per-polygon
plane normals and offsets) and returns ``LossResult`` holding the value and
the gradient blocks. Normals are treated as unconstrained 3-vectors here; the
optimizer restricts updates to the unit sphere.

Point-to-polygon distance uses the plane equation when the point projects
inside the polygon and the nearest ring segment otherwise, so the gradient
flows either into the plane parameters or into the two segment endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from ..geometry import plane_basis


@dataclass
class LossResult:
    value: float
    g_pool: np.ndarray
    g_normals: np.ndarray
    g_offsets: np.ndarray

    @classmethod
    def zeros(cls, n_pool: int, n_poly: int) -> "LossResult":
        return cls(0.0, np.zeros((n_pool, 3)), np.zeros((n_poly, 3)), np.zeros(n_poly))

    def __add__(self, other: "LossResult") -> "LossResult":
        return LossResult(
            self.value + other.value,
            self.g_pool + other.g_pool,
            self.g_normals + other.g_normals,
            self.g_offsets + other.g_offsets,
        )

    def scaled(self, w: float) -> "LossResult":
        return LossResult(w * self.value, w * self.g_pool, w * self.g_normals, w * self.g_offsets)


@dataclass
class PolyGeom:
    """Per-evaluation geometry of one polygon."""

    n: np.ndarray
    d: float
    shape2d: Polygon
    ea: np.ndarray
    eb: np.ndarray
    u: np.ndarray
    v: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def build_geoms(pool: np.ndarray, normals: np.ndarray, offsets: np.ndarray, loops: Sequence[Sequence[np.ndarray]]) -> list[PolyGeom]:
    out = []
    for n, d, lps in zip(normals, offsets, loops):
        nh = n / np.linalg.norm(n)
        u, v = plane_basis(nh)
        rings = [np.stack([pool[l] @ u, pool[l] @ v], axis=1) for l in lps]
        shape = Polygon(rings[0], rings[1:])
        shapely.prepare(shape)
        ea = np.concatenate([l for l in lps])
        eb = np.concatenate([np.roll(l, -1) for l in lps])
        pts = pool[ea]
        out.append(PolyGeom(np.asarray(n, float), float(d), shape, ea, eb, u, v, pts.min(axis=0), pts.max(axis=0)))
    return out


def _edge_nearest(x: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Nearest segment for each point: (distance, edge index, t, closest point)."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    rel = x[:, None, :] - a[None]
    t = np.einsum("mej,ej->me", rel, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    diff = rel - t[..., None] * ab[None]
    dist2 = np.einsum("mej,mej->me", diff, diff)
    k = np.argmin(dist2, axis=1)
    rows = np.arange(len(x))
    tk = t[rows, k]
    closest = a[k] + tk[:, None] * ab[k]
    return np.sqrt(dist2[rows, k]), k, tk, closest


def _inside(g: PolyGeom, x: np.ndarray) -> np.ndarray:
    return shapely.intersects_xy(g.shape2d, x @ g.u, x @ g.v)


def point_polygon_values(x: np.ndarray, pool: np.ndarray, g: PolyGeom) -> np.ndarray:
    h = x @ g.n - g.d
    inside = _inside(g, x)
    out = np.abs(h)
    if not np.all(inside):
        o = ~inside
        dist, _, _, _ = _edge_nearest(x[o], pool[g.ea], pool[g.eb])
        out[o] = dist
    return out


def _accumulate_point_grad(
    res: LossResult, x: np.ndarray, pool: np.ndarray, g: PolyGeom, k: int, gx_sink: Optional[np.ndarray], vids: Optional[np.ndarray]
) -> float:
    """Add d/d(vars) of sum_i D_pp(x_i, polygon k); returns the summed value.

    When ``vids`` is given the points are pool vertices and their own
    gradient goes to ``res.g_pool[vids]``.
    """
    h = x @ g.n - g.d
    inside = _inside(g, x)
    total = 0.0
    if np.any(inside):
        s = np.sign(h[inside])
        total += float(np.abs(h[inside]).sum())
        res.g_normals[k] += s @ x[inside]
        res.g_offsets[k] -= s.sum()
        if vids is not None:
            np.add.at(res.g_pool, vids[inside], s[:, None] * g.n)
    o = ~inside
    if np.any(o):
        xo = x[o]
        dist, e, t, closest = _edge_nearest(xo, pool[g.ea], pool[g.eb])
        total += float(dist.sum())
        diff = xo - closest
        gx = diff / np.where(dist > 0, dist, 1.0)[:, None]
        gx[dist == 0] = 0.0
        np.add.at(res.g_pool, g.ea[e], -(1.0 - t)[:, None] * gx)
        np.add.at(res.g_pool, g.eb[e], -t[:, None] * gx)
        if vids is not None:
            np.add.at(res.g_pool, vids[o], gx)
    return total


def _candidate_mask(x: np.ndarray, g: PolyGeom, bound: float) -> np.ndarray:
    return np.all((x >= g.lo - bound) & (x <= g.hi + bound), axis=1)


def distance_matrix(x: np.ndarray, pool: np.ndarray, geoms: Sequence[PolyGeom]) -> np.ndarray:
    out = np.empty((len(x), len(geoms)))
    for k, g in enumerate(geoms):
        out[:, k] = point_polygon_values(x, pool, g)
    return out


def loss_prox(pool, normals, offsets, loops, points, geoms=None) -> LossResult:
    """Sum over skeleton points of the distance to the closest polygon surface."""
    pool = np.asarray(pool, dtype=float)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    res = LossResult.zeros(len(pool), len(loops))
    if len(loops) == 0 or len(points) == 0:
        return res
    geoms = geoms or build_geoms(pool, normals, offsets, loops)
    dist = distance_matrix(points, pool, geoms)
    nearest = np.argmin(dist, axis=1)
    total = 0.0
    for k, g in enumerate(geoms):
        sel = nearest == k
        if np.any(sel):
            total += _accumulate_point_grad(res, points[sel], pool, g, k, None, None)
    res.value = total
    return res


def loss_prox_value(pool, normals, offsets, loops, points, geoms=None) -> float:
    if len(loops) == 0 or len(points) == 0:
        return 0.0
    geoms = geoms or build_geoms(pool, normals, offsets, loops)
    return float(distance_matrix(np.asarray(points, float), pool, geoms).min(axis=1).sum())


def segment_hits(a: np.ndarray, r: np.ndarray, g: PolyGeom, margin: float = 0.0):
    """Transversal crossings of segments (a, a + r) with the polygon.

    Hits closer than ``margin`` to the segment end point are ignored.
    Returns (segment indices, t, hit points).
    """
    denom = r @ g.n
    length = np.linalg.norm(r, axis=1)
    ok = np.abs(denom) > 1e-12 * np.maximum(length, 1e-300)
    t = np.full(len(a), -1.0)
    t[ok] = (g.d - a[ok] @ g.n) / denom[ok]
    tmax = 1.0 - np.where(length > 0, margin / np.maximum(length, 1e-300), 1.0)
    ok &= (t > 1e-12) & (t < np.minimum(tmax, 1.0 - 1e-12))
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return idx, t[idx], np.zeros((0, 3))
    p = a[idx] + t[idx, None] * r[idx]
    inside = _inside(g, p)
    return idx[inside], t[idx[inside]], p[inside]


def loss_empty(pool, normals, offsets, loops, seg_a, seg_b, tau_inter: float, margin: float = 0.0, geoms=None) -> LossResult:
    """Penalty for observation segments passing through polygons near their edges."""
    pool = np.asarray(pool, dtype=float)
    res = LossResult.zeros(len(pool), len(loops))
    if len(loops) == 0 or len(seg_a) == 0:
        return res
    geoms = geoms or build_geoms(pool, normals, offsets, loops)
    a = np.asarray(seg_a, dtype=float)
    r = np.asarray(seg_b, dtype=float) - a
    total = 0.0
    for k, g in enumerate(geoms):
        idx, _, p = segment_hits(a, r, g, margin)
        if len(idx) == 0:
            continue
        dist, e, te, closest = _edge_nearest(p, pool[g.ea], pool[g.eb])
        keep = dist <= tau_inter
        if not np.any(keep):
            continue
        idx, p, dist, e, te, closest = idx[keep], p[keep], dist[keep], e[keep], te[keep], closest[keep]
        total += float(dist.sum())
        gp = (p - closest) / np.where(dist > 0, dist, 1.0)[:, None]
        gp[dist == 0] = 0.0
        rr = r[idx]
        ratio = np.einsum("ij,ij->i", gp, rr) / (rr @ g.n)
        res.g_normals[k] -= ratio @ p
        res.g_offsets[k] += ratio.sum()
        np.add.at(res.g_pool, g.ea[e], -(1.0 - te)[:, None] * gp)
        np.add.at(res.g_pool, g.eb[e], -te[:, None] * gp)
    res.value = total
    return res


def loss_connect(pool, normals, offsets, loops, tau_connect: float, geoms=None) -> LossResult:
    """Distance of unshared polygon vertices to the closest other polygon, gated by tau_connect."""
    pool = np.asarray(pool, dtype=float)
    n_poly = len(loops)
    res = LossResult.zeros(len(pool), n_poly)
    if n_poly < 2:
        return res
    geoms = geoms or build_geoms(pool, normals, offsets, loops)
    owner_count = np.zeros(len(pool), dtype=np.int64)
    first_owner = np.full(len(pool), -1, dtype=np.int64)
    for k, lps in enumerate(loops):
        ids = np.unique(np.concatenate(lps))
        owner_count[ids] += 1
        first_owner[ids] = np.where(first_owner[ids] < 0, k, first_owner[ids])
    vids = np.flatnonzero(owner_count == 1)
    if len(vids) == 0:
        return res
    x = pool[vids]
    dist = np.full((len(vids), n_poly), np.inf)
    for k, g in enumerate(geoms):
        cand = _candidate_mask(x, g, tau_connect) & (first_owner[vids] != k)
        if np.any(cand):
            dist[cand, k] = point_polygon_values(x[cand], pool, g)
    nearest = np.argmin(dist, axis=1)
    best = dist[np.arange(len(vids)), nearest]
    active = best <= tau_connect
    total = 0.0
    for k, g in enumerate(geoms):
        sel = active & (nearest == k)
        if np.any(sel):
            total += _accumulate_point_grad(res, x[sel], pool, g, k, None, vids[sel])
    res.value = total
    return res


def edge_share_counts(loops) -> dict[tuple[int, int], int]:
    """Number of distinct polygons using each undirected edge."""
    counts: dict[tuple[int, int], int] = {}
    for lps in loops:
        seen = set()
        for l in lps:
            ll = l.tolist()
            for a, b in zip(ll, ll[1:] + ll[:1]):
                seen.add((a, b) if a < b else (b, a))
        for key in seen:
            counts[key] = counts.get(key, 0) + 1
    return counts


def loss_simple(pool, normals, offsets, loops) -> LossResult:
    """Total length of edges not shared with another polygon."""
    pool = np.asarray(pool, dtype=float)
    res = LossResult.zeros(len(pool), len(loops))
    counts = edge_share_counts(loops)
    ea, eb = [], []
    for lps in loops:
        for l in lps:
            ll = l.tolist()
            for a, b in zip(ll, ll[1:] + ll[:1]):
                if counts[(a, b) if a < b else (b, a)] == 1:
                    ea.append(a)
                    eb.append(b)
    if not ea:
        return res
    ea = np.asarray(ea)
    eb = np.asarray(eb)
    diff = pool[ea] - pool[eb]
    length = np.linalg.norm(diff, axis=1)
    unit = diff / np.where(length > 0, length, 1.0)[:, None]
    np.add.at(res.g_pool, ea, unit)
    np.add.at(res.g_pool, eb, -unit)
    res.value = float(length.sum())
    return res


@dataclass
class LossInputs:
    points: np.ndarray
    seg_a: np.ndarray
    seg_b: np.ndarray
    tau_inter: float
    tau_connect: float
    margin: float = 0.0
    w_prox: float = 1.0
    w_empty: float = 1.0
    w_connect: float = 1.0
    w_simple: float = 1.0


def total_loss(pool, normals, offsets, loops, data: LossInputs) -> tuple[LossResult, dict[str, float]]:
    """Weighted sum of the four terms plus the per-term values."""
    geoms = build_geoms(pool, normals, offsets, loops) if len(loops) else []
    terms = {
        "prox": loss_prox(pool, normals, offsets, loops, data.points, geoms).scaled(data.w_prox),
        "empty": loss_empty(pool, normals, offsets, loops, data.seg_a, data.seg_b, data.tau_inter, data.margin, geoms).scaled(data.w_empty),
        "connect": loss_connect(pool, normals, offsets, loops, data.tau_connect, geoms).scaled(data.w_connect),
        "simple": loss_simple(pool, normals, offsets, loops).scaled(data.w_simple),
    }
    out = LossResult.zeros(len(pool), len(loops))
    for t in terms.values():
        out = out + t
    return out, {k: t.value for k, t in terms.items()}
