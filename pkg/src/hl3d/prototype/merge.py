"""Vertex merging, ring simplification and coplanar polygon merging."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import Polygon

from ..geometry import Plane, Polygon3, _rdp_open, fit_plane, plane_basis, point_to_polygon_distance, polygon_union_2d, rdp_indices, ring_is_simple
from .losses import loss_prox_value
from .types import EPS_FIT, PrototypeSet, project_vertices

log = logging.getLogger(__name__)


def _collapse(loop: list[int]) -> list[int]:
    """Remove cyclically consecutive duplicates."""
    out = [v for i, v in enumerate(loop) if v != loop[i - 1]] if len(loop) > 1 else list(loop)
    return out


def _cluster_ok(members: set[int], loops_of: dict[int, list[list[int]]], owners: list[list[int]]) -> bool:
    """A merged cluster must occupy one contiguous run in every ring it touches."""
    touched = set()
    for v in members:
        touched.update(owners[v])
    for k in touched:
        for loop in loops_of[k]:
            hit = [v in members for v in loop]
            n_hit = sum(hit)
            if n_hit < 2:
                continue
            # contiguous (cyclic) run <=> exactly one False->True transition
            rises = sum(1 for i in range(len(hit)) if hit[i] and not hit[i - 1])
            if rises != 1 and n_hit != len(hit):
                return False
            if len(loop) - n_hit + 1 < 3:
                return False
    return True


def merge_close_vertices(proto: PrototypeSet, tau: float, eps: float = EPS_FIT) -> PrototypeSet:
    """Union pool vertices closer than ``tau`` when the result stays consistent.

    A merged vertex is placed at the point nearest to the cluster mean that
    lies on every owning plane; clusters whose planes do not meet there
    (within ``eps``) are left unmerged.
    """
    pool = proto.pool
    if len(pool) < 2:
        return proto
    owners = proto.owners()
    loops_of = {k: [list(l) for l in p.loops] for k, p in enumerate(proto.polygons)}
    N = proto.normals()
    D = proto.offsets()
    pairs = cKDTree(pool).query_pairs(tau, output_type="ndarray")
    if len(pairs) == 0:
        return proto
    dist = np.linalg.norm(pool[pairs[:, 0]] - pool[pairs[:, 1]], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0], dist))
    parent = list(range(len(pool)))
    members: dict[int, set[int]] = {}
    position: dict[int, np.ndarray] = {}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for idx in order.tolist():
        if not dist[idx] < tau:
            continue
        i, j = int(pairs[idx, 0]), int(pairs[idx, 1])
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        mem = members.get(ri, {ri}) | members.get(rj, {rj})
        own = sorted({k for v in mem for k in owners[v]})
        if not _cluster_ok(mem, loops_of, owners):
            continue
        pts = pool[sorted(mem)]
        mean = pts.mean(axis=0)
        if own:
            Nk, Dk = N[own], D[own]
            target = mean + np.linalg.lstsq(Nk, Dk - Nk @ mean, rcond=1e-8)[0]
            if np.max(np.abs(Nk @ target - Dk)) > eps:
                continue
        else:
            target = mean
        if np.max(np.linalg.norm(pts - target, axis=1)) >= tau:
            continue
        root = min(ri, rj)
        parent[ri] = parent[rj] = root
        members[root] = mem
        position[root] = target
        members.pop(max(ri, rj), None)
        position.pop(max(ri, rj), None)

    if not members:
        return proto
    new_pool = pool.copy()
    for root, pos in position.items():
        new_pool[root] = pos
    remap = [find(v) for v in range(len(pool))]
    polys = []
    for p in proto.polygons:
        ring = _collapse([remap[v] for v in p.ring])
        holes = [_collapse([remap[v] for v in h]) for h in p.holes]
        holes = tuple(tuple(h) for h in holes if len(h) >= 3)
        polys.append(replace(p, ring=tuple(ring), holes=holes))
    return PrototypeSet(new_pool, polys).compact()


def _simplify_loop(loop: list[int], xy: np.ndarray, anchors: set[int], tol: float) -> list[int]:
    n = len(loop)
    if n <= 3:
        return loop
    anchor_pos = [i for i, v in enumerate(loop) if v in anchors]
    if not anchor_pos:
        keep = rdp_indices(xy, tol)
        return [loop[i] for i in keep]
    start = anchor_pos[0]
    order = list(range(start, n)) + list(range(start))
    rolled = [loop[i] for i in order]
    pts = xy[order]
    cut = [i for i, v in enumerate(rolled) if v in anchors] + [n]
    kept = []
    for a, b in zip(cut[:-1], cut[1:]):
        idx = list(range(a, b + 1))
        seg = np.vstack([pts[a : b], pts[0:1]]) if b == n else pts[a : b + 1]
        mask = _rdp_open(seg, tol) if len(seg) > 2 else np.ones(len(seg), dtype=bool)
        kept.extend(idx[i] for i in range(len(idx) - 1) if mask[i])
    out = [rolled[i] for i in kept]
    return out if len(out) >= 3 else loop


def simplify_rings(proto: PrototypeSet, tol: float) -> PrototypeSet:
    """RDP per ring in plane coordinates; vertices shared with other polygons are kept."""
    owners = proto.owners()
    anchors = {v for v, own in enumerate(owners) if len(own) >= 2}
    polys = []
    for p in proto.polygons:
        u, v = plane_basis(p.plane.normal)
        new_loops = []
        for loop in p.loops:
            loop = list(loop)
            x = proto.pool[loop]
            xy = np.stack([x @ u, x @ v], axis=1)
            out = _simplify_loop(loop, xy, anchors, tol)
            xo = proto.pool[out]
            if len(out) < 3 or not ring_is_simple(np.stack([xo @ u, xo @ v], axis=1)):
                out = loop
            new_loops.append(tuple(out))
        polys.append(replace(p, ring=new_loops[0], holes=tuple(new_loops[1:])))
    return PrototypeSet(proto.pool, polys).compact()


def _polygon2d(proto: PrototypeSet, k: int, plane: Plane) -> Polygon:
    p = proto.polygons[k]
    return Polygon(plane.to_2d(proto.pool[list(p.ring)]), [plane.to_2d(proto.pool[list(h)]) for h in p.holes])


def _min_gap(proto: PrototypeSet, i: int, j: int) -> float:
    a, b = proto.polygons[i], proto.polygons[j]
    ca, cb = proto.coords(i), proto.coords(j)
    try:
        d1 = np.min(point_to_polygon_distance(proto.pool[a.vertex_ids()], cb, proto.hole_coords(j), b.plane))
        d2 = np.min(point_to_polygon_distance(proto.pool[b.vertex_ids()], ca, proto.hole_coords(i), a.plane))
    except ValueError:
        return np.inf
    return float(min(d1, d2))


def _try_merge_pair(proto: PrototypeSet, i: int, j: int, points: np.ndarray, cfg_tau: float, max_increase: float, eps: float) -> Optional[PrototypeSet]:
    pi, pj = proto.polygons[i], proto.polygons[j]
    ids_i, ids_j = pi.vertex_ids(), pj.vertex_ids()
    allpts = proto.pool[ids_i + ids_j]
    try:
        plane = fit_plane(allpts, np.vstack([np.tile(pi.plane.normal, (len(ids_i), 1)), np.tile(pj.plane.normal, (len(ids_j), 1))]))
    except ValueError:
        return None
    a2, b2 = _polygon2d(proto, i, plane), _polygon2d(proto, j, plane)
    if not (a2.is_valid and b2.is_valid):
        return None
    merged = polygon_union_2d([a2, b2])
    if len(merged) != 1:
        h = cfg_tau / 2
        closed = shapely.union_all([a2.buffer(h, join_style="mitre"), b2.buffer(h, join_style="mitre")]).buffer(-h, join_style="mitre")
        merged = [g for g in polygon_union_2d([closed]) if g.area > 1e-9]
        if len(merged) != 1:
            return None
    shape = merged[0].simplify(0.0)
    old_ids = list(dict.fromkeys(ids_i + ids_j))
    old_xy = plane.to_2d(proto.pool[old_ids])
    tree = cKDTree(old_xy)
    pool = list(proto.pool)
    created = 0

    def loop_ids(coords) -> list[int]:
        nonlocal created
        out = []
        for q in np.asarray(coords)[:-1]:
            d, k = tree.query(q)
            if d < 1e-6:
                out.append(old_ids[k])
            else:
                pool.append(plane.from_2d(q))
                out.append(len(pool) - 1)
                created += 1
        return _collapse(out)

    ring = loop_ids(shape.exterior.coords)
    holes = [loop_ids(h.coords) for h in shape.interiors]
    if len(ring) < 3:
        return None
    holes = tuple(tuple(h) for h in holes if len(h) >= 3)
    used_new = set(ring) | {v for h in holes for v in h}
    others = set()
    for k, p in enumerate(proto.polygons):
        if k not in (i, j):
            others.update(p.vertex_ids())
    freed = sum(1 for v in old_ids if v not in used_new and v not in others)
    if created > freed:
        return None
    cls = pi.cls
    polys = [p for k, p in enumerate(proto.polygons) if k not in (i, j)]
    polys.append(Polygon3(plane, tuple(ring), cls, holes))
    cand = PrototypeSet(np.asarray(pool), polys)
    owners = cand.owners()
    touched = sorted(used_new)
    sub_owners = [owners[v] if v in used_new else [] for v in range(len(cand.pool))]
    new_pool, worst = project_vertices(cand.pool, cand.normals(), cand.offsets(), sub_owners, eps)
    if worst > eps:
        return None
    if np.max(np.linalg.norm(new_pool[touched] - cand.pool[touched], axis=1)) > cfg_tau:
        return None
    cand = PrototypeSet(new_pool, polys)
    if not cand.rings_simple():
        return None
    if len(points):
        before = loss_prox_value(proto.pool, proto.normals(), proto.offsets(), proto.loops(), points)
        after = loss_prox_value(cand.pool, cand.normals(), cand.offsets(), cand.loops(), points)
        if after > before * (1.0 + max_increase) + 1e-12:
            log.debug("polygon merge rejected: L_prox %.4f -> %.4f", before, after)
            return None
    return cand.compact()


def merge_polygons(
    proto: PrototypeSet,
    points: np.ndarray,
    tau: float,
    angle_deg: float = 20.0,
    max_increase: float = 0.10,
    eps: float = EPS_FIT,
) -> PrototypeSet:
    """Merge same-class polygons with similar normals that nearly touch."""
    cos_max = np.cos(np.radians(angle_deg))
    rejected: set[tuple] = set()
    while True:
        cands = []
        N = proto.normals()
        for i in range(len(proto)):
            for j in range(i + 1, len(proto)):
                if proto.polygons[i].cls != proto.polygons[j].cls or N[i] @ N[j] < cos_max:
                    continue
                key = (tuple(proto.polygons[i].ring), tuple(proto.polygons[j].ring))
                if key in rejected:
                    continue
                gap = _min_gap(proto, i, j)
                if gap < tau:
                    cands.append((gap, i, j, key))
        if not cands:
            return proto
        cands.sort(key=lambda c: (c[0], c[1], c[2]))
        merged = None
        for gap, i, j, key in cands:
            merged = _try_merge_pair(proto, i, j, points, tau, max_increase, eps)
            if merged is not None:
                break
            rejected.add(key)
        if merged is None:
            return proto
        proto = merged


def merge_and_simplify(
    proto: PrototypeSet,
    tau_merge: float,
    points: Optional[np.ndarray] = None,
    angle_deg: float = 20.0,
    max_increase: float = 0.10,
    eps: float = EPS_FIT,
) -> PrototypeSet:
    """Vertex merging, then ring simplification, then polygon merging."""
    points = np.zeros((0, 3)) if points is None else np.asarray(points, dtype=float)
    n_before = len(proto.pool)
    out = merge_close_vertices(proto, tau_merge, eps)
    out = simplify_rings(out, tau_merge)
    out = merge_polygons(out, points, tau_merge, angle_deg, max_increase, eps)
    out = out.compact()
    assert len(out.pool) <= n_before
    return out
