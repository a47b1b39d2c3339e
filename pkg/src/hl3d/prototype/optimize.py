"""Projected gradient descent over vertex positions and plane parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import FitConfig
from ..geometry import plane_basis, ring_is_simple
from ..scene_io import ObservationSegments
from .losses import LossInputs, build_geoms, loss_connect, loss_empty, loss_prox_value, loss_simple, total_loss
from .merge import merge_and_simplify
from .types import PrototypeSet, project_vertices

log = logging.getLogger(__name__)


@dataclass
class FitTrace:
    """Loss bookkeeping: one entry per accepted step, plus merge checkpoints."""

    steps: list[tuple[int, float, float]] = field(default_factory=list)
    merges: list[tuple[int, float, float]] = field(default_factory=list)
    terms: list[dict] = field(default_factory=list)
    max_residual: float = 0.0
    stopped_at: int = 0

    def accepted_nonincreasing(self) -> bool:
        return all(after <= before for _, before, after in self.steps)


def loss_inputs(points: np.ndarray, segments: Optional[ObservationSegments], cfg: FitConfig) -> LossInputs:
    seg_a = segments.origins if segments is not None else np.zeros((0, 3))
    seg_b = segments.endpoints if segments is not None else np.zeros((0, 3))
    return LossInputs(
        np.asarray(points, dtype=float).reshape(-1, 3), seg_a, seg_b,
        cfg.tau_inter, cfg.tau_connect, cfg.free_margin,
        cfg.w_prox, cfg.w_empty, cfg.w_connect, cfg.w_simple,
    )


def total_value(pool, normals, offsets, loops, data: LossInputs) -> float:
    geoms = build_geoms(pool, normals, offsets, loops) if len(loops) else []
    v = data.w_prox * loss_prox_value(pool, normals, offsets, loops, data.points, geoms)
    v += data.w_empty * loss_empty(pool, normals, offsets, loops, data.seg_a, data.seg_b, data.tau_inter, data.margin, geoms).value
    v += data.w_connect * loss_connect(pool, normals, offsets, loops, data.tau_connect, geoms).value
    v += data.w_simple * loss_simple(pool, normals, offsets, loops).value
    return float(v)


def locked_planes(proto: PrototypeSet, owners: list[list[int]]) -> np.ndarray:
    """Planes that must stay fixed: they own a vertex whose owning planes are
    over-determined (more owners than independent normals)."""
    N = proto.normals()
    locked = np.zeros(len(proto), dtype=bool)
    for own in owners:
        if len(own) < 2:
            continue
        s = np.linalg.svd(N[own], compute_uv=False)
        rank = int(np.sum(s > 1e-3 * s[0]))
        if len(own) > rank:
            locked[own] = True
    return locked


def _rings_simple(pool: np.ndarray, normals: np.ndarray, loops) -> bool:
    for n, lps in zip(normals, loops):
        u, v = plane_basis(n)
        for l in lps:
            x = pool[l]
            if not ring_is_simple(np.stack([x @ u, x @ v], axis=1)):
                return False
    return True


def _direction(proto: PrototypeSet, res, locked: np.ndarray, step: float):
    """Block-scaled descent direction: every block moves geometry by at most ``step``."""
    pool = proto.pool
    N = proto.normals()
    loops = proto.loops()
    gv = res.g_pool
    vmax = np.max(np.linalg.norm(gv, axis=1)) if len(gv) else 0.0
    dv = -gv * (step / vmax) if vmax > 0 else np.zeros_like(gv)
    cents = np.array([pool[np.concatenate(l)].mean(axis=0) for l in loops]).reshape(-1, 3)
    radius = np.array([np.max(np.linalg.norm(pool[np.concatenate(l)] - c, axis=1)) for l, c in zip(loops, cents)])
    # derivative w.r.t. the normal with the plane pivoting about the centroid
    gn = res.g_normals + res.g_offsets[:, None] * cents
    gt = gn - np.sum(gn * N, axis=1, keepdims=True) * N
    gt[locked] = 0.0
    rot = np.linalg.norm(gt, axis=1) * np.maximum(radius, 1e-9)
    dn = -gt * (step / rot.max()) if rot.max() > 0 else np.zeros_like(gt)
    gs = res.g_offsets.copy()
    gs[locked] = 0.0
    smax = np.max(np.abs(gs)) if len(gs) else 0.0
    ds = -gs * (step / smax) if smax > 0 else np.zeros_like(gs)
    return dv, dn, ds, cents


def optimize(
    proto: PrototypeSet,
    points: np.ndarray,
    segments: Optional[ObservationSegments],
    cfg: FitConfig,
    trace: Optional[FitTrace] = None,
) -> PrototypeSet:
    """Minimize the total fitting loss with periodic merging."""
    trace = trace if trace is not None else FitTrace()
    data = loss_inputs(points, segments, cfg)
    if len(proto) == 0:
        return proto
    it = 0
    stalled = False
    while it <= cfg.n_iters:
        if it % cfg.merge_period == 0:
            before = total_value(proto.pool, proto.normals(), proto.offsets(), proto.loops(), data)
            merged = merge_and_simplify(proto, cfg.tau_merge, data.points, cfg.merge_angle_deg, cfg.merge_max_prox_increase, cfg.eps_fit)
            changed = len(merged.pool) != len(proto.pool) or len(merged) != len(proto) or not np.array_equal(merged.pool, proto.pool)
            proto = merged
            after = total_value(proto.pool, proto.normals(), proto.offsets(), proto.loops(), data)
            trace.merges.append((it, before, after))
            if stalled and not changed:
                break
            stalled = False
        if it == cfg.n_iters:
            break
        owners = proto.owners()
        loops = proto.loops()
        res, terms = total_loss(proto.pool, proto.normals(), proto.offsets(), loops, data)
        if not np.isfinite(res.value):
            raise FloatingPointError(f"non-finite loss at iteration {it}: {terms}")
        locked = locked_planes(proto, owners)
        dv, dn, ds, cents = _direction(proto, res, locked, cfg.step_size)
        N0, D0 = proto.normals(), proto.offsets()
        s0 = D0 - np.sum(N0 * cents, axis=1)
        accepted = False
        for j in range(cfg.max_backtracks):
            eta = 0.5**j
            N1 = N0 + eta * dn
            N1 /= np.linalg.norm(N1, axis=1, keepdims=True)
            D1 = np.sum(N1 * cents, axis=1) + s0 + eta * ds
            pool1, worst = project_vertices(proto.pool + eta * dv, N1, D1, owners, cfg.eps_fit)
            if worst > cfg.eps_fit or not _rings_simple(pool1, N1, loops):
                continue
            value = total_value(pool1, N1, D1, loops, data)
            if value <= res.value:
                trace.steps.append((it, res.value, value))
                trace.terms.append(terms)
                improved = value < res.value - 1e-12 * max(1.0, abs(res.value))
                proto = PrototypeSet(pool1, proto.with_planes(N1, D1).polygons)
                accepted = improved
                break
        if not accepted:
            # no useful step: jump to the next merge checkpoint (or stop)
            stalled = True
            it = (it // cfg.merge_period + 1) * cfg.merge_period
            it = min(it, cfg.n_iters)
            if it == cfg.n_iters:
                break
            continue
        it += 1
    trace.stopped_at = it
    trace.max_residual = proto.plane_residual()
    return proto
