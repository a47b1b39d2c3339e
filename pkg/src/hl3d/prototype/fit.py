"""The full prototype stage: initialization, optimization, hole closing."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from ..config import FitConfig
from ..scene_io import CameraFrame, ObservationSegments, build_observation_segments
from ..skeleton import SkeletonBundle
from .holes import close_floor_holes, close_wall_holes
from .init import init_polygons
from .optimize import FitTrace, optimize
from .types import PrototypeSet

log = logging.getLogger(__name__)


def skeleton_samples(bundle: SkeletonBundle, n: int, seed: int = 0) -> np.ndarray:
    verts = bundle.structural.vertices
    if n <= 0 or len(verts) <= n:
        return verts.copy()
    rng = np.random.default_rng(seed)
    return verts[np.sort(rng.choice(len(verts), n, replace=False))]


def fit_prototype(
    bundle: SkeletonBundle,
    frames: Sequence[CameraFrame],
    cfg: FitConfig = FitConfig(),
    seed: int = 0,
    trace: Optional[FitTrace] = None,
    segments: Optional[ObservationSegments] = None,
) -> PrototypeSet:
    if bundle.structural.n_vertices == 0:
        raise ValueError("structural skeleton is empty")
    if segments is None:
        with_depth = [f for f in frames if f.depth is not None]
        segments = build_observation_segments(with_depth, cfg.segment_stride) if with_depth else ObservationSegments.empty()
    proto = init_polygons(
        bundle.structural,
        bundle.structural_superpoints,
        alpha=cfg.alpha,
        tol=cfg.tau_merge,
        ransac_iters=cfg.ransac_iters,
        seed=seed,
    )
    log.info("initialized %d polygons (%d vertices)", len(proto), len(proto.pool))
    points = skeleton_samples(bundle, cfg.prox_samples, seed)
    proto = optimize(proto, points, segments, cfg, trace)
    log.info("optimized: %d polygons, %d vertices", len(proto), proto.n_vertices())
    proto = close_floor_holes(proto, bundle.objects)
    proto = close_wall_holes(proto, segments, cfg.tau_extend, cfg.free_margin, cfg.eps_fit)
    return proto
