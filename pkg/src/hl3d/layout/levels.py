"""Building levels from floor polygon heights, and per-level 2D floorplans."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon

from ..geometry import polygon_area_3d, polygon_union_2d
from ..prototype.types import PrototypeSet
from ..semantics import SemanticClass

log = logging.getLogger(__name__)


@dataclass
class Level:
    id: int
    height: float
    floors: list[int] = field(default_factory=list)
    ceilings: list[int] = field(default_factory=list)
    top: float = np.inf  # height of the next level up


def _height_and_area(proto: PrototypeSet, k: int) -> tuple[float, float]:
    c = proto.coords(k)
    area = polygon_area_3d(c)
    for h in proto.hole_coords(k):
        area -= polygon_area_3d(h)
    return float(c[:, 2].mean()), max(area, 0.0)


def cluster_heights(heights: Sequence[float], weights: Sequence[float], h_merge: float) -> list[tuple[float, list[int]]]:
    """Single-linkage 1D clustering; returns (weighted mean, member indices) per cluster."""
    h = np.asarray(heights, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(h, kind="stable")
    clusters: list[list[int]] = []
    for i in order.tolist():
        if clusters and h[i] - h[clusters[-1][-1]] < h_merge:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    out = []
    for members in clusters:
        ww = w[members]
        mean = float(np.average(h[members], weights=ww)) if ww.sum() > 0 else float(h[members].mean())
        out.append((mean, members))
    return out


def detect_levels(proto: PrototypeSet, h_merge: float = 0.5, min_floor_area: float = 0.5) -> list[Level]:
    """Cluster floor polygons by height; attach ceilings between consecutive levels."""
    floors = proto.of_class(SemanticClass.FLOOR)
    if not floors:
        raise ValueError("no floor polygons; cannot detect levels")
    stats = {k: _height_and_area(proto, k) for k in floors}
    big = [k for k in floors if stats[k][1] >= min_floor_area] or floors
    clusters = cluster_heights([stats[k][0] for k in big], [stats[k][1] for k in big], h_merge)
    levels = [Level(i, mean, [big[j] for j in members]) for i, (mean, members) in enumerate(clusters)]
    for a, b in zip(levels, levels[1:]):
        a.top = b.height
    # small floors join the nearest level within h_merge
    for k in floors:
        if k in big:
            continue
        z = stats[k][0]
        near = min(levels, key=lambda l: abs(l.height - z))
        if abs(near.height - z) < h_merge:
            near.floors.append(k)
    for k in proto.of_class(SemanticClass.CEILING):
        z = float(proto.coords(k)[:, 2].mean())
        for lev in levels:
            if lev.height < z < lev.top:
                lev.ceilings.append(k)
                break
    for lev in levels:
        lev.floors.sort()
    return levels


def footprint_2d(proto: PrototypeSet, k: int) -> Polygon:
    p = proto.polygons[k]
    shape = Polygon(proto.pool[list(p.ring)][:, :2], [proto.pool[list(h)][:, :2] for h in p.holes])
    return shape if shape.is_valid else shape.buffer(0)


def build_floorplan(level: Level, proto: PrototypeSet) -> list[Polygon]:
    """Union of the level's floor footprints and its ceiling footprints."""
    parts = [footprint_2d(proto, k) for k in level.floors]
    parts += [footprint_2d(proto, k) for k in level.ceilings if abs(proto.polygons[k].plane.normal[2]) > 0.1]
    plan = [p for p in polygon_union_2d(parts) if p.area > 1e-6]
    if not plan:
        raise ValueError(f"level {level.id}: empty floorplan")
    return plan
