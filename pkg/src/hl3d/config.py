"""Dataclass configuration for every pipeline stage, loadable from TOML.

A config file has one table per stage::

    seed = 0
    [skeleton]
    pixels_per_frame = 5000
    [fit]
    tau_merge = 0.10

Unknown tables or keys raise ``ConfigError``.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonConfig:
    angle_deg: float = 20.0
    max_offset: float = 0.05
    min_vertices: int = 10
    pixels_per_frame: int = 5000


@dataclass(frozen=True)
class FitConfig:
    tau_inter: float = 0.5
    tau_merge: float = 0.10
    tau_extend: float = 0.002  # crossings per cm^2
    tau_connect: float = 0.3
    step_size: float = 0.02
    n_iters: int = 300
    merge_period: int = 50
    w_prox: float = 1.0
    w_empty: float = 1.0
    w_connect: float = 1.0
    w_simple: float = 1.0
    segment_stride: int = 8
    alpha: float = 0.15
    ransac_iters: int = 200
    merge_angle_deg: float = 20.0
    merge_max_prox_increase: float = 0.10
    prox_samples: int = 12000
    free_margin: float = 0.05
    max_backtracks: int = 12
    eps_fit: float = 1e-4

    def __post_init__(self):
        for name in ("tau_inter", "tau_merge", "tau_extend", "tau_connect", "step_size", "alpha"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"fit.{name} must be > 0")
        if self.n_iters < 0 or self.merge_period < 1:
            raise ConfigError("fit.n_iters must be >= 0 and fit.merge_period >= 1")


@dataclass(frozen=True)
class GraphConfig:
    h_merge: float = 0.5
    cell_size: float = 0.05
    wall_thickness: float = 0.10
    seed_clearance: float = 0.5
    min_opening_width: float = 0.25
    door_max_width: float = 1.5
    door_height: float = 2.1
    max_ceilings: int = 30
    default_ceiling_height: float = 2.5
    min_floor_area: float = 0.5
    window_min_points: int = 10
    window_min_size: float = 0.30
    window_lof_neighbors: int = 20
    window_lof_threshold: float = 1.5
    window_eps: float = 0.2
    window_min_samples: int = 5
    window_pixel_stride: int = 1
    stairs_min_vertices: int = 50


@dataclass(frozen=True)
class EvalConfig:
    f1_thresholds: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0)
    depth_thresholds_cm: tuple[float, ...] = (5.0, 10.0)
    matching: str = "optimal"

    def __post_init__(self):
        if self.matching not in ("optimal", "greedy"):
            raise ConfigError("eval.matching must be 'optimal' or 'greedy'")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    threads: int = 0  # 0 = machine parallelism
    skeleton: SkeletonConfig = field(default_factory=SkeletonConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"skeleton": SkeletonConfig, "fit": FitConfig, "graph": GraphConfig, "eval": EvalConfig}


def _coerce(cls, name: str, raw: dict) -> Any:
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            value = tuple(float(v) for v in value)
        elif isinstance(default, bool):
            value = bool(value)
        elif isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"[{name}] {key} must be an integer")
            value = int(value)
        elif isinstance(default, float):
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> PipelineConfig:
    top = {"seed", "threads", *_SECTIONS}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    for key in ("seed", "threads"):
        if key in data:
            kwargs[key] = int(data[key])
    for name, cls in _SECTIONS.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _coerce(cls, name, data[name])
    return PipelineConfig(**kwargs)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def with_overrides(cfg: PipelineConfig, seed=None, threads=None) -> PipelineConfig:
    kw = {}
    if seed is not None:
        kw["seed"] = int(seed)
    if threads is not None:
        kw["threads"] = int(threads)
    return replace(cfg, **kw) if kw else cfg
