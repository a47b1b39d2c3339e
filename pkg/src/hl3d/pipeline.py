"""Stage runners. Each stage reads only the artifacts of the stages before it."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .config import PipelineConfig
from .layout.assemble import build_scene_graph
from .metrics import EvalReport, evaluate, graph_entities, load_entities
from .prototype.fit import fit_prototype
from .prototype.types import read_prototype, write_prototype
from .render import render_depth
from .scene_io import (
    load_frames,
    load_labeled_mesh,
    read_scene_graph,
    read_vertex_property,
    scene_graph_polygons,
    write_depth_png,
    write_labeled_mesh,
    write_layout_obj,
    write_scene_graph,
)
from .skeleton import SkeletonBundle, extract_skeleton

log = logging.getLogger(__name__)

STAGES = ("skeleton", "fit", "graph", "eval")
SKELETON_PARTS = ("structural", "objects", "stairs", "inaccurate")


@contextmanager
def worker_map(threads: int) -> Iterator[Callable]:
    """Order-preserving map over a thread pool (plain ``map`` for one thread)."""
    n = threads if threads > 0 else (os.cpu_count() or 1)
    if n == 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        yield lambda fn, items: list(pool.map(fn, items))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def run_skeleton(scene_dir, out_dir, cfg: PipelineConfig) -> SkeletonBundle:
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    mesh = load_labeled_mesh(_require(scene_dir / "mesh.ply", "input mesh"))
    _require(scene_dir / "cameras.json", "camera file")
    frames = load_frames(scene_dir)
    sk = cfg.skeleton
    bundle = extract_skeleton(
        mesh,
        frames,
        pixels_per_frame=sk.pixels_per_frame,
        angle_deg=sk.angle_deg,
        max_offset=sk.max_offset,
        min_vertices=sk.min_vertices,
        seed=cfg.seed,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in bundle.parts().items():
        extra = {"superpoint": bundle.structural_superpoints} if name == "structural" else None
        write_labeled_mesh(part, out_dir / f"{name}.ply", extra)
    log.info("skeleton: %d structural vertices", bundle.structural.n_vertices)
    return bundle


def load_skeleton(out_dir) -> SkeletonBundle:
    out_dir = Path(out_dir)
    parts = {n: load_labeled_mesh(_require(out_dir / f"{n}.ply", "skeleton dump"), clean=False) for n in SKELETON_PARTS}
    sp = read_vertex_property(out_dir / "structural.ply", "superpoint").astype(np.int64)
    return SkeletonBundle(parts["structural"], parts["objects"], parts["stairs"], parts["inaccurate"], sp)


def run_fit(scene_dir, out_dir, cfg: PipelineConfig):
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    bundle = load_skeleton(out_dir)
    _require(scene_dir / "cameras.json", "camera file")
    frames = load_frames(scene_dir, with_labels=False)
    proto = fit_prototype(bundle, frames, cfg.fit, seed=cfg.seed)
    write_prototype(proto, out_dir / "prototype.json")
    return proto


def run_graph(scene_dir, out_dir, cfg: PipelineConfig, map_fn: Callable = map):
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    proto = read_prototype(_require(out_dir / "prototype.json", "prototype"))
    stairs = load_labeled_mesh(_require(out_dir / "stairs.ply", "skeleton dump"), clean=False)
    _require(scene_dir / "cameras.json", "camera file")
    frames = load_frames(scene_dir, with_depth=False)
    graph = build_scene_graph(proto, frames, stairs, cfg.graph, map_fn)
    write_scene_graph(graph, out_dir / "scene_graph.json")
    write_layout_obj(scene_graph_polygons(graph), out_dir / "layout.obj")
    return graph


def run_eval(out_dir, gt_path, cfg: PipelineConfig, scene_dir=None, map_fn: Callable = map) -> EvalReport:
    out_dir = Path(out_dir)
    graph = read_scene_graph(_require(out_dir / "scene_graph.json", "scene graph"))
    gt = load_entities(_require(Path(gt_path), "ground truth"))
    pred = graph_entities(graph)
    log.info("evaluating %d predicted against %d ground-truth entities", len(pred), len(gt))
    frames = []
    if scene_dir is not None and (Path(scene_dir) / "cameras.json").exists():
        frames = load_frames(scene_dir, with_depth=False, with_labels=False)
    ev = cfg.eval
    report = evaluate(pred, gt, frames, ev.f1_thresholds, ev.depth_thresholds_cm, ev.matching, map_fn)
    (out_dir / "eval_report.json").write_text(report.to_json())
    (out_dir / "eval_report.txt").write_text(report.to_text())
    return report


def run_render_depth(scene_dir, out_dir, map_fn: Callable = map) -> list[Path]:
    """Depth PNG of the predicted layout for every input camera."""
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    graph = read_scene_graph(_require(out_dir / "scene_graph.json", "scene graph"))
    _require(scene_dir / "cameras.json", "camera file")
    frames = load_frames(scene_dir, with_depth=False, with_labels=False)
    polys = [p for _, p in scene_graph_polygons(graph)]
    target = out_dir / "render_depth"
    target.mkdir(parents=True, exist_ok=True)
    paths = []
    for f, depth in zip(frames, map_fn(lambda f: render_depth(polys, f), frames)):
        p = target / f"{f.id}.png"
        write_depth_png(depth, p)
        paths.append(p)
    return paths


def run_pipeline(scene_dir, out_dir, cfg: PipelineConfig, gt_path=None, stage: Optional[str] = None) -> None:
    """Run all stages up to and including ``stage`` (default: everything)."""
    last = STAGES.index(stage) if stage else len(STAGES) - 1
    if gt_path is None and (Path(scene_dir) / "gt.json").exists():
        gt_path = Path(scene_dir) / "gt.json"
    with worker_map(cfg.threads) as map_fn:
        run_skeleton(scene_dir, out_dir, cfg)
        if last >= 1:
            run_fit(scene_dir, out_dir, cfg)
        if last >= 2:
            run_graph(scene_dir, out_dir, cfg, map_fn)
        if last >= 3:
            if gt_path is None:
                log.info("no ground truth given; skipping evaluation")
            else:
                run_eval(out_dir, gt_path, cfg, scene_dir, map_fn)

