"""Layout evaluation: entity distances, F1 over distance thresholds, depth agreement."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import polygon_hausdorff
from .layout.graph import SceneGraph
from .render import render_depth
from .scene_io import CameraFrame, SceneFormatError, scene_graph_from_dict, scene_graph_polygons

log = logging.getLogger(__name__)

RECT_CLASSES = frozenset({"door", "window", "opening", "stairs"})
LAYOUT_CLASSES = ("wall", "floor", "ceiling", "door", "window", "opening", "stairs")


@dataclass
class LayoutEntity:
    cls: str
    corners: np.ndarray

    def __post_init__(self):
        self.cls = str(self.cls).lower()
        self.corners = np.asarray(self.corners, dtype=float).reshape(-1, 3)
        if len(self.corners) < 3:
            raise ValueError(f"{self.cls} entity needs at least 3 corners")

    @property
    def is_rect(self) -> bool:
        return len(self.corners) == 4


def _ring_orders(n: int) -> list[list[int]]:
    fwd = [[(s + i) % n for i in range(n)] for s in range(n)]
    return fwd + [[(s - i) % n for i in range(n)] for s in range(n)]


RECT_ORDERS = np.array(_ring_orders(4))


def entity_distance_rect(a: LayoutEntity, b: LayoutEntity) -> float:
    """Largest corner distance under the best of the 8 ring-preserving correspondences."""
    if a.cls != b.cls:
        raise ValueError(f"class mismatch: {a.cls} vs {b.cls}")
    if not (a.is_rect and b.is_rect):
        raise ValueError("rectangle distance needs two 4-corner entities")
    d = np.linalg.norm(a.corners[None, :, :] - b.corners[RECT_ORDERS], axis=2)
    return float(d.max(axis=1).min())


def entity_distance_poly(a: LayoutEntity, b: LayoutEntity) -> float:
    if a.cls != b.cls:
        raise ValueError(f"class mismatch: {a.cls} vs {b.cls}")
    return polygon_hausdorff(a.corners, b.corners)


def entity_distance(a: LayoutEntity, b: LayoutEntity) -> float:
    if a.cls in RECT_CLASSES and a.is_rect and b.is_rect:
        return entity_distance_rect(a, b)
    return entity_distance_poly(a, b)


def distance_matrix(pred: Sequence[LayoutEntity], gt: Sequence[LayoutEntity]) -> np.ndarray:
    d = np.zeros((len(pred), len(gt)))
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            d[i, j] = entity_distance(p, g)
    return d


def match_pairs(dist: np.ndarray, tau: float, method: str = "optimal") -> list[tuple[int, int]]:
    """One-to-one matching over pairs with distance <= tau.

    ``optimal`` maximizes the number of pairs, then minimizes their total
    distance; ``greedy`` takes the closest remaining pair first.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.size == 0:
        return []
    ok = dist <= tau
    if method == "greedy":
        order = np.lexsort((np.indices(dist.shape)[1].ravel(), np.indices(dist.shape)[0].ravel(), dist.ravel()))
        used_r, used_c, out = set(), set(), []
        for flat in order:
            i, j = divmod(int(flat), dist.shape[1])
            if ok[i, j] and i not in used_r and j not in used_c:
                used_r.add(i)
                used_c.add(j)
                out.append((i, j))
        return sorted(out)
    if method != "optimal":
        raise ValueError(f"unknown matching method {method!r}")
    # a forbidden pair costs more than any full set of allowed pairs
    big = (min(dist.shape) + 1) * (max(tau, 0.0) + 1.0)
    cost = np.where(ok, dist, big)
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if ok[i, j]]


def f1_score(tp: int, n_pred: int, n_gt: int) -> float:
    if n_pred == 0 and n_gt == 0:
        return 1.0
    return 2.0 * tp / (n_pred + n_gt)


def group_by_class(entities: Sequence[LayoutEntity]) -> dict[str, list[LayoutEntity]]:
    out: dict[str, list[LayoutEntity]] = {}
    for e in entities:
        out.setdefault(e.cls, []).append(e)
    return out


def match_and_f1(
    pred: Sequence[LayoutEntity], gt: Sequence[LayoutEntity], tau: float, method: str = "optimal"
) -> dict[str, float]:
    """Per-class F1 at threshold ``tau`` over every class present on either side."""
    P, G = group_by_class(pred), group_by_class(gt)
    out = {}
    for cls in sorted(set(P) | set(G)):
        p, g = P.get(cls, []), G.get(cls, [])
        tp = len(match_pairs(distance_matrix(p, g), tau, method)) if p and g else 0
        out[cls] = f1_score(tp, len(p), len(g))
    return out


def depth_delta(pred_depth, gt_depth, tau_cm: float) -> float:
    """Percentage of pixels valid in both maps whose depths agree within tau_cm."""
    pred = np.asarray(pred_depth, dtype=float)
    gt = np.asarray(gt_depth, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"depth shapes differ: {pred.shape} vs {gt.shape}")
    valid = (pred > 0) & (gt > 0) & np.isfinite(pred) & np.isfinite(gt)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no pixel is valid in both depth maps")
    good = np.abs(pred[valid] - gt[valid]) <= tau_cm / 100.0
    return 100.0 * float(good.sum()) / n


def depth_delta_frames(pairs: Sequence[tuple[np.ndarray, np.ndarray]], tau_cm: float) -> float:
    """Pooled over all pixels of several frames."""
    preds = np.concatenate([np.ravel(p) for p, _ in pairs]) if pairs else np.zeros(0)
    gts = np.concatenate([np.ravel(g) for _, g in pairs]) if pairs else np.zeros(0)
    return depth_delta(preds, gts, tau_cm)


def vertex_count(polygons: Sequence[np.ndarray], decimals: int = 6) -> int:
    """Distinct vertex positions over all layout polygons."""
    pts = [np.round(np.asarray(p, dtype=float).reshape(-1, 3), decimals) for p in polygons]
    if not pts:
        return 0
    return int(len(np.unique(np.vstack(pts) + 0.0, axis=0)))


# --- entity ingestion -------------------------------------------------------------


def graph_entities(graph: SceneGraph) -> list[LayoutEntity]:
    return [LayoutEntity(c, p) for c, p in scene_graph_polygons(graph)]


def entities_from_json(data) -> list[LayoutEntity]:
    """Scene-graph JSON or a flat list of {class, corners} records."""
    if isinstance(data, dict) and "rooms" in data:
        return graph_entities(scene_graph_from_dict(data))
    if isinstance(data, dict) and "entities" in data:
        data = data["entities"]
    if not isinstance(data, list):
        raise SceneFormatError("ground truth must be a scene graph or a list of {class, corners}")
    out = []
    for i, rec in enumerate(data):
        try:
            out.append(LayoutEntity(rec["class"], rec["corners"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneFormatError(f"ground-truth entity {i}: {exc}") from exc
    return out


def load_entities(path) -> list[LayoutEntity]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: {exc}") from exc
    return entities_from_json(data)


# --- report ---------------------------------------------------------------------


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    f1: dict[str, dict[float, float]]
    avg_f1: dict[str, float]
    delta: dict[float, Optional[float]] = field(default_factory=dict)
    vertices: int = 0

    def to_dict(self) -> dict:
        r = lambda x: None if x is None else round(float(x), 6)  # noqa: E731
        return {
            "thresholds_m": [r(t) for t in self.thresholds],
            "f1": {c: {f"{t:g}": r(v) for t, v in sorted(row.items())} for c, row in sorted(self.f1.items())},
            "avg_f1": {c: r(v) for c, v in sorted(self.avg_f1.items())},
            "delta": {f"{t:g}": r(v) for t, v in sorted(self.delta.items())},
            "vertices": int(self.vertices),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_text(self) -> str:
        head = ["class"] + [f"F1@{t:g}" for t in self.thresholds] + ["Avg F1"]
        rows = [head]
        for c in sorted(self.f1):
            rows.append([c] + [f"{self.f1[c][t]:.3f}" for t in self.thresholds] + [f"{self.avg_f1[c]:.3f}"])
        widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
        lines = ["  ".join(x.ljust(w) for x, w in zip(row, widths)).rstrip() for row in rows]
        tail = [f"Delta{t:g}" for t in sorted(self.delta)] + ["#Vertices"]
        vals = ["n/a" if v is None else f"{v:.2f}" for _, v in sorted(self.delta.items())] + [str(self.vertices)]
        widths = [max(len(a), len(b)) for a, b in zip(tail, vals)]
        lines.append("")
        lines.append("  ".join(a.ljust(w) for a, w in zip(tail, widths)).rstrip())
        lines.append("  ".join(b.ljust(w) for b, w in zip(vals, widths)).rstrip())
        return "\n".join(lines) + "\n"


def evaluate(
    pred: Sequence[LayoutEntity],
    gt: Sequence[LayoutEntity],
    frames: Sequence[CameraFrame] = (),
    thresholds: Sequence[float] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0),
    depth_thresholds_cm: Sequence[float] = (5.0, 10.0),
    method: str = "optimal",
    map_fn=map,
) -> EvalReport:
    thresholds = tuple(float(t) for t in thresholds)
    P, G = group_by_class(pred), group_by_class(gt)
    f1: dict[str, dict[float, float]] = {}
    for cls in sorted(set(P) | set(G)):
        p, g = P.get(cls, []), G.get(cls, [])
        dist = distance_matrix(p, g)
        f1[cls] = {}
        for t in thresholds:
            tp = len(match_pairs(dist, t, method)) if p and g else 0
            f1[cls][t] = f1_score(tp, len(p), len(g))
    avg = {c: float(np.mean([row[t] for t in thresholds])) for c, row in f1.items()}
    delta: dict[float, Optional[float]] = {}
    if frames:
        pred_polys = [e.corners for e in pred]
        gt_polys = [e.corners for e in gt]
        pairs = list(map_fn(lambda f: (render_depth(pred_polys, f), render_depth(gt_polys, f)), frames))
        for t in depth_thresholds_cm:
            try:
                delta[float(t)] = depth_delta_frames(pairs, t)
            except ValueError:
                log.warning("no pixel valid in both rendered depth maps; Delta%g undefined", t)
                delta[float(t)] = None
    return EvalReport(thresholds, f1, avg, delta, vertex_count([e.corners for e in pred]))
