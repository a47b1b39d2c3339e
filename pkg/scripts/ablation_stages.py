"""Score each intermediate stage as a layout: the raw mesh and the skeleton
(both turned into polygons by merging triangles with normals within 20 deg),
the fitted prototype, and the final scene graph."""

import argparse
import time

from hl3d import synthetic
from hl3d.ablation import merge_triangles
from hl3d.config import PipelineConfig
from hl3d.layout.assemble import build_scene_graph
from hl3d.metrics import LayoutEntity, evaluate, graph_entities
from hl3d.prototype.fit import fit_prototype
from hl3d.skeleton import extract_skeleton

LAYOUT = ("wall", "floor", "ceiling")
SCENES = ("box_room", "two_rooms_with_door", "room_with_floor_hole")


def _entities(pairs):
    return [LayoutEntity(c, p) for c, p in pairs if c in LAYOUT]


def _proto_entities(proto):
    names = {1: "wall", 2: "floor", 3: "ceiling"}
    return [LayoutEntity(names[int(p.cls)], proto.coords(k)) for k, p in enumerate(proto.polygons) if int(p.cls) in names]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scene", choices=SCENES, default="box_room")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = PipelineConfig(seed=args.seed)
    scene = getattr(synthetic, args.scene)()
    mesh = scene.mesh()
    frames = scene.render_frames()
    gt = _entities(scene.gt_entities())

    t0 = time.perf_counter()
    bundle = extract_skeleton(mesh, frames, seed=args.seed)
    proto = fit_prototype(bundle, frames, cfg.fit, seed=args.seed)
    graph = build_scene_graph(proto, frames, bundle.stairs, cfg.graph)
    print(f"[{args.scene}] stages ran in {time.perf_counter() - t0:.1f} s\n")

    rows = {
        "mesh": _entities(merge_triangles(mesh)),
        "layout skeleton": _entities(merge_triangles(bundle.structural)),
        "layout prototype": _proto_entities(proto),
        "scene graph": [e for e in graph_entities(graph) if e.cls in LAYOUT],
    }
    print(f"{'stage':18s} {'F1@0.5':>7s} {'Avg F1':>7s} {'#Vertices':>10s}")
    for name, pred in rows.items():
        rep = evaluate(pred, gt)
        f05 = sum(rep.f1.get(c, {}).get(0.5, 0.0) for c in LAYOUT) / len(LAYOUT)
        avg = sum(rep.avg_f1.get(c, 0.0) for c in LAYOUT) / len(LAYOUT)
        print(f"{name:18s} {f05:7.3f} {avg:7.3f} {rep.vertices:10d}")


if __name__ == "__main__":
    main()
