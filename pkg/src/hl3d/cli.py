"""Command line entry point: ``hl3d <stage> ...``.

Exit status: 0 on success, 2 for missing or malformed inputs, 3 when a
stage detects an invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .config import ConfigError, load_config, with_overrides
from .pipeline import STAGES, run_eval, run_fit, run_graph, run_pipeline, run_render_depth, run_skeleton, worker_map
from .scene_io import SceneFormatError

log = logging.getLogger("hl3d")

EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    common.add_argument("--seed", type=int, help="random seed")

    p = argparse.ArgumentParser(prog="hl3d", description="Building layout estimation from a labeled mesh.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("skeleton", "split the labeled mesh into skeleton parts"),
        ("fit", "fit the planar layout prototype"),
        ("graph", "build the scene graph and layout mesh"),
        ("render-depth", "render depth maps of the predicted layout"),
    ):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("scene_dir")
        s.add_argument("out_dir")
    s = sub.add_parser("eval", parents=[common], help="score a scene graph against ground truth")
    s.add_argument("out_dir")
    s.add_argument("--gt", required=True, help="ground truth: scene-graph JSON or [{class, corners}]")
    s.add_argument("--scene", dest="scene_dir", help="scene directory (enables depth metrics)")
    s = sub.add_parser("pipeline", parents=[common], help="run all stages")
    s.add_argument("scene_dir")
    s.add_argument("out_dir")
    s.add_argument("--stage", choices=STAGES, help="stop after this stage")
    s.add_argument("--gt", help="ground truth (default: <scene_dir>/gt.json when present)")
    return p


def _setup_logging() -> None:
    level = os.environ.get("HL3D_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = with_overrides(load_config(args.config), seed=args.seed, threads=args.threads)
        if args.command == "skeleton":
            run_skeleton(args.scene_dir, args.out_dir, cfg)
        elif args.command == "fit":
            run_fit(args.scene_dir, args.out_dir, cfg)
        elif args.command == "graph":
            with worker_map(cfg.threads) as m:
                run_graph(args.scene_dir, args.out_dir, cfg, m)
        elif args.command == "eval":
            with worker_map(cfg.threads) as m:
                report = run_eval(args.out_dir, args.gt, cfg, args.scene_dir, m)
            sys.stdout.write(report.to_text())
        elif args.command == "render-depth":
            with worker_map(cfg.threads) as m:
                run_render_depth(args.scene_dir, args.out_dir, m)
        elif args.command == "pipeline":
            run_pipeline(args.scene_dir, args.out_dir, cfg, args.gt, args.stage)
    except (FileNotFoundError, SceneFormatError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (ValueError, FloatingPointError) as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())
