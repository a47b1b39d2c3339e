import time
from dataclasses import dataclass, field

import hypothesis
import numpy as np
import pytest

from hl3d import synthetic
from hl3d.config import PipelineConfig
from hl3d.layout.assemble import build_scene_graph
from hl3d.prototype.fit import fit_prototype
from hl3d.prototype.optimize import FitTrace
from hl3d.skeleton import extract_skeleton

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")

np.seterr(all="warn")

# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(n: int, title: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE[n] = (title, bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")


@dataclass
class SceneRun:
    scene: synthetic.SyntheticScene
    frames: list
    bundle: object
    proto: object
    graph: object
    trace: FitTrace
    seconds: float
    stage_seconds: dict = field(default_factory=dict)


_RUNS: dict[str, SceneRun] = {}


def run_scene(name: str, seed: int = 0) -> SceneRun:
    """Synthesize a scene and run skeleton, fit and graph in memory (cached per session)."""
    if name in _RUNS:
        return _RUNS[name]
    cfg = PipelineConfig(seed=seed)
    scene = getattr(synthetic, name)()
    mesh = scene.mesh()
    frames = scene.render_frames()
    trace = FitTrace()
    t0 = time.perf_counter()
    bundle = extract_skeleton(mesh, frames, seed=seed)
    t1 = time.perf_counter()
    proto = fit_prototype(bundle, frames, cfg.fit, seed=seed, trace=trace)
    t2 = time.perf_counter()
    graph = build_scene_graph(proto, frames, bundle.stairs, cfg.graph)
    t3 = time.perf_counter()
    run = SceneRun(scene, frames, bundle, proto, graph, trace, t3 - t0, {"skeleton": t1 - t0, "fit": t2 - t1, "graph": t3 - t2})
    _RUNS[name] = run
    return run


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_square():
    return np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
