import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from generators import rect3

from hl3d.metrics import (
    EvalReport,
    LayoutEntity,
    depth_delta,
    depth_delta_frames,
    entities_from_json,
    entity_distance,
    entity_distance_rect,
    evaluate,
    match_and_f1,
    match_pairs,
    vertex_count,
)
from hl3d.scene_io import SceneFormatError

DOOR = np.array([[0, 0, 0], [0.9, 0, 0], [0.9, 0, 2.1], [0, 0, 2.1]], dtype=float)
seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(0, 3), st.booleans())
def test_rect_distance_ignores_corner_order(seed, shift, flip):
    rng = np.random.default_rng(seed)
    x0, y0, z0 = rng.uniform(-3, 3, 3)
    a = rect3(x0, y0, x0 + rng.uniform(0.3, 2), y0 + rng.uniform(0.3, 2), z0, z0 + rng.uniform(-1, 1))
    b = np.roll(a, shift, axis=0)
    if flip:
        b = b[::-1]
    assert entity_distance_rect(LayoutEntity("door", a), LayoutEntity("door", b)) == 0.0


def test_rect_distance_is_worst_corner():
    moved = DOOR.copy()
    moved[2] += [0, 0.3, 0]
    assert entity_distance(LayoutEntity("door", DOOR), LayoutEntity("door", moved)) == pytest.approx(0.3)


def test_rect_distance_rejects_mixed_classes():
    with pytest.raises(ValueError):
        entity_distance_rect(LayoutEntity("door", DOOR), LayoutEntity("window", DOOR))


def test_walls_use_hausdorff():
    a = LayoutEntity("wall", DOOR)
    b = LayoutEntity("wall", DOOR + [0, 0.2, 0])
    assert entity_distance(a, b) == pytest.approx(0.2)


def test_entity_needs_three_corners():
    with pytest.raises(ValueError):
        LayoutEntity("wall", [[0, 0, 0], [1, 0, 0]])


def test_optimal_matching_beats_greedy():
    # greedy takes (0, 0) and strands both others
    d = np.array([[0.1, 0.2], [0.2, 9.0]])
    assert match_pairs(d, 0.5, "greedy") == [(0, 0)]
    assert match_pairs(d, 0.5, "optimal") == [(0, 1), (1, 0)]


def test_matching_respects_threshold():
    d = np.array([[0.6, 0.4]])
    assert match_pairs(d, 0.5) == [(0, 1)]
    assert match_pairs(d, 0.3) == []
    assert match_pairs(np.zeros((0, 3)), 0.5) == []
    with pytest.raises(ValueError):
        match_pairs(d, 0.5, "hungarian-ish")


@given(seeds)
def test_matching_is_one_to_one(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0, 1, (rng.integers(1, 6), rng.integers(1, 6)))
    for method in ("optimal", "greedy"):
        pairs = match_pairs(d, 0.5, method)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        assert all(d[i, j] <= 0.5 for i, j in pairs)
    assert len(match_pairs(d, 0.5, "optimal")) >= len(match_pairs(d, 0.5, "greedy"))


def test_f1_per_class_and_empty_sides():
    pred = [LayoutEntity("door", DOOR), LayoutEntity("window", DOOR + [0, 0, 0.5])]
    gt = [LayoutEntity("door", DOOR + [0.05, 0, 0]), LayoutEntity("wall", DOOR)]
    f1 = match_and_f1(pred, gt, 0.1)
    assert f1 == {"door": 1.0, "wall": 0.0, "window": 0.0}
    assert match_and_f1([], [], 0.1) == {}


def test_depth_delta_counts_jointly_valid_pixels():
    gt = np.array([[1.0, 2.0], [0.0, 3.0]])
    pred = np.array([[1.04, 2.2], [5.0, 0.0]])
    assert depth_delta(pred, gt, 5.0) == pytest.approx(50.0)
    assert depth_delta(pred, gt, 25.0) == pytest.approx(100.0)


def test_depth_delta_errors():
    with pytest.raises(ValueError, match="shapes"):
        depth_delta(np.ones((2, 2)), np.ones((3, 2)), 5.0)
    with pytest.raises(ValueError, match="valid"):
        depth_delta(np.zeros((2, 2)), np.ones((2, 2)), 5.0)


def test_depth_delta_frames_pools_pixels():
    a = (np.ones((1, 1)), np.ones((1, 1)))
    b = (np.ones((3, 1)), np.full((3, 1), 2.0))
    assert depth_delta_frames([a, b], 5.0) == pytest.approx(25.0)


def test_vertex_count_merges_shared_corners():
    floor = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    wall = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 2], [0, 0, 2]], dtype=float)
    assert vertex_count([floor, wall]) == 6
    assert vertex_count([floor, floor + 1e-9]) == 4
    assert vertex_count([]) == 0


def test_entities_from_json_formats():
    recs = [{"class": "Door", "corners": DOOR.tolist()}]
    assert entities_from_json(recs)[0].cls == "door"
    assert len(entities_from_json({"entities": recs})) == 1
    with pytest.raises(SceneFormatError):
        entities_from_json([{"class": "door"}])
    with pytest.raises(SceneFormatError):
        entities_from_json("nope")


def test_evaluate_self_is_perfect():
    ents = [LayoutEntity("door", DOOR), LayoutEntity("wall", DOOR + [0, 1, 0])]
    rep = evaluate(ents, ents, thresholds=(0.1, 0.5))
    assert rep.avg_f1 == {"door": 1.0, "wall": 1.0}
    assert rep.vertices == 8
    assert rep.delta == {}


def test_report_text_and_json():
    rep = EvalReport((0.1, 0.5), {"wall": {0.1: 0.5, 0.5: 1.0}}, {"wall": 0.75}, {5.0: 92.5, 10.0: None}, 12)
    data = json.loads(rep.to_json())
    assert data["f1"] == {"wall": {"0.1": 0.5, "0.5": 1.0}}
    assert data["delta"] == {"5": 92.5, "10": None}
    assert data["vertices"] == 12
    text = rep.to_text()
    assert "F1@0.1" in text and "Avg F1" in text
    assert "92.50" in text and "n/a" in text
    assert text.splitlines()[1].split() == ["wall", "0.500", "1.000", "0.750"]
