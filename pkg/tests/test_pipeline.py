# tests/test_pipeline.py
import json

from src import __version__
from src.utils.pipeline import add_step, build_provenance, get_steps


def test_add_step_records_op_and_params():
    steps = []

    add_step(steps, "crf", iterations=5, pairwise_weight=0.05)

    assert steps == [{"op": "crf", "iterations": 5, "pairwise_weight": 0.05}]


def test_add_step_leaves_out_unused_params():
    steps = []

    add_step(steps, "crf", kernel="exact", window=None)

    assert steps[0] == {"op": "crf", "kernel": "exact"}


def test_get_steps_returns_list():
    steps = [{"op": "unaries", "tau": 0.07}, {"op": "crf"}, {"op": "unaries", "tau": 0.1}]

    assert [s["tau"] for s in get_steps(steps, "unaries")] == [0.07, 0.1]
    # Missing op returns empty list
    assert get_steps(steps, "materialize") == []


def test_build_provenance_is_reproducible():
    steps = []
    add_step(steps, "render", views=42)

    first = build_provenance("abc123", 7, "render", steps)
    second = build_provenance("abc123", 7, "render", list(steps))

    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    assert first["tool"] == "scenekit"
    assert first["version"] == __version__
    assert first["seed"] == 7
    assert first["steps"] == [{"op": "render", "views": 42}]
    assert not {"threads", "timestamp", "created_at"} & set(first)
