import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecgx.errors import EmptyInput, EmptyScores, LengthMismatch
from ecgx.metrics import (
    EvalReport,
    IdentificationReport,
    aggregate_runs,
    compute_accuracy,
    compute_eer,
    format_roc,
    roc_points,
)

from oracles import eer_swapped, eer_sweep


def test_eer_examples():
    assert compute_eer([0.9, 0.8], [0.1, 0.2])[0] == 0.0
    assert compute_eer([0.5], [0.5])[0] == 0.5
    eer, threshold = compute_eer([0.9, 0.8, 0.3], [0.7, 0.2, 0.1])
    assert eer == pytest.approx(1 / 3, abs=1e-15)
    assert threshold == 0.7


@pytest.mark.parametrize("g,i", [([], [0.1]), ([0.1], [])])
def test_eer_empty(g, i):
    with pytest.raises(EmptyScores):
        compute_eer(g, i)


def _assert_matches_sweep(g, i):
    far, frr, t = eer_sweep(g, i)
    eer, threshold = compute_eer(g, i)
    assert threshold == t
    assert eer == (float(far) + float(frr)) / 2


def test_eer_matches_sweep_on_random_sets():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        g = rng.random(rng.integers(1, 51))
        i = rng.random(rng.integers(1, 51))
        if rng.random() < 0.5:
            g, i = np.round(g, 1), np.round(i, 1)  # plenty of ties
        _assert_matches_sweep(g.tolist(), i.tolist())


scores = st.lists(st.integers(0, 20), min_size=1, max_size=50)


@given(scores, scores)
def test_eer_matches_sweep_property(g, i):
    _assert_matches_sweep(g, i)


@given(scores, scores)
def test_eer_invariant_under_increasing_transform(g, i):
    base = compute_eer(g, i)[0]
    for f in (lambda s: 3 * s + 7, lambda s: s**3, lambda s: np.exp(s / 4)):
        assert compute_eer(f(np.array(g, float)), f(np.array(i, float)))[0] == base


@given(scores, scores)
def test_eer_label_swap(g, i):
    assert compute_eer(g, i)[0] == pytest.approx(float(eer_swapped(g, i)), abs=1e-15)


def test_eer_can_exceed_half_for_inverted_scores():
    # a scorer that ranks impostors above genuine pairs sits past the crossing
    assert compute_eer([0.1, 0.2], [0.8, 0.9])[0] == 1.0


def test_roc_points():
    pts = roc_points([0.9, 0.8, 0.3], [0.7, 0.2, 0.1])
    assert pts.shape == (6, 3)
    assert np.all(np.diff(pts[:, 0]) > 0)
    assert np.all(np.diff(pts[:, 1]) <= 0) and np.all(np.diff(pts[:, 2]) >= 0)
    np.testing.assert_allclose(pts[0], [0.1, 1.0, 0.0])
    text = format_roc(pts)
    assert text.splitlines()[0] == "threshold,far,frr"
    assert len(text.splitlines()) == 7


def test_accuracy_examples():
    assert compute_accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert compute_accuracy([1, 2, 3], [3, 1, 2]) == 0.0
    assert compute_accuracy([1] * 96 + [0] * 4, [1] * 100) == 0.96
    with pytest.raises(LengthMismatch):
        compute_accuracy([1, 2], [1])
    with pytest.raises(LengthMismatch):
        compute_accuracy([], [])


def test_aggregate_examples():
    mean, std = aggregate_runs([0.02] * 10)
    assert mean == pytest.approx(0.02) and std == pytest.approx(0.0, abs=1e-17)
    mean, std = aggregate_runs([0.01, 0.03])
    assert mean == pytest.approx(0.02) and std == pytest.approx(0.0141421356, abs=1e-9)
    assert aggregate_runs([0.05]) == (0.05, 0.0)
    with pytest.raises(EmptyInput):
        aggregate_runs([])


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_aggregate_matches_numpy(values):
    mean, std = aggregate_runs(values)
    assert mean == pytest.approx(np.mean(values))
    assert std == pytest.approx(np.std(values, ddof=1), abs=1e-12)


def test_reports_round_trip(tmp_path):
    report = EvalReport.from_runs("multi-session", [(0.1, 0.5), (0.2, 0.6)], 113, 565, {"seed": 0})
    assert report.mean_eer == pytest.approx(0.15) and report.runs == 2
    path = tmp_path / "r.json"
    report.save(path)
    assert EvalReport.load(path) == report
    assert list(json.loads(path.read_text())) == [
        "scenario", "runs", "genuine_count", "impostor_count", "per_run_eer",
        "eer_threshold", "mean_eer", "std_eer", "config",
    ]
    ident = IdentificationReport.from_runs("ident-multi", [0.9], 113, 1000)
    ident.save(path)
    assert IdentificationReport.load(path) == ident
