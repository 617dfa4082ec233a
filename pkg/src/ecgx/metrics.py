"""Equal error rate, ROC points, identification accuracy and run aggregation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import EmptyInput, EmptyScores, LengthMismatch


def _scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyScores(f"{name} scores are empty")
    return arr


def _error_counts(genuine: np.ndarray, impostor: np.ndarray):
    """Distinct thresholds with rejected-genuine and accepted-impostor counts (accept if score >= t)."""
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    rejected = np.searchsorted(np.sort(genuine), thresholds, side="left")
    accepted = impostor.size - np.searchsorted(np.sort(impostor), thresholds, side="left")
    return thresholds, rejected, accepted


def compute_eer(genuine_scores, impostor_scores) -> Tuple[float, float]:
    """Equal error rate and its threshold.

    Every distinct score is a candidate threshold. The chosen one minimizes
    ``|FAR - FRR|`` (compared exactly in integer arithmetic, ties to the lower
    threshold) and the EER is the mean of FAR and FRR there.
    """
    g = _scores(genuine_scores, "genuine")
    i = _scores(impostor_scores, "impostor")
    thresholds, rejected, accepted = _error_counts(g, i)
    # |accepted/ni - rejected/ng| scaled by ni*ng stays integral
    gap = np.abs(accepted.astype(np.int64) * g.size - rejected.astype(np.int64) * i.size)
    k = int(np.argmin(gap))
    far = accepted[k] / i.size
    frr = rejected[k] / g.size
    return float((far + frr) / 2), float(thresholds[k])


def roc_points(genuine_scores, impostor_scores) -> np.ndarray:
    """``(threshold, far, frr)`` rows, one per distinct score, ascending threshold."""
    g = _scores(genuine_scores, "genuine")
    i = _scores(impostor_scores, "impostor")
    thresholds, rejected, accepted = _error_counts(g, i)
    return np.column_stack([thresholds, accepted / i.size, rejected / g.size])


def format_roc(points: np.ndarray) -> str:
    lines = ["threshold,far,frr"]
    lines += [f"{t:.9g},{far:.9g},{frr:.9g}" for t, far, frr in points]
    return "\n".join(lines) + "\n"


def compute_accuracy(predicted_labels, true_labels) -> float:
    pred = np.asarray(predicted_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise LengthMismatch("accuracy of an empty label set is undefined")
    return float(np.mean(pred == true))


def aggregate_runs(per_run_values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (``ddof=1``; 0 for a single run)."""
    values = np.asarray(per_run_values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("no runs to aggregate")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


# ------------------------------------------------------------------ reports

class _Report:
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class EvalReport(_Report):
    """Verification results over several seeded runs; keys serialize in field order."""

    scenario: str
    runs: int
    genuine_count: int
    impostor_count: int
    per_run_eer: List[float]
    eer_threshold: List[float]
    mean_eer: float
    std_eer: float
    config: dict = field(default_factory=dict)

    @classmethod
    def from_runs(cls, scenario: str, results: Sequence[Tuple[float, float]], genuine_count: int,
                  impostor_count: int, config: dict = None) -> "EvalReport":
        eers = [float(e) for e, _ in results]
        mean, std = aggregate_runs(eers)
        return cls(scenario, len(eers), int(genuine_count), int(impostor_count), eers,
                   [float(t) for _, t in results], mean, std, dict(config or {}))


@dataclass
class IdentificationReport(_Report):
    scenario: str
    runs: int
    n_subjects: int
    test_count: int
    per_run_accuracy: List[float]
    mean_accuracy: float
    std_accuracy: float
    config: dict = field(default_factory=dict)

    @classmethod
    def from_runs(cls, scenario: str, accuracies: Sequence[float], n_subjects: int, test_count: int,
                  config: dict = None) -> "IdentificationReport":
        mean, std = aggregate_runs(accuracies)
        return cls(scenario, len(accuracies), int(n_subjects), int(test_count),
                   [float(a) for a in accuracies], mean, std, dict(config or {}))
