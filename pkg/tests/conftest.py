import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ecgx.dataset import extract_feature_store, segment_dataset, synthesize_cohort  # noqa: E402
from ecgx.models import ConvAutoencoder  # noqa: E402


@pytest.fixture(scope="session")
def cohort():
    return synthesize_cohort(8, n_sessions=2, duration_s=30.0, seed=3)


@pytest.fixture(scope="session")
def segments(cohort):
    return segment_dataset(cohort)


@pytest.fixture(scope="session")
def untrained_ae():
    return ConvAutoencoder(random_state=0).initialize()


@pytest.fixture(scope="session")
def features(segments, untrained_ae):
    return extract_feature_store(segments, untrained_ae)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------------ acceptance lines

_ACCEPTANCE = pytest.StashKey[dict]()


class _Criterion:
    def __init__(self, results, number, title):
        self.results, self.number, self.title = results, number, title
        self.details = []

    def note(self, text):
        self.details.append(str(text))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None:
            reason = " ".join(str(exc).split())[:160] or exc_type.__name__
            detail = f"{detail}; {reason}" if detail else reason
        self.results[self.number] = f"criterion {self.number:2d} {status}: {self.title} ({detail})"
        return False


@pytest.fixture
def criterion(request):
    """``with criterion(n, title) as c:`` records one pass/fail line for the run summary."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})
    return lambda number, title: _Criterion(results, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
