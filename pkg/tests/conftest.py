from __future__ import annotations

import numpy as np
import pytest

from mtfgrasp.data import ClientDataset, GlobalDataset, generate_synthetic
from mtfgrasp.model import LearnerSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_task() -> GlobalDataset:
    return generate_synthetic(m=3, d=4, per_class=40, separation=3.0, seed=5)


@pytest.fixture
def lr_spec() -> LearnerSpec:
    return LearnerSpec("logistic", 4, 3)


@pytest.fixture
def mlp_spec() -> LearnerSpec:
    return LearnerSpec("mlp", 4, 3, hidden_units=8)


def client(robot_id: int, X, y, m: int) -> ClientDataset:
    X = np.asarray(X, dtype=float)
    return ClientDataset(robot_id, X, np.asarray(y, dtype=np.int64), m, np.arange(len(y)))
