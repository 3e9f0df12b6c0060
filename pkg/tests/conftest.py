import numpy as np
import pytest

from robust_filter.templates import DesignMatrix

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_design(X, y):
    X = np.asarray(X, dtype=float)
    return DesignMatrix(X=X, y=np.asarray(y, dtype=float), row_ids=np.arange(X.shape[0]))


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
