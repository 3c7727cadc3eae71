import sys

import numpy as np
import pytest

from cve.objective import DataSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_data(rng):
    X = rng.standard_normal((8, 3))
    y = np.sin(X[:, 0]) + 0.2 * rng.standard_normal(8)
    return DataSet(y, X)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
