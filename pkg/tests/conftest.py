import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

from plekit.lorentz import DoubleLorentzParams, FitConstraints, double_lorentz_eval  # noqa: E402
from plekit.model import PleLine  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def doublet():
    """Noiseless reference doublet: centers at +-0.4 V, 0.1 V wide, baseline 2."""
    return DoubleLorentzParams(2.0, 80.0, -0.4, 0.1, 60.0, 0.4, 0.1)


@pytest.fixture
def grid():
    return np.linspace(-1.0, 1.0, 400)


@pytest.fixture
def constraints():
    return FitConstraints((-0.7, -0.1), (0.1, 0.7), 2.0, 0.8, 0.10)


@pytest.fixture
def doublet_line(doublet, grid):
    return PleLine(0, 0.0, grid, double_lorentz_eval(doublet, grid))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
