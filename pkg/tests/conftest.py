import numpy as np
import pytest

from compcbf.certificates import TeamParams
from compcbf.state import EnsembleState


@pytest.fixture
def params4():
    return TeamParams(4, 1.0, 0.5, 0.15, 0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def two_robots(p_i, p_j, v_i=(0.0, 0.0), v_j=(0.0, 0.0)):
    return EnsembleState([p_i, p_j], [v_i, v_j])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
