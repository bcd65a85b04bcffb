import numpy as np
import pytest

from invlqg.controllers import CostWeights
from invlqg.model import mixed_reference

from scenarios import ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def benchmark_ref():
    return mixed_reference()


@pytest.fixture(scope="session")
def weights():
    return CostWeights()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
