import numpy as np
import pytest

from ceitr import CEConfig
from ceitr.dgp import DGPScenario, assemble_cohort


@pytest.fixture(scope="session")
def ce():
    return CEConfig(lam=50_000.0, tau=20.0)


@pytest.fixture(scope="session")
def censored_sim():
    return assemble_cohort(DGPScenario(n=400, censor_target=0.3, seed=11))


@pytest.fixture(scope="session")
def complete_sim():
    return assemble_cohort(DGPScenario(n=400, censor_target=0.0, seed=12))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
