import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radshock.evans import EvansSystem
from radshock.model import euler_rad, euler_shock, hamer, hamer_shock
from radshock.profile import solve_profile
from radshock.spectral import assemble


@pytest.fixture(scope="session")
def hamer_profile():
    return solve_profile(hamer(), hamer_shock(0.2))


@pytest.fixture(scope="session")
def hamer_profile_01():
    return solve_profile(hamer(), hamer_shock(0.1))


@pytest.fixture(scope="session")
def hamer_frame(hamer_profile):
    return assemble(hamer_profile)


@pytest.fixture(scope="session")
def hamer_system(hamer_frame):
    return EvansSystem(hamer_frame)


@pytest.fixture(scope="session")
def euler_model():
    return euler_rad()


@pytest.fixture(scope="session")
def euler_profile(euler_model):
    return solve_profile(euler_model, euler_shock(0.05, euler_model))


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
