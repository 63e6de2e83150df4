import math

import pytest

from espar_cr.antenna import BeamPatternModel
from espar_cr.optimizer import Constraints
from espar_cr.scenario import Scenario
from espar_cr.sensing import PriorModel


def db(x):
    return 10.0 ** (x / 10.0)


@pytest.fixture(scope="session")
def model():
    """Reference pattern: A0=1, A1=0.01, 20 degree beamwidth, 8 sectors."""
    return BeamPatternModel.from_degrees(1.0, 0.01, 20.0, M=8)


@pytest.fixture(scope="session")
def prior():
    return PriorModel()


@pytest.fixture(scope="session")
def scenario(model):
    return Scenario(model)


@pytest.fixture(scope="session")
def ref_constraints():
    """P_bar = 12 dB, I_bar = -6 dB."""
    return Constraints(db(12.0), db(-6.0))


@pytest.fixture(scope="session")
def ref_design(scenario, ref_constraints):
    """Optimised n_b = 4 design at the boresight orientation."""
    return scenario.solve(ref_constraints, 4, 0.0, 1)


LAMBDA_GRID_P_BAR_DB = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
LAMBDA_GRID_I_BAR_DB = [-6.0, -2.0, 2.0]


@pytest.fixture(scope="session")
def lambda_grid_rows(tmp_path_factory):
    """Orientation-averaged perfect-CSI sweep of Lambda over the (P_bar, I_bar) grid."""
    from espar_cr.cli import run_experiment
    from espar_cr.config import ExperimentConfig
    cfg = ExperimentConfig(orientation="average", n_b=None,
                           sweep={"P_bar_dB": LAMBDA_GRID_P_BAR_DB, "I_bar_dB": LAMBDA_GRID_I_BAR_DB})
    return run_experiment(cfg, tmp_path_factory.mktemp("lambda_grid"))


ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for the one-line verdict of each acceptance criterion."""
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
