import numpy as np
import pytest

from predictorlab import PredictorGains, Plant, SimConfig, compute_derived_signals, simulate_closed_loop

A = np.array([[0.0, 1.0], [0.1, 0.0]])
B = np.array([[0.0], [1.0]])
K = np.array([[-20.0, -30.0]])
L = np.array([[2.0, 0.5], [3.0, 0.0]])
X0 = np.array([-1.0, 1.0])


def paper_setup(D, T, h=1e-4, t_end=None, L_gain=L, A_mat=A):
    t_end = t_end if t_end is not None else D + 3 * T + 1
    return Plant(A_mat, B, D), PredictorGains(K, L_gain, T), SimConfig(h, t_end, X0)


def run(plant, gains, config, mode="modified"):
    return compute_derived_signals(simulate_closed_loop(plant, gains, config, mode), plant)


@pytest.fixture(scope="session")
def scenario1():
    plant, gains, config = paper_setup(1.0, 5.0, 1e-4, 40.0)
    return plant, gains, run(plant, gains, config)


@pytest.fixture(scope="session")
def scenario2():
    plant, gains, config = paper_setup(3.0, 30.0, 1e-4, 120.0)
    return plant, gains, run(plant, gains, config)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
