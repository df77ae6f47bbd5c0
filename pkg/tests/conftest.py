import numpy as np
import pytest

from vexgame.dynamics import logistic_diffusion
from vexgame.grid import build_partitions
from vexgame.hamiltonian import trig_hamiltonian
from vexgame.solver import GameProblem, solve, zero_payoff


def logistic_problem(N=25, M=100, L=100, sigma0=0.5, T=0.5, payoff=None, hamiltonian=None):
    tg, sp, xg = build_partitions(2, M, [[0.0, 1.0]], L, T, N)
    return GameProblem(tg, sp, xg, logistic_diffusion(sigma0), hamiltonian or trig_hamiltonian(),
                       payoff or zero_payoff(2))


@pytest.fixture(scope="session")
def reference_field():
    """The N = 25, L = M = 100 configuration, solved once per session."""
    return solve(logistic_problem())


@pytest.fixture(scope="session")
def small_field():
    return solve(logistic_problem(N=10, M=50, L=50))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
