import numpy as np
import pytest

from memlqr import (
    InitialStateSpec,
    LinearSystem,
    Policy,
    QuadraticCost,
    default_config,
    sample_realizations,
    solve_dare,
)
from memlqr.config import STREAM_TRAIN_REALIZATIONS


@pytest.fixture(scope="session")
def benchmark_config():
    return default_config()


@pytest.fixture(scope="session")
def benchmark_cost(benchmark_config):
    return benchmark_config.cost()


@pytest.fixture(scope="session")
def benchmark_systems(benchmark_config):
    """The four training realizations of the shipped experiment, seed 0."""
    return sample_realizations(
        benchmark_config.family, 4, (0, STREAM_TRAIN_REALIZATIONS)
    )


@pytest.fixture(scope="session")
def nominal_system(benchmark_config):
    family = benchmark_config.family
    return LinearSystem(family.n, family.m, family.A0, family.B0)


@pytest.fixture(scope="session")
def nominal_gain(nominal_system, benchmark_cost):
    return solve_dare(nominal_system, benchmark_cost)


def scalar_system(a, b=1.0):
    return LinearSystem(1, 1, np.array([[a]]), np.array([[b]]))


def scalar_cost(q=1.0, r=1.0, s0=1.0):
    return QuadraticCost(np.array([[q]]), np.array([[r]]), np.array([[s0]]))


@pytest.fixture
def scalar_a09():
    return scalar_system(0.9)


@pytest.fixture
def unit_cost():
    return scalar_cost()


def random_stable_instance(rng, n=4, m=2):
    """Random system with a random stabilizing gain and PD cost data.

    The gain is the optimal one of a perturbed cost, which keeps it
    stabilizing but away from the test instance's own optimum.
    """
    A = rng.normal(size=(n, n))
    A *= 0.95 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
    B = rng.normal(size=(n, m))
    system = LinearSystem(n, m, A, B)
    Q = np.diag(rng.uniform(0.5, 3.0, n))
    R = np.diag(rng.uniform(0.5, 3.0, m))
    sigma0 = np.diag(rng.uniform(0.5, 3.0, n))
    cost = QuadraticCost(Q, R, sigma0)
    perturbed = QuadraticCost(
        Q + np.diag(rng.uniform(0.0, 2.0, n)),
        R + np.diag(rng.uniform(0.0, 2.0, m)),
        sigma0,
    )
    gain = solve_dare(system, perturbed)
    return system, cost, Policy(gain.K)
