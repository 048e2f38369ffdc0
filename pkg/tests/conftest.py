import numpy as np
import pytest

from switchcert.scenarios import builtin_scenario
from switchcert.signals import SwitchingSignal
from switchcert.stability import simulate_batch
from switchcert.systems import IntegratorOptions, integrate


@pytest.fixture(scope="session")
def ex1_scenario():
    return builtin_scenario("example1")


@pytest.fixture(scope="session")
def ex1_batch(ex1_scenario):
    return simulate_batch(ex1_scenario)


@pytest.fixture(scope="session")
def ex2_scenario():
    return builtin_scenario("example2")


@pytest.fixture(scope="session")
def ex2_batch(ex2_scenario):
    return simulate_batch(ex2_scenario)


@pytest.fixture(scope="session")
def two_centers_scenario():
    return builtin_scenario("two_centers")


@pytest.fixture(scope="session")
def two_centers_batch(two_centers_scenario):
    return simulate_batch(two_centers_scenario)


@pytest.fixture(scope="session")
def center_orbit(ex1_scenario):
    """Rotation-only trajectory on the unit circle, densely sampled."""
    opts = IntegratorOptions(max_dx=0.01)
    return integrate(ex1_scenario.system, [1.0, 0.0],
                     SwitchingSignal.constant(2, 60.0), opts)


@pytest.fixture(scope="session")
def zero_trajectory(ex1_scenario):
    """Equilibrium trajectory under a periodic two-mode signal."""
    times = np.arange(1.0, 20.0)
    modes = np.array([1 + (i % 2) for i in range(times.size + 1)])
    signal = SwitchingSignal(times, modes, 20.0)
    return integrate(ex1_scenario.system, [0.0, 0.0], signal)
