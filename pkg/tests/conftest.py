import numpy as np
import pytest

from gradmatch.simulate import FHN_X0, FhnParams, NoiseSpec, add_noise, fhn_rhs, simulate
from gradmatch.smoother import KernelSmootherCV


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fhn_truth():
    p = FhnParams()
    return simulate(lambda x: fhn_rhs(p, x), FHN_X0, np.linspace(0.0, 20.0, 41))


@pytest.fixture(scope="session")
def fhn_noisy(fhn_truth):
    return add_noise(fhn_truth, NoiseSpec(0.1, seed=1))


@pytest.fixture(scope="session")
def fhn_smoother(fhn_noisy):
    return KernelSmootherCV().fit(fhn_noisy.times, fhn_noisy.values)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (isinstance(k, str), k)):
            terminalreporter.write_line(RESULTS[key])
