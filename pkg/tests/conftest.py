import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from whitham.flow import delaunay_seed, flow_step, flow_to, homogeneous_seed  # noqa: E402


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


@pytest.fixture(scope="session")
def clifford_trajectory():
    """Square-torus seed flowed to rho = 0.05 in steps of 0.01."""
    t0 = time.perf_counter()
    traj = flow_to(homogeneous_seed(1j), 0.05, drho=0.01)
    return Timed(traj, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def delaunay_seed_plus():
    return delaunay_seed(1j, sign=1)


@pytest.fixture(scope="session")
def delaunay_plus_step(delaunay_seed_plus):
    t0 = time.perf_counter()
    s = flow_step(delaunay_seed_plus, 0.005)
    return Timed(s, time.perf_counter() - t0)
