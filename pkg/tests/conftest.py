import math
from pathlib import Path

import numpy as np
import pytest

from riccilab.config import load_config
from riccilab.models import GaussianStatic, ShrinkingSphere
from riccilab.scenario import Scenario
from riccilab.splice import BreatherSpec, Diffeo, splice

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sphere_l(n, c, rho, tau):
    """Closed-form reduced distance on ``s(tau) = 2(n-1)(tau + c)`` round spheres.

    The minimal L-geodesic to angle ``rho`` keeps a fixed great circle;
    its energy is ``n (sqrt(tau) - sqrt(c) atan(sqrt(tau/c)))`` from the
    scalar curvature plus ``rho^2 (n-1) sqrt(c) / atan(sqrt(tau/c))`` from
    the motion.
    """
    at = np.arctan(np.sqrt(tau / c))
    L = n * (np.sqrt(tau) - math.sqrt(c) * at) + rho**2 * (n - 1) * math.sqrt(c) / at
    return L / (2 * np.sqrt(tau))


@pytest.fixture(scope="session")
def gaussian_splice():
    return splice(BreatherSpec(GaussianStatic(3), 0.25, Diffeo.radial_scaling(0.5)), 31)


@pytest.fixture(scope="session")
def sphere_splice():
    return splice(BreatherSpec(ShrinkingSphere(3, 1.0), 0.5, Diffeo()), 31)


@pytest.fixture(scope="session")
def sphere_scenario():
    return Scenario(load_config(CONFIGS / "sphere.yaml"))


@pytest.fixture(scope="session")
def gaussian_scenario():
    return Scenario(load_config(CONFIGS / "gaussian.yaml"))
