import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from capmink import SolverConfig, polygon_from_support, rectangle, regular_polygon

PENTAGON_THETA = np.array([0.1, 1.3, 2.4, 3.6, 5.0])
PENTAGON_SUPPORTS = np.array([1.0, 0.8, 1.1, 0.9, 1.05])


def pentagon():
    """Irregular pentagon with well separated normals."""
    return polygon_from_support(PENTAGON_THETA, PENTAGON_SUPPORTS)


def square(side=1.0):
    return rectangle(side, side)


def disk_like(m=256):
    return regular_polygon(m, 1.0)


@pytest.fixture(scope="session")
def cfg():
    return SolverConfig()


@pytest.fixture(scope="session")
def coarse():
    return SolverConfig(elements=5000)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
