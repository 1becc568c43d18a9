import math

import numpy as np
import pytest

from cavity_scatter.mesh import AIR, GROUND, Mesh, WALL, initial_mesh
from cavity_scatter.scenario import flat_ground, preset


def square_mesh(tags=(WALL, WALL, WALL, WALL), domain="tbc_domain") -> Mesh:
    """Unit square split along the (1,0)-(0,1) diagonal; boundary edges b, r, t, l."""
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    T = np.array([[0, 1, 3], [2, 3, 1]])
    E = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    return Mesh(V, T, np.full(2, AIR), E, np.asarray(tags), 10.0, 30.0, domain)


def single_triangle(domain="tbc_domain", tag=GROUND) -> Mesh:
    """The unit right triangle (0,0), (1,0), (0,1)."""
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    T = np.array([[0, 1, 2]])
    E = np.array([[0, 1], [1, 2], [2, 0]])
    return Mesh(V, T, np.zeros(1, dtype=np.int64), E, np.array([tag, WALL, WALL]), 10.0, 30.0, domain)


@pytest.fixture(scope="session")
def ex1():
    return preset("example1_empty")


@pytest.fixture(scope="session")
def ex1_mesh(ex1):
    return initial_mesh(ex1)


@pytest.fixture(scope="session")
def flat_tm():
    return flat_ground("TM", 8 * math.pi, math.pi / 4)


@pytest.fixture(scope="session")
def flat_te():
    return flat_ground("TE", 8 * math.pi, math.pi / 4)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
CRITERIA: dict[int, str] = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
