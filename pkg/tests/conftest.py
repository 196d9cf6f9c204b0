import numpy as np
import pytest

from geoflow.mesh import SurfaceMesh, gen_icosphere


def perturbed_sphere(subdivisions, amplitude, seed):
    rng = np.random.default_rng(seed)
    m = gen_icosphere(subdivisions)
    scale = 1.0 + amplitude * rng.uniform(-1.0, 1.0, size=(m.n_vertices, 1))
    return m.with_vertices(m.vertices * scale)


def unit_right_triangle():
    return SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sphere2():
    return gen_icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return gen_icosphere(3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
