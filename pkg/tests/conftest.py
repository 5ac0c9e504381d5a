import numpy as np
import pytest

from memrd import icosphere
from memrd.fem import FemOperators
from memrd.kinetics import Parameters


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return icosphere(4)


@pytest.fixture(scope="session")
def ops3(sphere3):
    return FemOperators.from_mesh(sphere3)


@pytest.fixture(scope="session")
def ops4(sphere4):
    return FemOperators.from_mesh(sphere4)


@pytest.fixture(scope="session")
def baseline():
    return Parameters.baseline()


def mesh_matched_baseline(mesh, **overrides):
    """Baseline constants with geometry factors taken from the discrete mesh."""
    return Parameters.baseline(
        c=1.0 / mesh.enclosed_volume(),
        gamma_area=mesh.surface_area(),
        **overrides,
    )


@pytest.fixture(scope="session")
def tetra_mesh():
    from memrd.mesh import SurfaceMesh

    vertices = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    triangles = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    return SurfaceMesh(vertices, triangles)


def random_triangle_quadrature(vertices, triangle, fn, degree6=False):
    """Integrate fn(x) over one 3D triangle with a degree-5 Dunavant rule.

    Independent oracle for assembly tests: exact for polynomials up to
    degree 5 on the flat triangle.
    """
    w1, w2, w3 = 0.225, 0.1323941527885062, 0.1259391805448271
    a2, b2 = 0.0597158717897698, 0.4701420641051151
    a3, b3 = 0.7974269853530873, 0.1012865073234563
    points = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
            [a3, b3, b3], [b3, a3, b3], [b3, b3, a3],
        ]
    )
    weights = np.array([w1, w2, w2, w2, w3, w3, w3])
    p = vertices[np.asarray(triangle)]
    cross = np.cross(p[1] - p[0], p[2] - p[0])
    area = 0.5 * np.linalg.norm(cross)
    total = 0.0
    for bary, weight in zip(points, weights):
        x = bary @ p
        total += weight * fn(x, bary)
    return area * total
