import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tsfem.surface import SurfaceMesh, make_torus_mesh, subdivide, torus_surface


@pytest.fixture(scope="session")
def torus():
    return torus_surface(4.0, 1.0)


@pytest.fixture(scope="session")
def torus_mesh_200():
    return make_torus_mesh(20, 10, 4.0, 1.0)


@pytest.fixture(scope="session")
def torus_mesh_coarse():
    return make_torus_mesh(10, 5, 4.0, 1.0)


def octahedron():
    verts = np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0],
                      [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    tris = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                     [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return SurfaceMesh(verts, tris)


@pytest.fixture(scope="session")
def flat_octa_mesh():
    """Octahedron subdivided twice without projection: eight flat faces,
    each carrying a uniform right-triangle grid."""
    return subdivide(subdivide(octahedron()))


def doubled_triangle(p0, p1, p2):
    """Two coincident triangles glued along all edges: combinatorially a
    closed 2-manifold whose assembled matrices are twice the single-element
    blocks."""
    verts = np.array([p0, p1, p2], dtype=np.float64)
    tris = np.array([[0, 1, 2], [0, 2, 1]])
    return SurfaceMesh(verts, tris)
