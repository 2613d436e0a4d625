import numpy as np
import pytest

from ddinverse import mesh


@pytest.fixture(scope="session")
def mesh7():
    return mesh.build_mesh(7, 14)


@pytest.fixture(scope="session")
def decomp7(mesh7):
    return mesh.build_subdomains(mesh7)


@pytest.fixture(scope="session")
def mesh14():
    return mesh.build_mesh(14, 28)


@pytest.fixture(scope="session")
def decomp14(mesh14):
    return mesh.build_subdomains(mesh14)


def node_at(m, x, y):
    """Index of the mesh node at (x, y); fails the test if absent."""
    hits = np.flatnonzero(
        (np.abs(m.nodes[:, 0] - x) < 1e-12) & (np.abs(m.nodes[:, 1] - y) < 1e-12))
    assert hits.size == 1, f"no unique node at ({x}, {y})"
    return int(hits[0])
