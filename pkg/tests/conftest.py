import numpy as np
import pytest

from lungdeform.mesh import Mesh
from lungdeform.synthgen import GeneratorParams, generate_case

CUBE_VERTICES = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ]
)
CUBE_TRIANGLES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],  # front
        [2, 3, 7], [2, 7, 6],  # back
        [0, 4, 7], [0, 7, 3],  # left
        [1, 2, 6], [1, 6, 5],  # right
    ]
)


def make_cube(offset=(0.0, 0.0, 0.0), scale=1.0):
    return Mesh(CUBE_VERTICES * scale + np.asarray(offset), CUBE_TRIANGLES)


def make_tetra():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    t = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh(v, t)


@pytest.fixture
def cube():
    return make_cube()


@pytest.fixture
def tetra():
    return make_tetra()


@pytest.fixture(scope="session")
def small_case():
    """A fast synthetic case for unit tests (150 vertices)."""
    return generate_case(GeneratorParams(seed=11, vertex_count=150), 0)


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """Five small single-lobe cases on disk with their manifest."""
    from lungdeform.synthgen import generate_cohort

    out = tmp_path_factory.mktemp("cohort")
    manifest = generate_cohort(
        GeneratorParams(seed=23, vertex_count=150), 5, str(out), lobes=("upper",)
    )
    return manifest
