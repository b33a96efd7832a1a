import numpy as np
import pytest

import mesh.triangulation as tri


@pytest.fixture(scope='session')
def reference_triangle():
    return tri.build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture(scope='session')
def square2():
    return tri.triangulate_unit_square(2)


@pytest.fixture(scope='session')
def odd_square1():
    return tri.ensure_odd_boundary(tri.triangulate_unit_square(1))


@pytest.fixture(scope='session')
def odd_square2():
    return tri.ensure_odd_boundary(tri.triangulate_unit_square(2))


@pytest.fixture(scope='session')
def odd_square4():
    return tri.ensure_odd_boundary(tri.triangulate_unit_square(4))


@pytest.fixture(scope='session')
def pentagon():
    return tri.triangulate_polygon_fan(tri.regular_polygon(5))


@pytest.fixture(scope='session')
def odd_pentagon1(pentagon):
    return tri.ensure_odd_boundary(tri.refine_uniform(pentagon))


@pytest.fixture(scope='session')
def small_odd_meshes(odd_square1, odd_square2, pentagon):
    """Every mesh here has at most 9 boundary edges."""
    return [
        tri.triangulate_polygon_fan(tri.regular_polygon(3)),
        odd_square1,
        pentagon,
        tri.triangulate_polygon_fan(tri.regular_polygon(7)),
        odd_square2,
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
