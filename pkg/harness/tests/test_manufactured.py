import json

import numpy as np
import pytest

import config.settings as cfg
import harness.manufactured as mfd
import mesh.triangulation as tri
import optimizer.control_problem as ocp

PI = np.pi


@pytest.fixture
def points(rng):
    return rng.uniform(0.05, 0.95, (2, 50))


def laplacian(f, x, y, h=1e-3):
    return (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h)
            - 4.0 * f(x, y)) / h ** 2


@pytest.mark.parametrize('alpha', [0.5, 1.0, 2.0])
def test_adjoint_equation(alpha, points):
    p = mfd.manufactured_inactive(alpha)
    x, y = points
    ex = p.exact
    lhs = -laplacian(ex.adjoint, x, y)
    assert np.allclose(lhs, ex.state(x, y) - p.y_d(x, y), rtol=1e-4,
                       atol=1e-4)
    assert np.allclose(2.0 * PI ** 2 * mfd.theta(x, y),
                       ex.state(x, y) - p.y_d(x, y))


@pytest.mark.parametrize('alpha', [0.5, 1.0, 2.0])
def test_state_equation(alpha, points):
    p = mfd.manufactured_inactive(alpha)
    x, y = points
    assert np.allclose(-laplacian(p.exact.state, x, y), p.f(x, y),
                       rtol=1e-4, atol=1e-4)


def test_control_values():
    ex = mfd.manufactured_inactive(2.0).exact
    assert ex.control(0.5, 0.0) == pytest.approx(-PI / 2.0)
    assert ex.control(1.0, 0.5) == pytest.approx(-PI / 2.0)
    assert ex.control(0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert ex.control(1.0, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_flux_is_normal_derivative(rng):
    ex = mfd.manufactured_inactive(1.0).exact
    t = rng.uniform(0.0, 1.0, 20)
    zero, one = np.zeros_like(t), np.ones_like(t)
    # left, right, bottom, top sides with their outward normals
    for x, y, n in ((zero, t, (-1, 0)), (one, t, (1, 0)),
                    (t, zero, (0, -1)), (t, one, (0, 1))):
        gx, gy = mfd.theta_grad(x, y)
        assert np.allclose(ex.flux(x, y), n[0] * gx + n[1] * gy, atol=1e-12)


@pytest.mark.parametrize('alpha', [0.5, 1.0, 4.0])
def test_optimality_on_boundary(alpha, rng):
    p = mfd.manufactured_inactive(alpha)
    t = rng.uniform(0.0, 1.0, 20)
    x, y = t, np.zeros_like(t)
    u = p.exact.control(x, y)
    assert np.allclose(alpha * u, p.exact.flux(x, y))
    assert np.all(u > p.bounds.u_a)
    assert np.all(u < p.bounds.u_b)


def test_exact_only_on_unit_square(pentagon, odd_square2):
    assert mfd.manufactured_inactive(1.0, odd_square2).exact is not None
    assert mfd.manufactured_inactive(1.0, pentagon).exact is None
    assert mfd.is_unit_square(odd_square2)
    assert not mfd.is_unit_square(pentagon)


def test_default_mesh():
    p = mfd.manufactured_inactive()
    assert p.mesh.num_boundary_edges == 9
    assert p.name == mfd.INACTIVE


def test_active_bounds():
    p = mfd.manufactured_active(2.0)
    assert p.bounds.u_a == pytest.approx(-0.5 * PI / 2.0)
    assert p.exact is None
    with pytest.raises(ValueError):
        mfd.manufactured_active(1.0, clip=1.5)


def test_bad_alpha():
    with pytest.raises(ValueError):
        mfd.manufactured_inactive(-1.0)


def test_random_problem(pentagon):
    rng = np.random.default_rng(cfg.SEED)
    p = mfd.random_problem(pentagon, rng)
    assert 0.1 <= p.alpha <= 2.0
    assert p.bounds.u_a < 0.0 < p.bounds.u_b
    again = mfd.random_problem(pentagon, np.random.default_rng(cfg.SEED))
    assert again.alpha == p.alpha


def test_compile_expression():
    fn = mfd.compile_expression('sin(pi * x) * y + 2')
    x = np.array([0.5, 0.25])
    y = np.array([1.0, 0.0])
    assert np.allclose(fn(x, y), [3.0, 2.0])
    const = mfd.compile_expression('1.5')
    assert np.array_equal(const(x, y), [1.5, 1.5])


@pytest.mark.parametrize('text', ['__import__("os")', 'x.__class__',
                                  'open("f")', 'x +', '', 'z * 2'])
def test_compile_expression_rejects(text):
    with pytest.raises(ValueError):
        mfd.compile_expression(text)


def test_load_custom_problem(tmp_path, odd_square2):
    path = tmp_path / 'problem.json'
    path.write_text(json.dumps({'alpha': 0.5, 'bounds': [-1, 1],
                                'f': '1', 'y_d': 'x * y'}))
    p = mfd.load_custom_problem(path, odd_square2)
    assert p.alpha == 0.5
    assert p.name == mfd.CUSTOM
    assert p.y_d(np.array([0.5]), np.array([0.5]))[0] == 0.25


def test_custom_problem_missing_key(odd_square2):
    with pytest.raises(ValueError):
        mfd.custom_problem({'alpha': 1.0, 'f': '0', 'y_d': '0'}, odd_square2)


def test_load_custom_problem_bad_json(tmp_path, odd_square2):
    path = tmp_path / 'problem.json'
    path.write_text('{alpha: 1')
    with pytest.raises(ValueError):
        mfd.load_custom_problem(path, odd_square2)


def test_make_problem(odd_square2):
    p = mfd.make_problem(mfd.INACTIVE, odd_square2)
    assert p.exact is not None
    q = mfd.make_problem(mfd.INACTIVE, odd_square2, bounds=(-1.0, 1.0))
    assert q.exact is None
    assert q.bounds.as_tuple() == (-1.0, 1.0)
    with pytest.raises(ValueError):
        mfd.make_problem('bogus', odd_square2)
    with pytest.raises(ValueError):
        mfd.make_problem(mfd.CUSTOM, odd_square2)


def test_problem_on_refined_mesh(odd_square2):
    p = mfd.manufactured_inactive(1.0, odd_square2)
    fine = tri.ensure_odd_boundary(tri.triangulate_unit_square(4))
    assert isinstance(p.on_mesh(fine), ocp.ProblemSpec)
