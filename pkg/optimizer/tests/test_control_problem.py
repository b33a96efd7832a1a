import numpy as np
import pytest

import config.settings as cfg
import control_ops.boundary_ops as bops
import fespace.quadrature as quad
import fespace.spaces as spc
import harness.boundary_fields as bfd
import harness.manufactured as mfd
import mesh.triangulation as tri
import optimizer.control_problem as ocp
import optimizer.oracle as orc

PI = np.pi


def sine_source(x, y):
    return 2.0 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y)


def sine_state(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def sine_grad(x, y):
    return (PI * np.cos(PI * x) * np.sin(PI * y),
            PI * np.sin(PI * x) * np.cos(PI * y))


def odd_square(n):
    return tri.ensure_odd_boundary(tri.triangulate_unit_square(n))


def test_problem_spec_checks(odd_square2):
    p = mfd.homogeneous_problem(odd_square2)
    with pytest.raises(ValueError):
        ocp.ProblemSpec(odd_square2, 0.0, p.bounds, p.f, p.y_d)
    with pytest.raises(ValueError):
        ocp.ProblemSpec(odd_square2, 1.0, (0.0, 1.0), p.f, p.y_d)
    with pytest.raises(ValueError):
        ocp.ProblemSpec(odd_square2, 1.0, p.bounds, 3.0, p.y_d)


def test_on_mesh(odd_square2, odd_square4):
    p = mfd.manufactured_inactive(2.0, odd_square2)
    q = p.on_mesh(odd_square4)
    assert q.mesh is odd_square4
    assert q.alpha == p.alpha
    assert q.bounds == p.bounds


@pytest.mark.parametrize('c', [0.0, 1.0, -2.5])
def test_constant_control_reproduced(small_odd_meshes, odd_pentagon1, c):
    rule = quad.quadrature_triangle(6)
    for m in small_odd_meshes + [odd_pentagon1]:
        p = mfd.homogeneous_problem(m)
        y = ocp.solve_state(p, np.full(m.num_boundary_edges, c))
        assert np.allclose(y.values(rule.points), c, atol=1e-10)
        assert np.allclose(y.trace.coefficients, c)


def test_state_parts(odd_square4, rng):
    p = mfd.manufactured_inactive(1.0, odd_square4)
    y = ocp.solve_state(p, rng.standard_normal(odd_square4.num_boundary_edges))
    assert y.y_f.in_v0()
    assert y.y_0.in_v0()
    assert y.mesh is odd_square4


def test_state_rates():
    meshes = [odd_square(n) for n in (4, 8, 16, 32)]
    l2, energy = [], []
    for m in meshes:
        p = ocp.ProblemSpec(m, 1.0, bops.BoxBounds(-1.0, 1.0), sine_source,
                            sine_state)
        y = ocp.solve_state(p, np.zeros(m.num_boundary_edges)).composite
        l2.append(spc.l2_error(y, sine_state))
        energy.append(spc.broken_h1_error(y, sine_grad))
    h = [m.h for m in meshes]
    for errors, floor in ((l2, 1.9), (energy, 0.95)):
        rates = [np.log(a / b) / np.log(ha / hb)
                 for a, b, ha, hb in zip(errors, errors[1:], h, h[1:])]
        assert min(rates) >= floor


@pytest.mark.slow
def test_piecewise_constant_data_rate():
    def g(x, y):
        return np.cos(PI * x) * (1.0 + y)

    def state(m):
        p = mfd.homogeneous_problem(m)
        return ocp.solve_state(p, bops.p0_project(m, g)).composite

    sizes = [4, 8, 16]
    errors = [bfd.domain_l2_distance(state(odd_square(n)),
                                     state(odd_square(4 * n)))
              for n in sizes]
    rates = [np.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(rates) >= 0.9


def test_zero_residual_gives_zero_adjoint(odd_square2):
    p = mfd.homogeneous_problem(odd_square2)
    y = ocp.solve_state(p, np.zeros(odd_square2.num_boundary_edges))
    xi = ocp.solve_adjoint(p, y)
    assert np.all(xi.coefficients == 0.0)
    assert np.all(ocp.discrete_flux(xi, y, p).coefficients == 0.0)


def test_adjoint_in_v0(odd_square4, rng):
    p = mfd.manufactured_inactive(1.0, odd_square4)
    y = ocp.solve_state(p, rng.standard_normal(odd_square4.num_boundary_edges))
    assert ocp.solve_adjoint(p, y).in_v0()


MESHES = ['odd_square1', 'pentagon', 'odd_square2']


@pytest.mark.parametrize('mesh_name', MESHES)
@pytest.mark.parametrize('alpha', [0.1, 1.0, 10.0])
def test_gradient_matches_differences(request, mesh_name, alpha, rng):
    m = request.getfixturevalue(mesh_name)
    p = mfd.random_problem(m, rng)
    p = ocp.ProblemSpec(m, alpha, p.bounds, p.f, p.y_d)
    prob = ocp.DiscreteControlProblem(p, cfg.LU)
    u = rng.standard_normal(m.num_boundary_edges)
    g = prob.gradient(prob.evaluate(u))
    eps = 1e-5
    for _ in range(10):
        d = rng.standard_normal(m.num_boundary_edges)
        fd = (prob.evaluate(u + eps * d).objective
              - prob.evaluate(u - eps * d).objective) / (2 * eps)
        exact = prob.inner(g, d)
        assert abs(fd - exact) <= 1e-6 * (abs(exact)
                                         + prob.norm(g) * prob.norm(d))


def test_gradient_of_homogeneous_problem(odd_square2, rng):
    p = mfd.homogeneous_problem(odd_square2, alpha=100.0)
    prob = ocp.DiscreteControlProblem(p, cfg.LU)
    u = rng.standard_normal(odd_square2.num_boundary_edges)
    ev = prob.evaluate(u)
    assert prob.inner(prob.gradient(ev), u) == pytest.approx(
        2.0 * ev.objective, rel=1e-10)


def test_reduced_gradient_wrapper(odd_square2, rng):
    p = mfd.manufactured_inactive(1.0, odd_square2)
    u = rng.standard_normal(odd_square2.num_boundary_edges)
    g = ocp.reduced_gradient(p, u)
    assert isinstance(g, spc.BoundaryControl)
    assert np.isfinite(ocp.objective(p, u))


def test_homogeneous_problem_solution(odd_square2):
    p = mfd.homogeneous_problem(odd_square2)
    sol = ocp.solve_control(p)
    assert np.all(sol.control.coefficients == 0.0)
    assert sol.objective == 0.0
    assert sol.iterations == 0


def test_narrow_box(odd_square2):
    box = bops.BoxBounds(0.3, 0.3 + 1e-9)
    p = mfd.homogeneous_problem(odd_square2, bounds=box)
    sol = ocp.solve_control(p)
    assert box.contains(sol.control.coefficients)
    lower, upper = sol.active_set(box, tol=1e-6)
    assert len(lower) + len(upper) > 0


def test_objective_decreases(odd_square4):
    p = mfd.manufactured_active(1.0, m=odd_square4)
    sol = ocp.solve_control(p, tol=1e-10, method=cfg.LU)
    values = [rec.objective for rec in sol.history]
    assert all(b <= a + 1e-13 * abs(a) for a, b in zip(values, values[1:]))
    assert p.bounds.contains(sol.control.coefficients)
    assert sol.kkt_residual <= 1e-10


def test_active_problem_binds(odd_square4):
    p = mfd.manufactured_active(1.0, m=odd_square4)
    sol = ocp.solve_control(p)
    lower, _ = sol.active_set(p.bounds)
    assert len(lower) > 0


def test_unconstrained_minimizer(odd_square4):
    p = mfd.manufactured_inactive(1.0, odd_square4)
    p = ocp.ProblemSpec(odd_square4, p.alpha, bops.BoxBounds(-100.0, 100.0),
                        p.f, p.y_d)
    sol = ocp.solve_control(p, tol=1e-11, method=cfg.LU)
    lower, upper = sol.active_set(p.bounds)
    assert len(lower) == len(upper) == 0
    prob = ocp.DiscreteControlProblem(p, cfg.LU)
    g = prob.gradient(prob.evaluate(sol.control))
    assert prob.norm(g) <= 1e-9


def test_kkt_residual(odd_square2, rng):
    p = mfd.homogeneous_problem(odd_square2)
    assert ocp.kkt_residual(p, np.zeros(odd_square2.num_boundary_edges)) == 0.0
    u = bops.clamp_box(rng.standard_normal(odd_square2.num_boundary_edges),
                       p.bounds)
    assert ocp.kkt_residual(p, u) > 0.0


def test_kkt_residual_at_oracle(pentagon, rng):
    p = mfd.random_problem(pentagon, rng)
    u = orc.qp_oracle(p)
    prob = ocp.DiscreteControlProblem(p, cfg.LU)
    assert prob.kkt_residual(u) <= 1e-8


def test_fixed_step(odd_square2):
    p = mfd.manufactured_active(1.0, m=odd_square2)
    sol = ocp.solve_control(p, tau=0.02, armijo=False, max_iter=20000,
                            tol=1e-8)
    assert sol.kkt_residual <= 1e-8
    assert p.bounds.contains(sol.control.coefficients)


def test_fixed_step_needs_tau(odd_square2):
    p = mfd.homogeneous_problem(odd_square2)
    with pytest.raises(ValueError):
        ocp.solve_control(p, armijo=False)


def test_iteration_limit(odd_square4):
    p = mfd.manufactured_inactive(1.0, odd_square4)
    with pytest.raises(ocp.OptimizationError) as err:
        ocp.solve_control(p, tol=1e-14, max_iter=1)
    assert err.value.residual > 0.0
    assert len(err.value.history) == 2
    assert isinstance(err.value.control, spc.BoundaryControl)


def test_solution_fields(odd_square2):
    p = mfd.manufactured_inactive(1.0, odd_square2)
    sol = ocp.solve_control(p)
    assert sol.mesh is odd_square2
    assert sol.enriched_control_norm == pytest.approx(
        bops.p1_tilde(sol.control).l2_norm())
    assert len(sol.flux.coefficients) == odd_square2.num_boundary_edges
    assert sol.history[-1].residual == sol.kkt_residual


def test_discrete_problem_cache(odd_square2):
    p = mfd.manufactured_inactive(1.0, odd_square2)
    assert ocp.discrete_problem(p) is ocp.discrete_problem(p)
    assert ocp.discrete_problem(p, cfg.LU) is not ocp.discrete_problem(p)


def test_adjoint_rate():
    errors, h = [], []
    for n in (4, 8, 16, 32):
        m = odd_square(n)
        p = mfd.manufactured_inactive(1.0, m)
        prob = ocp.DiscreteControlProblem(p)
        x, y, _ = quad.physical_points(m, prob.rule)
        residual = 2.0 * PI ** 2 * mfd.theta(x, y)
        ev = ocp.Evaluation(None, None, np.nan, residual)
        errors.append(spc.l2_error(prob.adjoint(ev), mfd.theta))
        h.append(m.h)
    rates = [np.log(a / b) / np.log(ha / hb)
             for a, b, ha, hb in zip(errors, errors[1:], h, h[1:])]
    assert min(rates) >= 1.9
