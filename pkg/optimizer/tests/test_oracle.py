import numpy as np
import pytest

import config.settings as cfg
import control_ops.boundary_ops as bops
import harness.manufactured as mfd
import linalg.solvers as slv
import mesh.triangulation as tri
import optimizer.control_problem as ocp
import optimizer.oracle as orc


def test_hessian_is_spd(small_odd_meshes, rng):
    for m in small_odd_meshes:
        qp = orc.build_reduced_qp(mfd.random_problem(m, rng))
        H = qp.hessian
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() > 0.0


def test_qp_matches_objective(pentagon, rng):
    p = mfd.random_problem(pentagon, rng)
    qp = orc.build_reduced_qp(p)
    prob = ocp.DiscreteControlProblem(p, cfg.LU)
    for _ in range(5):
        u = rng.standard_normal(5)
        ev = prob.evaluate(u)
        assert qp.objective(u) == pytest.approx(ev.objective, rel=1e-10)
        grad = prob.gradient(ev) * pentagon.boundary_lengths
        assert np.allclose(qp.gradient(u), grad, atol=1e-9)


def test_threaded_build_matches(odd_square2, rng):
    p = mfd.random_problem(odd_square2, rng)
    serial = orc.build_reduced_qp(p)
    threaded = orc.build_reduced_qp(p, max_workers=4)
    assert np.allclose(serial.hessian, threaded.hessian)
    assert np.allclose(serial.linear, threaded.linear)


def test_homogeneous_oracle(pentagon):
    u = orc.qp_oracle(mfd.homogeneous_problem(pentagon))
    assert np.allclose(u.coefficients, 0.0, atol=1e-12)


def test_unconstrained_oracle(odd_square2, rng):
    p = mfd.random_problem(odd_square2, rng)
    p = ocp.ProblemSpec(odd_square2, p.alpha, bops.BoxBounds(-1e3, 1e3),
                        p.f, p.y_d)
    qp = orc.build_reduced_qp(p)
    u = orc.qp_oracle(p).coefficients
    assert np.allclose(qp.hessian @ u, qp.linear, atol=1e-10)


def test_solver_matches_oracle(small_odd_meshes, rng):
    for m in small_odd_meshes:
        for _ in range(5):
            p = mfd.random_problem(m, rng)
            sol = ocp.solve_control(p, tol=1e-12, method=cfg.LU)
            dist, gap = orc.oracle_deviation(p, sol)
            assert dist <= 1e-8
            assert gap <= 1e-12 * (1.0 + abs(sol.objective))


def test_oracle_refuses_large_boundary():
    m = tri.ensure_odd_boundary(tri.triangulate_unit_square(8))
    assert m.num_boundary_edges > cfg.MAX_ORACLE_EDGES
    with pytest.raises(orc.OracleError):
        orc.build_reduced_qp(mfd.homogeneous_problem(m))


def test_oracle_even_boundary(square2):
    with pytest.raises(slv.SingularMatrixError):
        orc.build_reduced_qp(mfd.homogeneous_problem(square2))
