"""
Dense reference solver for small meshes. The reduced problem is the box
constrained quadratic program 1/2 u^T H u - b^T u + c; H and b are built
column by column from one state solve per unit control, with dense
matrices only, and the QP is solved by projected gradient followed by
an exact solve on the identified free set.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

import assembly.forms as frm
import config.settings as cfg
import fespace.quadrature as quad
import fespace.spaces as spc
import linalg.solvers as slv

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-12
PG_MAX_ITER = 200000
POLISH_ROUNDS = 25


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class ReducedQP:
    hessian: np.ndarray
    linear: np.ndarray
    constant: float

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.hessian @ u - self.linear @ u
                     + self.constant)

    def gradient(self, u) -> np.ndarray:
        return self.hessian @ u - self.linear


def _cr_values(m, coefs, rule):
    return spc.CrFunction(m, coefs).values(rule.points)


def build_reduced_qp(p, order: int = None, max_workers: int = None
                     ) -> ReducedQP:
    m = p.mesh
    n = m.num_boundary_edges
    if n > cfg.MAX_ORACLE_EDGES:
        raise OracleError(f'oracle refuses {n} boundary edges '
                          f'(limit {cfg.MAX_ORACLE_EDGES})')
    if n % 2 == 0:
        raise slv.SingularMatrixError(
            f'P0 is singular for {n} boundary edges; apply '
            'ensure_odd_boundary to the mesh first')
    forms = frm.get_forms(m)
    rule = quad.quadrature_triangle(order or cfg.QUAD_ORDER)
    x, y, w = quad.physical_points(m, rule)
    interior = m.interior_edges
    A00 = forms.a00.toarray()
    Binv = slv.dense_solve(forms.p0.toarray(), np.eye(n))
    C = forms.coupling_ib.toarray()

    def lift(sol):
        coefs = np.zeros(m.num_edges)
        coefs[interior] = sol
        return coefs

    def column(j):
        z = Binv[:, j]
        y0 = lift(slv.dense_solve(A00, -C @ z))
        zt = spc.tilde_extension(spc.BoundaryTrace(m, z))
        return _cr_values(m, y0, rule) + zt.values(rule.points)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            columns = list(pool.map(column, range(n)))
    else:
        columns = [column(j) for j in range(n)]
    Y = np.stack([c.ravel() for c in columns], axis=1)

    f_vals = np.broadcast_to(np.asarray(p.f(x, y), dtype=float), x.shape)
    load = frm.cr_moments(m, f_vals, rule)
    y_f = _cr_values(m, lift(slv.dense_solve(A00, load[interior])),
                     rule).ravel()
    y_d = np.broadcast_to(np.asarray(p.y_d(x, y), dtype=float),
                          x.shape).ravel()
    wv = w.ravel()
    M = forms.boundary_mass.toarray()
    H = Y.T @ (wv[:, None] * Y) + p.alpha * Binv.T @ M @ Binv
    H = 0.5 * (H + H.T)
    d = y_d - y_f
    return ReducedQP(H, Y.T @ (wv * d), 0.5 * float(wv @ (d * d)))


def _projected_residual(qp, u, bounds):
    return float(np.linalg.norm(
        u - np.clip(u - qp.gradient(u), bounds.u_a, bounds.u_b)))


def _polish(qp, u, bounds):
    """Exact solve with the bound-fixed components of u held fixed."""
    g = qp.gradient(u)
    span = bounds.u_b - bounds.u_a
    lo = (u <= bounds.u_a + 1e-9 * span) & (g > 0)
    hi = (u >= bounds.u_b - 1e-9 * span) & (g < 0)
    free = ~(lo | hi)
    cand = np.where(lo, bounds.u_a, np.where(hi, bounds.u_b, u))
    if np.any(free):
        H = qp.hessian
        rhs = qp.linear[free] - H[np.ix_(free, ~free)] @ cand[~free]
        cand[free] = slv.dense_solve(H[np.ix_(free, free)], rhs)
    return np.clip(cand, bounds.u_a, bounds.u_b)


def solve_box_qp(qp: ReducedQP, bounds, tol: float = ORACLE_TOL,
                 max_iter: int = PG_MAX_ITER) -> np.ndarray:
    n = len(qp.linear)
    lam = slv.dense_eig_max(qp.hessian)
    step = 1.0 / lam
    u = np.clip(np.zeros(n), bounds.u_a, bounds.u_b)
    scale = tol * (1.0 + np.linalg.norm(qp.linear) + lam)
    res = _projected_residual(qp, u, bounds)
    for rnd in range(POLISH_ROUNDS):
        # identify the active set by projected gradient, then solve exactly
        for k in range(max_iter // POLISH_ROUNDS):
            if res <= max(scale, 1e-8 * 0.1 ** rnd):
                break
            u = np.clip(u - step * qp.gradient(u), bounds.u_a, bounds.u_b)
            res = _projected_residual(qp, u, bounds)
        cand = _polish(qp, u, bounds)
        cand_res = _projected_residual(qp, cand, bounds)
        if cand_res <= res:
            u, res = cand, cand_res
        if res <= scale:
            logger.debug('box QP solved after %d rounds, residual %.3e',
                         rnd + 1, res)
            return u
    raise slv.NotConvergedError(
        f'box QP oracle stalled at residual {res:.3e}', residual=res,
        iterations=max_iter)


def qp_oracle(p, order: int = None, max_workers: int = None
              ) -> spc.BoundaryControl:
    qp = build_reduced_qp(p, order, max_workers)
    u = solve_box_qp(qp, p.bounds)
    return spc.BoundaryControl(p.mesh, u)


def oracle_deviation(p, solution) -> tuple:
    """L2(Gamma) control distance and objective gap to the oracle."""
    qp = build_reduced_qp(p)
    u = solve_box_qp(qp, p.bounds)
    diff = solution.control.coefficients - u
    dist = float(np.sqrt(np.sum(p.mesh.boundary_lengths * diff * diff)))
    return dist, abs(solution.objective - qp.objective(u))

