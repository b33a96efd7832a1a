"""
Sparse assembly of the discrete forms.

Edge ids index Crouzeix-Raviart basis functions phi_e, vertex ids index
the P1 hats psi_p, boundary positions index the cycle ordered boundary
edges (controls) and boundary vertices (traces).
"""
import logging
import threading
import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

import config.settings as cfg
import fespace.quadrature as quad
import linalg.solvers as slv
import mesh.triangulation as tri

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-14


def check_nondegenerate(m: tri.Mesh) -> None:
    bad = np.flatnonzero(m.areas <= DEGENERATE_TOL * m.h ** 2)
    if len(bad):
        raise tri.MeshError(f'degenerate triangles {bad[:10].tolist()} '
                            f'(area <= {DEGENERATE_TOL} h^2)')


def _gram(m: tri.Mesh) -> np.ndarray:
    G = m.bary_grads
    return np.einsum('tid,tjd->tij', G, G)


def _scatter(rows, cols, vals, shape):
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=shape)
    return slv.to_csr(A)


def assemble_stiffness(m: tri.Mesh) -> sp.csr_matrix:
    """a_pw(phi_e, phi_f); local matrix 4 |T| G."""
    check_nondegenerate(m)
    local = 4.0 * m.areas[:, None, None] * _gram(m)
    rows = np.repeat(m.tri_edges[:, :, None], 3, axis=2)
    cols = np.repeat(m.tri_edges[:, None, :], 3, axis=1)
    return _scatter(rows, cols, local, (m.num_edges, m.num_edges))


def assemble_coupling(m: tri.Mesh) -> sp.csr_matrix:
    """C[e, p] = a_pw(psi_p, phi_e), shape (edges, vertices)."""
    check_nondegenerate(m)
    local = -2.0 * m.areas[:, None, None] * _gram(m)
    rows = np.repeat(m.tri_edges[:, :, None], 3, axis=2)
    cols = np.repeat(m.triangles[:, None, :], 3, axis=1)
    return _scatter(rows, cols, local, (m.num_edges, m.num_vertices))


def assemble_mass(m: tri.Mesh) -> sp.csr_matrix:
    """The CR basis is L2 orthogonal on each triangle: |T| / 3 I."""
    local = np.broadcast_to((m.areas / 3.0)[:, None], (m.num_triangles, 3))
    return _scatter(m.tri_edges, m.tri_edges, np.array(local),
                    (m.num_edges, m.num_edges))


def cr_moments(m: tri.Mesh, values, rule: quad.QuadratureRule) -> np.ndarray:
    """(r, phi_e) for r given at the rule's points, shape (nt, nq)."""
    w = m.areas[:, None] * rule.weights[None, :]
    basis = 1.0 - 2.0 * rule.points
    local = np.einsum('tq,qi->ti', w * values, basis)
    out = np.zeros(m.num_edges)
    np.add.at(out, m.tri_edges, local)
    return out


def p1_moments(m: tri.Mesh, values, rule: quad.QuadratureRule) -> np.ndarray:
    """(r, psi_p) for r given at the rule's points, shape (nt, nq)."""
    w = m.areas[:, None] * rule.weights[None, :]
    local = np.einsum('tq,qi->ti', w * values, rule.points)
    out = np.zeros(m.num_vertices)
    np.add.at(out, m.triangles, local)
    return out


def assemble_load(m: tri.Mesh, f, order: int = None) -> np.ndarray:
    """(f, phi_e) with f a callable f(x, y)."""
    rule = quad.quadrature_triangle(order or cfg.QUAD_ORDER)
    x, y, _ = quad.physical_points(m, rule)
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    return cr_moments(m, vals, rule)


def assemble_vertex_load(m: tri.Mesh, f, order: int = None) -> np.ndarray:
    """(f, psi_p) with f a callable f(x, y)."""
    rule = quad.quadrature_triangle(order or cfg.QUAD_ORDER)
    x, y, _ = quad.physical_points(m, rule)
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    return p1_moments(m, vals, rule)


def _boundary_pairs(m: tri.Mesh):
    n = len(m.boundary_vertices)
    i = np.arange(n)
    return i, (i + 1) % n


def assemble_boundary_mass(m: tri.Mesh) -> sp.csr_matrix:
    """Mass of the boundary vertex hats; edge block L / 6 [[2, 1], [1, 2]]."""
    a, b = _boundary_pairs(m)
    L = m.boundary_lengths
    n = len(a)
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([2 * L, L, L, 2 * L]) / 6.0
    return _scatter(rows, cols, vals, (n, n))


def assemble_p0_matrix(m: tri.Mesh) -> sp.csr_matrix:
    """
    B[i, p] = edge mean of psi_p over boundary edge i: one half for both
    ends of the edge, which are boundary vertices i and i + 1 (cyclic).
    """
    a, b = _boundary_pairs(m)
    n = len(a)
    vals = np.full(2 * n, 0.5)
    return _scatter(np.concatenate([a, a]), np.concatenate([a, b]), vals,
                    (n, n))


def assemble_control_metric(m: tri.Mesh) -> sp.dia_matrix:
    """D = diag(|e|), the L2 inner product of piecewise constant controls."""
    return sp.diags(m.boundary_lengths)


@dataclass(eq=False)
class AssembledForms:
    mesh: tri.Mesh
    stiffness: sp.csr_matrix
    a00: sp.csr_matrix
    mass: sp.csr_matrix
    coupling: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    p0: sp.csr_matrix
    metric: sp.dia_matrix

    @property
    def interior_edges(self) -> np.ndarray:
        return self.mesh.interior_edges

    @cached_property
    def coupling_ib(self) -> sp.csr_matrix:
        """Rows of interior edges, columns of boundary vertices (cycle)."""
        return slv.to_csr(self.coupling[self.mesh.interior_edges][
            :, self.mesh.boundary_vertices])

    @cached_property
    def _solvers(self) -> dict:
        return {}

    def a00_solver(self, method: str = None) -> slv.SpdSolver:
        method = method or cfg.linear_solver()
        with _forms_lock:
            if method not in self._solvers:
                self._solvers[method] = slv.SpdSolver(self.a00, method)
        return self._solvers[method]

    @cached_property
    def boundary_mass_solver(self) -> slv.SpdSolver:
        return slv.SpdSolver(self.boundary_mass, cfg.LU)

    def solve_interior(self, rhs, method: str = None) -> np.ndarray:
        """A00 x = rhs, lifted to a full edge vector with zero boundary."""
        out = np.zeros(self.mesh.num_edges)
        out[self.mesh.interior_edges] = self.a00_solver(method)(rhs)
        return out


def assemble_forms(m: tri.Mesh) -> AssembledForms:
    stiffness = assemble_stiffness(m)
    interior = m.interior_edges
    forms = AssembledForms(
        mesh=m,
        stiffness=stiffness,
        a00=slv.to_csr(stiffness[interior][:, interior]),
        mass=assemble_mass(m),
        coupling=assemble_coupling(m),
        boundary_mass=assemble_boundary_mass(m),
        p0=assemble_p0_matrix(m),
        metric=assemble_control_metric(m),
    )
    logger.debug('assembled forms for %r', m)
    return forms


_forms_cache = weakref.WeakKeyDictionary()
_forms_lock = threading.Lock()


def get_forms(m: tri.Mesh) -> AssembledForms:
    with _forms_lock:
        forms = _forms_cache.get(m)
        if forms is None:
            forms = assemble_forms(m)
            _forms_cache[m] = forms
    return forms

