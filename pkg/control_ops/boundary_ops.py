"""
The boundary operators linking piecewise constant controls to continuous
piecewise linear traces: P0 (edge means of a trace), its inverse P1~,
the box projection and the L2 operator norm of P1~.
"""
import logging
from dataclasses import dataclass

import numpy as np

import assembly.forms as frm
import fespace.quadrature as quad
import fespace.spaces as spc
import linalg.solvers as slv
import mesh.triangulation as tri

logger = logging.getLogger(__name__)

EDGE_ORDER = 6
HALF = 0.5


@dataclass(frozen=True)
class BoxBounds:
    u_a: float
    u_b: float

    def __post_init__(self):
        for name in ('u_a', 'u_b'):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f'Bad value for {name}={val!r}')
            object.__setattr__(self, name, val)
        if not self.u_a < self.u_b:
            raise ValueError(f'Bad bounds: need u_a < u_b, got '
                             f'{self.u_a=}, {self.u_b=}')

    def contains(self, values) -> bool:
        values = np.asarray(values)
        return bool(np.all((values >= self.u_a) & (values <= self.u_b)))

    def as_tuple(self) -> tuple:
        return (self.u_a, self.u_b)


def boundary_edge_points(m: tri.Mesh, rule: quad.QuadratureRule) -> tuple:
    """
    Rule points on every boundary edge in cycle order, running in the
    cycle direction: x, y, arclength s and weights, each (N, nq).
    """
    start = m.vertices[m.boundary_vertices]
    end = np.roll(start, -1, axis=0)
    t = rule.points[:, 1]
    xy = (start[:, None, :] * (1.0 - t)[None, :, None]
          + end[:, None, :] * t[None, :, None])
    L = m.boundary_lengths
    s = m.boundary_arclength[:-1, None] + L[:, None] * t[None, :]
    w = L[:, None] * rule.weights[None, :]
    return xy[..., 0], xy[..., 1], s, w


def p0_project(m: tri.Mesh, g, arclength: bool = False,
               order: int = EDGE_ORDER) -> spc.BoundaryControl:
    """
    Edge means of g over the boundary edges. g is a BoundaryTrace (exact,
    B z) or a callable g(x, y), or g(s) of arclength when arclength is set.
    """
    if isinstance(g, spc.BoundaryTrace):
        if g.mesh is not m:
            raise spc.SpaceError('trace lives on another mesh')
        return spc.BoundaryControl(m, g.edge_means())
    rule = quad.quadrature_edge(order)
    x, y, s, w = boundary_edge_points(m, rule)
    vals = g(s) if arclength else g(x, y)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), x.shape)
    return spc.BoundaryControl(m, np.sum(w * vals, axis=1)
                               / m.boundary_lengths)


def _check_odd(m: tri.Mesh) -> int:
    n = m.num_boundary_edges
    if n % 2 == 0:
        raise slv.SingularMatrixError(
            f'P0 is singular on a boundary with an even number of edges '
            f'({n}); apply ensure_odd_boundary to the mesh first')
    return n


def _values(w):
    return np.asarray(getattr(w, 'coefficients', w), dtype=float)


def p1_tilde(u) -> spc.BoundaryTrace:
    """The trace z with edge means B z = u."""
    m = u.mesh
    n = _check_odd(m)
    half = np.full(n, HALF)
    z = slv.cyclic_bidiagonal_solve(half, half, u.coefficients, upper=True)
    return spc.BoundaryTrace(m, z)


def p1_tilde_transpose(m: tri.Mesh, w) -> np.ndarray:
    """Solve B^T x = w; w is indexed by boundary vertices."""
    n = _check_odd(m)
    half = np.full(n, HALF)
    return slv.cyclic_bidiagonal_solve(half, half, _values(w), upper=False)


def p1_tilde_matrix(m: tri.Mesh) -> np.ndarray:
    """Dense B^-1."""
    n = _check_odd(m)
    B = frm.get_forms(m).p0.toarray()
    return slv.dense_solve(B, np.eye(n))


def p1_tilde_operator_norm(m: tri.Mesh) -> float:
    """
    sup ||P1~ u||_{L2(Gamma)} / ||u||_{L2(Gamma)} over controls u: the
    root of the top eigenvalue of D^-1/2 B^-T M B^-1 D^-1/2.
    """
    Binv = p1_tilde_matrix(m)
    M = frm.get_forms(m).boundary_mass.toarray()
    K = Binv.T @ M @ Binv
    scale = 1.0 / np.sqrt(m.boundary_lengths)
    S = scale[:, None] * K * scale[None, :]
    S = 0.5 * (S + S.T)
    norm = float(np.sqrt(slv.dense_eig_max(S)))
    logger.debug('P1~ operator norm %.6f on %r', norm, m)
    return norm


def regular_polygon_p1_norm(n: int) -> float:
    """Operator norm of P1~ on n equal boundary edges, n odd."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f'Bad value for {n=}')
    return float(np.sqrt(2.0 / 3.0 + 1.0 / (3.0 * np.sin(np.pi / (2 * n))
                                             ** 2)))


def clamp_box(w, bounds: BoxBounds):
    """min(u_b, max(u_a, w)), keeping the type of w."""
    clipped = np.clip(_values(w), bounds.u_a, bounds.u_b)
    if isinstance(w, (spc.BoundaryControl, spc.BoundaryTrace)):
        return type(w)(w.mesh, clipped)
    return clipped
