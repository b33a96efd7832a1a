"""
Discrete function spaces on a Mesh.

    CrFunction       Crouzeix-Raviart, one edge-mean value per edge
    W1Function       continuous piecewise linear, one value per vertex
    BrokenP1Function piecewise linear, three vertex values per triangle
    EnrichedFunction quadratic, vertex values plus edge means
    BoundaryControl  piecewise constant on the boundary, cycle order
    BoundaryTrace    continuous piecewise linear on the boundary

Every function can be evaluated at barycentric points of chosen
triangles (evaluate), at one barycentric rule on all triangles (values)
and differentiated (gradients_at).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

import fespace.quadrature as quad
import mesh.triangulation as tri

logger = logging.getLogger(__name__)

V0_TOL = 1e-14
EDGE_ORDER = 6
ENERGY_ORDER = 2


class SpaceError(ValueError):
    pass


def _coefficients(obj, expected, what):
    coefs = np.array(obj.coefficients, dtype=float).reshape(-1)
    if coefs.shape[0] != expected:
        raise SpaceError(f'Bad length for {what}: {coefs.shape[0]} '
                         f'coefficients, expected {expected}')
    coefs.setflags(write=False)
    object.__setattr__(obj, 'coefficients', coefs)


class _Evaluable:
    """Shared plumbing: subclasses provide local_basis / local_coefs."""

    def values(self, points) -> np.ndarray:
        """Values at barycentric points (nq, 3) on every triangle."""
        points = np.asarray(points, dtype=float)
        basis = self._basis(points)
        return np.einsum('tj,qj->tq', self._local(), basis)

    def evaluate(self, tri_ids, bary) -> np.ndarray:
        tri_ids = np.asarray(tri_ids, dtype=int)
        bary = np.broadcast_to(np.asarray(bary, dtype=float),
                               tri_ids.shape + (3,))
        basis = self._basis(bary)
        return np.sum(self._local()[tri_ids] * basis, axis=-1)

    def __add__(self, other):
        return CompositeFunction((self, other))


@dataclass(frozen=True, eq=False)
class CrFunction(_Evaluable):
    mesh: tri.Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        _coefficients(self, self.mesh.num_edges, 'CrFunction')

    def _local(self):
        return self.coefficients[self.mesh.tri_edges]

    @staticmethod
    def _basis(bary):
        # phi_i = 1 - 2 lambda_i belongs to the edge opposite vertex i
        return 1.0 - 2.0 * bary

    def gradients(self) -> np.ndarray:
        return -2.0 * np.einsum('ti,tid->td', self._local(),
                                self.mesh.bary_grads)

    def gradients_at(self, points) -> np.ndarray:
        g = self.gradients()
        return np.broadcast_to(g[:, None, :], (g.shape[0], len(points), 2))

    def in_v0(self) -> bool:
        bnd = self.coefficients[self.mesh.boundary_cycle]
        scale = max(1.0, float(np.max(np.abs(self.coefficients), initial=0)))
        return bool(np.all(np.abs(bnd) <= V0_TOL * scale))

    def __add__(self, other):
        if isinstance(other, CrFunction) and other.mesh is self.mesh:
            return CrFunction(self.mesh, self.coefficients + other.coefficients)
        return CompositeFunction((self, other))


@dataclass(frozen=True, eq=False)
class W1Function(_Evaluable):
    mesh: tri.Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        _coefficients(self, self.mesh.num_vertices, 'W1Function')

    def _local(self):
        return self.coefficients[self.mesh.triangles]

    @staticmethod
    def _basis(bary):
        return bary

    def gradients(self) -> np.ndarray:
        return np.einsum('ti,tid->td', self._local(), self.mesh.bary_grads)

    def gradients_at(self, points) -> np.ndarray:
        g = self.gradients()
        return np.broadcast_to(g[:, None, :], (g.shape[0], len(points), 2))


@dataclass(frozen=True, eq=False)
class BrokenP1Function(_Evaluable):
    """Piecewise linear, possibly discontinuous; values at local vertices."""
    mesh: tri.Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        coefs = np.array(self.coefficients, dtype=float)
        if coefs.shape != (self.mesh.num_triangles, 3):
            raise SpaceError(f'Bad shape for BrokenP1Function: {coefs.shape}')
        coefs.setflags(write=False)
        object.__setattr__(self, 'coefficients', coefs)

    def _local(self):
        return self.coefficients

    @staticmethod
    def _basis(bary):
        return bary

    def gradients(self) -> np.ndarray:
        return np.einsum('ti,tid->td', self.coefficients, self.mesh.bary_grads)

    def gradients_at(self, points) -> np.ndarray:
        g = self.gradients()
        return np.broadcast_to(g[:, None, :], (g.shape[0], len(points), 2))


@dataclass(frozen=True, eq=False)
class EnrichedFunction(_Evaluable):
    """
    Quadratic on each triangle, fixed by vertex values and edge means.
    Each edge mean mu is turned into a midpoint value
    (6 mu - q(a) - q(b)) / 4, which Simpson's rule makes exact.
    """
    mesh: tri.Mesh
    vertex_values: np.ndarray
    edge_means: np.ndarray

    def __post_init__(self):
        vv = np.array(self.vertex_values, dtype=float).reshape(-1)
        em = np.array(self.edge_means, dtype=float).reshape(-1)
        if vv.shape[0] != self.mesh.num_vertices:
            raise SpaceError(f'Bad length for vertex values: {vv.shape[0]}')
        if em.shape[0] != self.mesh.num_edges:
            raise SpaceError(f'Bad length for edge means: {em.shape[0]}')
        vv.setflags(write=False)
        em.setflags(write=False)
        object.__setattr__(self, 'vertex_values', vv)
        object.__setattr__(self, 'edge_means', em)

    def _local(self):
        q = self.vertex_values[self.mesh.triangles]
        mu = self.edge_means[self.mesh.tri_edges]
        mids = (6.0 * mu - np.roll(q, -1, axis=1) - np.roll(q, -2, axis=1)) / 4
        return np.concatenate([q, mids], axis=1)

    @staticmethod
    def _basis(bary):
        lam1 = np.roll(bary, -1, axis=-1)
        lam2 = np.roll(bary, -2, axis=-1)
        return np.concatenate([bary * (2.0 * bary - 1.0), 4.0 * lam1 * lam2],
                              axis=-1)

    def gradients_at(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        G = self.mesh.bary_grads
        G1 = np.roll(G, -1, axis=1)
        G2 = np.roll(G, -2, axis=1)
        lam = points
        lam1 = np.roll(points, -1, axis=-1)
        lam2 = np.roll(points, -2, axis=-1)
        vert = np.einsum('qi,tid->tqid', 4.0 * lam - 1.0, G)
        edge = 4.0 * (np.einsum('qi,tid->tqid', lam1, G2)
                      + np.einsum('qi,tid->tqid', lam2, G1))
        local = self._local()
        return (np.einsum('ti,tqid->tqd', local[:, :3], vert)
                + np.einsum('ti,tqid->tqd', local[:, 3:], edge))


@dataclass(frozen=True, eq=False)
class CompositeFunction(_Evaluable):
    """Pointwise sum of functions living on the same mesh."""
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.parts:
            raise SpaceError('CompositeFunction needs at least one part')
        meshes = {id(p.mesh) for p in self.parts}
        if len(meshes) != 1:
            raise SpaceError('CompositeFunction parts live on different '
                             'meshes')

    @property
    def mesh(self):
        return self.parts[0].mesh

    def values(self, points) -> np.ndarray:
        return sum(p.values(points) for p in self.parts)

    def evaluate(self, tri_ids, bary) -> np.ndarray:
        return sum(p.evaluate(tri_ids, bary) for p in self.parts)

    def gradients_at(self, points) -> np.ndarray:
        return sum(p.gradients_at(points) for p in self.parts)

    def __add__(self, other):
        return CompositeFunction(self.parts + (other,))


@dataclass(frozen=True, eq=False)
class BoundaryControl:
    """One value per boundary edge, in boundary cycle order."""
    mesh: tri.Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        _coefficients(self, self.mesh.num_boundary_edges, 'BoundaryControl')

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.mesh.boundary_lengths
                                    * self.coefficients ** 2)))


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """
    One value per boundary vertex, in cycle order; vertex i is where
    boundary edge i - 1 ends and boundary edge i starts.
    """
    mesh: tri.Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        _coefficients(self, len(self.mesh.boundary_vertices), 'BoundaryTrace')

    def l2_norm(self) -> float:
        a = self.coefficients
        b = np.roll(a, -1)
        length = self.mesh.boundary_lengths
        return float(np.sqrt(np.sum(length * (a * a + a * b + b * b) / 3.0)))

    def edge_means(self) -> np.ndarray:
        return 0.5 * (self.coefficients + np.roll(self.coefficients, -1))


def eval_cr(v: CrFunction, t: int, point) -> float:
    """Value of v on triangle t at barycentric coordinates point."""
    return float(v.evaluate(np.array([t]), np.asarray(point)[None, :])[0])


def edge_side_bary(m: tri.Mesh, side: int, rule: quad.QuadratureRule
                   ) -> tuple:
    """
    For every edge with a triangle on the given side: edge ids, triangle
    ids and barycentric coordinates (m, nq, 3) of the rule's points, the
    rule running from edges[e, 0] to edges[e, 1].
    """
    edge_ids = np.flatnonzero(m.edge_tris[:, side] != tri.NO_TRIANGLE)
    t = m.edge_tris[edge_ids, side]
    k = m.edge_local[edge_ids, side]
    first = (k + 1) % 3
    second = (k + 2) % 3
    starts_first = m.triangles[t, first] == m.edges[edge_ids, 0]
    la = np.where(starts_first, first, second)
    lb = np.where(starts_first, second, first)
    bary = np.zeros((len(edge_ids), rule.size, 3))
    rows = np.arange(len(edge_ids))[:, None]
    bary[rows, :, la[:, None]] = rule.points[None, :, 0]
    bary[rows, :, lb[:, None]] = rule.points[None, :, 1]
    return edge_ids, t, bary


def _side_values(func, side, rule):
    m = func.mesh
    edge_ids, t, bary = edge_side_bary(m, side, rule)
    vals = func.evaluate(np.repeat(t[:, None], rule.size, axis=1), bary)
    return edge_ids, vals


def edge_means(func, order: int = EDGE_ORDER, side: int = 0) -> np.ndarray:
    """Mean of func over every edge, taken from the given side."""
    rule = quad.quadrature_edge(order)
    m = func.mesh
    means = np.full(m.num_edges, np.nan)
    edge_ids, vals = _side_values(func, side, rule)
    means[edge_ids] = vals @ rule.weights
    return means


def edge_jump(func, order: int = EDGE_ORDER) -> np.ndarray:
    """
    Jump side 0 minus side 1 at the edge rule points, shape (ne, nq);
    on boundary edges the jump is the trace.
    """
    rule = quad.quadrature_edge(order)
    m = func.mesh
    out = np.zeros((m.num_edges, rule.size))
    ids0, v0 = _side_values(func, 0, rule)
    out[ids0] = v0
    ids1, v1 = _side_values(func, 1, rule)
    out[ids1] -= v1
    return out


def edge_average(func, order: int = EDGE_ORDER) -> np.ndarray:
    """Average of both sides; the trace on boundary edges."""
    rule = quad.quadrature_edge(order)
    m = func.mesh
    out = np.zeros((m.num_edges, rule.size))
    ids0, v0 = _side_values(func, 0, rule)
    out[ids0] = v0
    ids1, v1 = _side_values(func, 1, rule)
    out[ids1] = 0.5 * (out[ids1] + v1)
    return out


def interpolate_cr(m: tri.Mesh, f, order: int = EDGE_ORDER) -> CrFunction:
    """
    Edge means of f. f is a callable f(x, y) or a discrete function on m,
    whose edge means are taken from the first triangle of each edge.
    """
    if hasattr(f, 'evaluate'):
        if f.mesh is not m:
            raise SpaceError('cannot interpolate a function from another mesh')
        return CrFunction(m, edge_means(f, order))
    rule = quad.quadrature_edge(order)
    x, y, w = quad.edge_points(m, np.arange(m.num_edges), rule)
    vals = np.asarray(f(x, y), dtype=float)
    return CrFunction(m, np.sum(w * vals, axis=1) / m.edge_lengths)


def interpolate_w1(m: tri.Mesh, f) -> W1Function:
    return W1Function(m, np.asarray(f(m.vertices[:, 0], m.vertices[:, 1]),
                                    dtype=float))


def zero_cr(m: tri.Mesh) -> CrFunction:
    return CrFunction(m, np.zeros(m.num_edges))


def enrich(v: CrFunction) -> EnrichedFunction:
    """
    The enrichment I_c: vertex values averaged over the triangles around
    each interior vertex, zero on boundary vertices, edge means kept.
    """
    if not v.in_v0():
        raise SpaceError('enrich needs a function with zero boundary '
                         'edge means')
    m = v.mesh
    local = v.coefficients[m.tri_edges]
    at_vertices = local.sum(axis=1)[:, None] - 2.0 * local
    total = np.zeros(m.num_vertices)
    count = np.zeros(m.num_vertices)
    np.add.at(total, m.triangles, at_vertices)
    np.add.at(count, m.triangles, 1.0)
    vertex_values = total / np.maximum(count, 1.0)
    vertex_values[m.is_boundary_vertex] = 0.0
    return EnrichedFunction(m, vertex_values, v.coefficients)


def tilde_extension(z: BoundaryTrace) -> W1Function:
    """z on the boundary vertices, zero at every interior vertex."""
    m = z.mesh
    coefs = np.zeros(m.num_vertices)
    coefs[m.boundary_vertices] = z.coefficients
    return W1Function(m, coefs)


def broken_energy(a, b) -> float:
    """a_pw(a, b): sum over triangles of the gradient inner product."""
    m = a.mesh
    rule = quad.quadrature_triangle(ENERGY_ORDER)
    ga = a.gradients_at(rule.points)
    gb = b.gradients_at(rule.points)
    w = m.areas[:, None] * rule.weights[None, :]
    return float(np.sum(w * np.sum(ga * gb, axis=-1)))


def l2_error(func, exact=None, order: int = 6) -> float:
    """||func - exact||_{L2}; exact is a callable f(x, y) or None."""
    rule = quad.quadrature_triangle(order)
    x, y, w = quad.physical_points(func.mesh, rule)
    diff = func.values(rule.points)
    if exact is not None:
        diff = diff - np.asarray(exact(x, y), dtype=float)
    return float(np.sqrt(np.sum(w * diff ** 2)))


def broken_h1_error(func, exact_grad=None, order: int = 6) -> float:
    """Broken H1 seminorm of func - exact; exact_grad(x, y) -> (gx, gy)."""
    rule = quad.quadrature_triangle(order)
    x, y, w = quad.physical_points(func.mesh, rule)
    diff = np.array(func.gradients_at(rule.points))
    if exact_grad is not None:
        gx, gy = exact_grad(x, y)
        diff[..., 0] -= gx
        diff[..., 1] -= gy
    return float(np.sqrt(np.sum(w * np.sum(diff ** 2, axis=-1))))
