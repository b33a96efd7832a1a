"""
Functions on the boundary parameterised by arclength, and L2 distances
between functions living on different meshes of one domain.
"""
import numpy as np

import fespace.quadrature as quad
import fespace.spaces as spc
import mesh.triangulation as tri

CONSTANT = 'constant'
LINEAR = 'linear'
GAUSS_POINTS = 5
MERGE_TOL = 1e-12
PERIMETER_TOL = 1e-9


class BoundaryField:
    """
    Piecewise constant (one value per interval) or continuous piecewise
    linear (one value per breakpoint) function of arclength s in
    [0, perimeter]. Breakpoints include every corner, so positions are
    linear in s between them.
    """
    def __init__(self, breaks, xy, values, kind: str):
        self.breaks = np.asarray(breaks, dtype=float)
        self.xy = np.asarray(xy, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.kind = kind
        n = len(self.breaks) - 1
        if kind == CONSTANT and len(self.values) != n:
            raise ValueError(f'Bad length {len(self.values)} for {n} '
                             'intervals')
        if kind == LINEAR and len(self.values) != n + 1:
            raise ValueError(f'Bad length {len(self.values)} for {n + 1} '
                             'breakpoints')
        if kind not in (CONSTANT, LINEAR):
            raise ValueError(f'Bad value for {kind=}')

    @property
    def perimeter(self) -> float:
        return float(self.breaks[-1])

    @property
    def origin(self) -> np.ndarray:
        return self.xy[0]

    @classmethod
    def _geometry(cls, m: tri.Mesh):
        bv = m.boundary_vertices
        xy = np.vstack([m.vertices[bv], m.vertices[bv[:1]]])
        return m.boundary_arclength, xy

    @classmethod
    def from_control(cls, u: spc.BoundaryControl) -> 'BoundaryField':
        breaks, xy = cls._geometry(u.mesh)
        return cls(breaks, xy, u.coefficients, CONSTANT)

    @classmethod
    def from_trace(cls, z: spc.BoundaryTrace) -> 'BoundaryField':
        breaks, xy = cls._geometry(z.mesh)
        values = np.concatenate([z.coefficients, z.coefficients[:1]])
        return cls(breaks, xy, values, LINEAR)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == LINEAR:
            return np.interp(s, self.breaks, self.values)
        idx = np.searchsorted(self.breaks, s, side='right') - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def position(self, s) -> tuple:
        s = np.asarray(s, dtype=float)
        return (np.interp(s, self.breaks, self.xy[:, 0]),
                np.interp(s, self.breaks, self.xy[:, 1]))


def _merged_breaks(*fields):
    breaks = np.unique(np.concatenate([f.breaks for f in fields]))
    scale = MERGE_TOL * fields[0].perimeter
    keep = np.concatenate([[True], np.diff(breaks) > scale])
    return breaks[keep]


def boundary_l2_distance(a: BoundaryField, b, arclength: bool = False
                         ) -> float:
    """
    ||a - b||_{L2(Gamma)}; b is another BoundaryField or a callable
    g(x, y), or g(s) of arclength when arclength is set. Gauss points
    on every interval of the merged partition keep jumps out of the
    integrand.
    """
    fields = [a]
    if isinstance(b, BoundaryField):
        if abs(a.perimeter - b.perimeter) > PERIMETER_TOL * a.perimeter:
            raise ValueError(f'Bad boundary pair: perimeters {a.perimeter} '
                             f'and {b.perimeter}')
        if np.linalg.norm(a.origin - b.origin) > PERIMETER_TOL * a.perimeter:
            raise ValueError('Bad boundary pair: the cycles start at '
                             f'{tuple(a.origin)} and {tuple(b.origin)}')
        fields.append(b)
    breaks = _merged_breaks(*fields)
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    s = 0.5 * (hi - lo) * nodes[None, :] + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * weights[None, :]
    if isinstance(b, BoundaryField):
        other = b(s)
    elif arclength:
        other = np.asarray(b(s), dtype=float)
    else:
        other = np.asarray(b(*a.position(s)), dtype=float)
    diff = a(s) - other
    return float(np.sqrt(np.sum(w * diff * diff)))


def domain_l2_distance(coarse, fine, order: int = 6) -> float:
    """
    ||coarse - fine||_{L2} for discrete functions on two meshes of one
    domain, integrated with the fine mesh's quadrature; coarse is found
    at those points by point location. fine may also be a callable.
    """
    if callable(fine) and not hasattr(fine, 'values'):
        return spc.l2_error(coarse, fine, order)
    rule = quad.quadrature_triangle(order)
    x, y, w = quad.physical_points(fine.mesh, rule)
    tris, bary = tri.locate_points(coarse.mesh,
                                   np.column_stack([x.ravel(), y.ravel()]))
    diff = fine.values(rule.points).ravel() - coarse.evaluate(tris, bary)
    return float(np.sqrt(np.sum(w.ravel() * diff * diff)))
