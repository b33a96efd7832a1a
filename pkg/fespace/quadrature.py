"""
Symmetric quadrature on triangles and edges, in barycentric form.

Triangle rules of order p integrate polynomials of degree p exactly.
Edge rules of order 2n are the n-point Gauss-Legendre rules.
Weights are normalised to sum to one; multiply by |T| or |e|.
"""
from dataclasses import dataclass

import numpy as np

TRIANGLE_ORDERS = (2, 4, 6)
EDGE_ORDERS = (2, 4, 6)


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _dunavant(order):
    if order == 2:
        groups = [_orbit3(1.0 / 6.0, 1.0 / 3.0)]
    elif order == 4:
        groups = [_orbit3(0.445948490915965, 0.223381589678011),
                  _orbit3(0.091576213509771, 0.109951743655322)]
    else:
        groups = [_orbit3(0.249286745170910, 0.116786275726379),
                  _orbit3(0.063089014491502, 0.050844906370207),
                  _orbit6(0.053145049844817, 0.310352451033784,
                          0.082851075618374)]
    points = np.array([p for pts, _ in groups for p in pts])
    weights = np.array([w for _, ws in groups for w in ws])
    return points, weights / weights.sum()


def quadrature_triangle(order: int) -> QuadratureRule:
    if order not in TRIANGLE_ORDERS:
        raise QuadratureError(f'Bad value for {order=}, '
                              f'supported: {TRIANGLE_ORDERS}')
    points, weights = _dunavant(order)
    return QuadratureRule(points, weights, order)


def quadrature_edge(order: int) -> QuadratureRule:
    """Points are (1 - s, s) for s in (0, 1)."""
    if order not in EDGE_ORDERS:
        raise QuadratureError(f'Bad value for {order=}, '
                              f'supported: {EDGE_ORDERS}')
    nodes, weights = np.polynomial.legendre.leggauss(order // 2)
    s = 0.5 * (nodes + 1.0)
    return QuadratureRule(np.column_stack([1.0 - s, s]), 0.5 * weights, order)


def physical_points(mesh, rule: QuadratureRule) -> tuple:
    """Coordinates (nt, nq) x, y and weights (nt, nq) summing to |T|."""
    p = mesh.vertices[mesh.triangles]
    xy = np.einsum('qi,tid->tqd', rule.points, p)
    weights = mesh.areas[:, None] * rule.weights[None, :]
    return xy[..., 0], xy[..., 1], weights


def integrate_triangles(mesh, f, order: int) -> np.ndarray:
    """Per-triangle integrals of a callable f(x, y)."""
    rule = quadrature_triangle(order)
    x, y, w = physical_points(mesh, rule)
    return np.sum(w * np.asarray(f(x, y), dtype=float), axis=1)


def edge_points(mesh, edge_ids, rule: QuadratureRule) -> tuple:
    """Coordinates (m, nq) along edges[edge_ids] and weights summing to |e|."""
    ends = mesh.vertices[mesh.edges[edge_ids]]
    xy = np.einsum('qi,eid->eqd', rule.points, ends)
    weights = mesh.edge_lengths[edge_ids][:, None] * rule.weights[None, :]
    return xy[..., 0], xy[..., 1], weights
