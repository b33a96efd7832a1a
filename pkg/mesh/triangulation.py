"""
Conforming triangulations of convex polygons.

A Mesh is built once from vertex coordinates and counterclockwise
triangles; everything else (edges, adjacency, the boundary cycle,
geometric quantities) is derived from those two arrays. Edge k of a
triangle is always the edge opposite its local vertex k.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

import config.settings as cfg

logger = logging.getLogger(__name__)

NO_TRIANGLE = -1
NOT_ON_BOUNDARY = -1
DEGENERATE_AREA = 1e-14
AREA_TOL = 1e-12
LOCATE_CANDIDATES = 12
LOCATE_TOL = 1e-10

VERTEX_TAG = 'v'
TRIANGLE_TAG = 't'


class MeshError(ValueError):
    pass


class Vertex(NamedTuple):
    id: int
    position: tuple
    on_boundary: bool


class Edge(NamedTuple):
    id: int
    endpoints: tuple
    triangles: tuple
    midpoint: tuple
    length: float
    boundary_index: int | None


class Triangle(NamedTuple):
    id: int
    vertices: tuple
    edges: tuple
    area: float
    diameter: float


def _frozen(arr, dtype):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    edge_tris: np.ndarray
    edge_local: np.ndarray
    edge_counts: np.ndarray
    boundary_cycle: np.ndarray
    boundary_vertices: np.ndarray
    cycle_closed: bool

    def __repr__(self):
        return (f'Mesh(vertices={self.num_vertices}, edges={self.num_edges}, '
                f'triangles={self.num_triangles}, '
                f'boundary_edges={self.num_boundary_edges})')

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_boundary_edges(self) -> int:
        return int(np.count_nonzero(self.edge_counts == 1))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def bary_grads(self) -> np.ndarray:
        """
        Gradients of the barycentric coordinates, shape (nt, 3, 2).
        grad lambda_i is the edge vector opposite vertex i rotated by
        +90 degrees over twice the signed area.
        """
        p = self.vertices[self.triangles]
        d = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        rot = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return rot / (2.0 * self.signed_areas[:, None, None])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def angles(self) -> np.ndarray:
        """Interior angle at each local vertex, radians, shape (nt, 3)."""
        p = self.vertices[self.triangles]
        u = np.roll(p, -1, axis=1) - p
        w = np.roll(p, -2, axis=1) - p
        cos = (np.sum(u * w, axis=2)
               / (np.linalg.norm(u, axis=2) * np.linalg.norm(w, axis=2)))
        return np.arccos(np.clip(cos, -1.0, 1.0))

    @property
    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        return float(np.degrees(self.angles.min()))

    @cached_property
    def boundary_edge_index(self) -> np.ndarray:
        index = np.full(self.num_edges, NOT_ON_BOUNDARY, dtype=int)
        index[self.boundary_cycle] = np.arange(len(self.boundary_cycle))
        return index

    @cached_property
    def boundary_vertex_index(self) -> np.ndarray:
        index = np.full(self.num_vertices, NOT_ON_BOUNDARY, dtype=int)
        index[self.boundary_vertices] = np.arange(len(self.boundary_vertices))
        return index

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_counts == 2)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_vertex_index == NOT_ON_BOUNDARY)

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        return self.boundary_vertex_index != NOT_ON_BOUNDARY

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        """Lengths of the boundary edges in cycle order."""
        return self.edge_lengths[self.boundary_cycle]

    @cached_property
    def boundary_arclength(self) -> np.ndarray:
        """Arclength at each boundary vertex, cycle order, plus |Gamma|."""
        return np.concatenate([[0.0], np.cumsum(self.boundary_lengths)])

    @property
    def perimeter(self) -> float:
        return float(self.boundary_lengths.sum())

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def vertex(self, i: int) -> Vertex:
        return Vertex(int(i), tuple(self.vertices[i]),
                      bool(self.is_boundary_vertex[i]))

    def edge(self, i: int) -> Edge:
        tris = tuple(int(t) for t in self.edge_tris[i] if t != NO_TRIANGLE)
        bidx = int(self.boundary_edge_index[i])
        return Edge(int(i), tuple(int(v) for v in self.edges[i]), tris,
                    tuple(self.midpoints[i]), float(self.edge_lengths[i]),
                    None if bidx == NOT_ON_BOUNDARY else bidx)

    def triangle(self, i: int) -> Triangle:
        return Triangle(int(i), tuple(int(v) for v in self.triangles[i]),
                        tuple(int(e) for e in self.tri_edges[i]),
                        float(self.areas[i]), float(self.diameters[i]))

    def edge_endpoints_local(self, e: int, side: int) -> tuple:
        """
        Local indices, inside triangle edge_tris[e, side], of the two
        endpoints edges[e, 0] and edges[e, 1].
        """
        t = self.edge_tris[e, side]
        k = self.edge_local[e, side]
        first, second = (k + 1) % 3, (k + 2) % 3
        if self.triangles[t, first] == self.edges[e, 0]:
            return first, second
        return second, first


def _directed_boundary(triangles, tri_edges, edge_tris, edge_local,
                       boundary):
    t = edge_tris[boundary, 0]
    k = edge_local[boundary, 0]
    start = triangles[t, (k + 1) % 3]
    end = triangles[t, (k + 2) % 3]
    return start, end


def _chain_boundary(boundary, start, end):
    """
    Walk the directed boundary edges into one loop. Returns the edge ids
    in walking order and whether the walk closed over every edge.
    """
    if len(boundary) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), False
    leaving = {}
    branching = False
    for e, s in zip(boundary, start):
        if s in leaving:
            branching = True
        leaving.setdefault(int(s), int(e))
    end_of = dict(zip(boundary.tolist(), end.tolist()))
    start_of = dict(zip(boundary.tolist(), start.tolist()))
    first = leaving[int(start.min())]
    cycle = [first]
    closed = False
    while len(cycle) <= len(boundary):
        nxt = leaving.get(end_of[cycle[-1]])
        if nxt is None:
            break
        if nxt == first:
            closed = True
            break
        cycle.append(nxt)
    closed = closed and not branching and len(cycle) == len(boundary)
    cycle = np.array(cycle, dtype=int)
    verts = np.array([start_of[e] for e in cycle], dtype=int)
    return cycle, verts, closed


def build_mesh(vertices, triangles) -> Mesh:
    """
    Derive edges, adjacency and the boundary cycle from raw arrays.
    No geometric checks happen here; see validate().
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError(f'Bad shape for {vertices.shape=}')
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError(f'Bad shape for {triangles.shape=}')
    nt = triangles.shape[0]
    local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]],
                      triangles[:, [0, 1]]], axis=1)
    key = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1).reshape(nt, 3)
    ne = edges.shape[0]

    flat_e = tri_edges.reshape(-1)
    flat_t = np.repeat(np.arange(nt), 3)
    flat_k = np.tile(np.arange(3), nt)
    order = np.argsort(flat_e, kind='stable')
    counts = np.bincount(flat_e, minlength=ne)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sorted_e = flat_e[order]
    rank = np.arange(len(sorted_e)) - starts[sorted_e]
    keep = rank < 2
    edge_tris = np.full((ne, 2), NO_TRIANGLE, dtype=int)
    edge_local = np.full((ne, 2), NO_TRIANGLE, dtype=int)
    edge_tris[sorted_e[keep], rank[keep]] = flat_t[order][keep]
    edge_local[sorted_e[keep], rank[keep]] = flat_k[order][keep]

    boundary = np.flatnonzero(counts == 1)
    start, end = _directed_boundary(triangles, tri_edges, edge_tris,
                                    edge_local, boundary)
    cycle, bverts, closed = _chain_boundary(boundary, start, end)
    if not closed:
        logger.warning('boundary edges do not form one closed loop')
    return Mesh(vertices=_frozen(vertices, float),
                triangles=_frozen(triangles, int),
                edges=_frozen(edges, int),
                tri_edges=_frozen(tri_edges, int),
                edge_tris=_frozen(edge_tris, int),
                edge_local=_frozen(edge_local, int),
                edge_counts=_frozen(counts, int),
                boundary_cycle=_frozen(cycle, int),
                boundary_vertices=_frozen(bverts, int),
                cycle_closed=bool(closed))


def triangulate_unit_square(n: int) -> Mesh:
    """
    n x n squares, each cut by the diagonal from its lower-left to its
    upper-right corner.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f'Bad value for {n=}')
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    a = (i + j * (n + 1)).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    triangles = np.vstack([np.column_stack([a, b, c]),
                           np.column_stack([a, c, d])])
    return build_mesh(vertices, triangles)


def regular_polygon(n: int, radius: float = 1.0,
                    phase: float = np.pi / 2) -> np.ndarray:
    if n < 3:
        raise MeshError(f'Bad value for {n=}')
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


def check_convex(corners) -> list:
    """Diagnostics for a corner list; empty means convex and ccw."""
    corners = np.asarray(corners, dtype=float)
    if corners.ndim != 2 or corners.shape[1] != 2:
        return [f'Bad shape for {corners.shape=}']
    if len(corners) < 3:
        return [f'need at least 3 corners, got {len(corners)}']
    if not np.all(np.isfinite(corners)):
        return ['corner coordinates must be finite']
    d_in = corners - np.roll(corners, 1, axis=0)
    d_out = np.roll(corners, -1, axis=0) - corners
    cross = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
    scale = np.max(np.linalg.norm(d_in, axis=1)) ** 2
    return [f'corner {k} at {tuple(corners[k])} is reflex, collinear '
            'or the corners run clockwise'
            for k in np.flatnonzero(cross <= AREA_TOL * scale)]


def triangulate_polygon_fan(corners) -> Mesh:
    """Fan from the vertex average; one boundary edge per polygon side."""
    problems = check_convex(corners)
    if problems:
        raise MeshError('; '.join(problems))
    corners = np.asarray(corners, dtype=float)
    m = len(corners)
    vertices = np.vstack([corners, corners.mean(axis=0)])
    k = np.arange(m)
    triangles = np.column_stack([k, (k + 1) % m, np.full(m, m)])
    return build_mesh(vertices, triangles)


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: four similar children per triangle."""
    nv = m.num_vertices
    new_vertices = np.vstack([m.vertices, m.midpoints])
    v = m.triangles
    mid = nv + m.tri_edges
    children = np.vstack([
        np.column_stack([v[:, 0], mid[:, 2], mid[:, 1]]),
        np.column_stack([v[:, 1], mid[:, 0], mid[:, 2]]),
        np.column_stack([v[:, 2], mid[:, 1], mid[:, 0]]),
        np.column_stack([mid[:, 0], mid[:, 1], mid[:, 2]]),
    ])
    refined = build_mesh(new_vertices, children)
    logger.debug('refined %r -> %r', m, refined)
    return refined


def ensure_odd_boundary(m: Mesh) -> Mesh:
    """
    Return m if its boundary edge count is odd; otherwise split the
    boundary edge with the widest opposite angle at its midpoint, and its
    triangle with it.
    """
    if m.num_boundary_edges % 2 == 1:
        return m
    cycle = m.boundary_cycle
    tris = m.edge_tris[cycle, 0]
    ks = m.edge_local[cycle, 0]
    opposite = np.round(m.angles[tris, ks], 12)
    pick = int(np.argmax(opposite))
    e, t, k = cycle[pick], tris[pick], ks[pick]
    c, a, b = m.triangles[t, k], m.triangles[t, (k + 1) % 3], \
        m.triangles[t, (k + 2) % 3]
    mid = m.num_vertices
    vertices = np.vstack([m.vertices, m.midpoints[e]])
    triangles = np.array(m.triangles)
    triangles[t] = (c, a, mid)
    triangles = np.vstack([triangles, [c, mid, b]])
    logger.debug('bisected boundary edge %d of %r', e, m)
    return build_mesh(vertices, triangles)


def mesh_family(base: Mesh, levels: int) -> list:
    """Uniform refinements of base, each made odd on the boundary."""
    if levels < 1:
        raise MeshError(f'Bad value for {levels=}')
    family = []
    current = base
    for level in range(levels):
        if level > 0:
            current = refine_uniform(current)
        family.append(ensure_odd_boundary(current))
    return family


def _polygon_area(points) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def validate(m: Mesh, min_angle: float = None) -> list:
    """
    Diagnostics for m. An empty list means the mesh is valid.
    """
    if min_angle is None:
        min_angle = cfg.MIN_ANGLE
    report = []
    if not np.all(np.isfinite(m.vertices)):
        report.append('vertex positions are not finite')
        return report
    used = np.zeros(m.num_vertices, dtype=bool)
    used[m.triangles.ravel()] = True
    for v in np.flatnonzero(~used):
        report.append(f'vertex {v} belongs to no triangle')

    h2 = max(m.h, 1.0e-300) ** 2
    for t in np.flatnonzero(m.signed_areas <= DEGENERATE_AREA * h2):
        if m.signed_areas[t] < -DEGENERATE_AREA * h2:
            report.append(f'triangle {t} has clockwise orientation')
        else:
            report.append(f'triangle {t} is degenerate')

    for e in np.flatnonzero(m.edge_counts > 2):
        report.append(f'edge {e} is shared by {m.edge_counts[e]} triangles')
    inner = m.interior_edges
    if len(inner):
        first = np.array([m.edge_endpoints_local(e, 0)[0] for e in inner])
        second = np.array([m.edge_endpoints_local(e, 1)[0] for e in inner])
        k0 = m.edge_local[inner, 0]
        k1 = m.edge_local[inner, 1]
        # edges[e, 0] is the start of the ccw traversal in a triangle
        # exactly when it sits at local position k + 1
        fwd0 = first == (k0 + 1) % 3
        fwd1 = second == (k1 + 1) % 3
        for e in inner[fwd0 == fwd1]:
            report.append(f'triangles {tuple(m.edge_tris[e])} disagree in '
                          f'orientation across edge {e}')

    nb = m.num_boundary_edges
    if not m.cycle_closed or len(m.boundary_cycle) != nb:
        report.append(f'boundary cycle covers {len(m.boundary_cycle)} of '
                      f'{nb} boundary edges or is not closed')
    else:
        ends = m.edges[m.boundary_cycle]
        for i in range(nb):
            shared = set(ends[i]) & set(ends[(i + 1) % nb])
            if nb > 1 and len(shared) != 1:
                report.append(f'boundary edges {i} and {(i + 1) % nb} share '
                              f'{len(shared)} vertices')
        enclosed = _polygon_area(m.vertices[m.boundary_vertices])
        if abs(enclosed - m.signed_areas.sum()) > AREA_TOL * max(1.0, m.area):
            report.append(f'triangles cover area {m.signed_areas.sum()!r} '
                          f'but the boundary encloses {enclosed!r}')

    euler = m.num_vertices - m.num_edges + m.num_triangles
    if euler != 1:
        report.append(f'Euler characteristic is {euler}, expected 1')
    if m.num_triangles and m.min_angle < min_angle:
        report.append(f'minimum angle {m.min_angle:.4f} is below the '
                      f'floor {min_angle}')
    return report


def locate_points(m: Mesh, points) -> tuple:
    """
    Triangle id and barycentric coordinates of each point. Points on
    shared edges go to whichever candidate contains them most deeply.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = min(LOCATE_CANDIDATES, m.num_triangles)
    tree = cKDTree(m.centroids)
    _, cand = tree.query(points, k=k)
    cand = cand.reshape(len(points), k)
    bary = _barycentric(m, cand, points[:, None, :])
    depth = bary.min(axis=2)
    best = np.argmax(depth, axis=1)
    rows = np.arange(len(points))
    tri = cand[rows, best]
    lam = bary[rows, best]
    lost = np.flatnonzero(depth[rows, best] < -LOCATE_TOL)
    if len(lost):
        everything = np.broadcast_to(np.arange(m.num_triangles),
                                     (len(lost), m.num_triangles))
        full = _barycentric(m, everything, points[lost][:, None, :])
        pick = np.argmax(full.min(axis=2), axis=1)
        tri[lost] = pick
        lam[lost] = full[np.arange(len(lost)), pick]
    return tri, lam


def _barycentric(m, tri, points):
    grads = m.bary_grads[tri]
    offset = points - m.centroids[tri]
    return 1.0 / 3.0 + np.einsum('...ij,...j->...i', grads, offset)


def write_mesh(m: Mesh, path) -> None:
    with open(path, 'w') as out:
        for x, y in m.vertices:
            out.write(f'{VERTEX_TAG} {x!r} {y!r}\n')
        for i, j, k in m.triangles:
            out.write(f'{TRIANGLE_TAG} {i} {j} {k}\n')


def read_mesh(path) -> Mesh:
    vertices, triangles = [], []
    with open(path) as src:
        for lineno, line in enumerate(src, start=1):
            fields = line.split()
            if not fields:
                continue
            if fields[0] == VERTEX_TAG and len(fields) == 3:
                vertices.append([float(fields[1]), float(fields[2])])
            elif fields[0] == TRIANGLE_TAG and len(fields) == 4:
                triangles.append([int(f) for f in fields[1:]])
            else:
                raise MeshError(f'Bad line {lineno} in {path}: {line!r}')
    return build_mesh(np.array(vertices).reshape(-1, 2),
                      np.array(triangles, dtype=int).reshape(-1, 3))


def read_polygon(path) -> np.ndarray:
    """Corner file: one 'x y' pair per line, '#' starts a comment."""
    corners = []
    with open(path) as src:
        for lineno, line in enumerate(src, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.replace(',', ' ').split()
            if len(fields) != 2:
                raise MeshError(f'Bad line {lineno} in {path}: {line!r}')
            corners.append([float(fields[0]), float(fields[1])])
    return np.array(corners)
