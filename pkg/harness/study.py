"""
Convergence studies on a family of uniformly refined, odd-adjusted
meshes, against the closed-form optimum or a finer reference solve.
"""
import logging
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from functools import wraps

import numpy as np

import config.settings as cfg
import control_ops.boundary_ops as bops
import fespace.spaces as spc
import harness.boundary_fields as bfd
import harness.tables as tbl
import linalg.solvers as slv
import mesh.triangulation as tri
import optimizer.control_problem as ocp

logger = logging.getLogger(__name__)

SQUARE = 'square'
PENTAGON = 'pentagon'
POLYGON = 'polygon'
DOMAINS = [SQUARE, PENTAGON, POLYGON]
SQUARE_BASE_N = 2
MIN_LEVELS = 3
REFERENCE_GAP = 2
REFERENCE_MAX_ITER = 20000


class StudyError(slv.SolverError):
    def __init__(self, message, table=None, level=None):
        super().__init__(message)
        self.table = table
        self.level = level


def base_mesh(domain: str, polygon=None) -> tri.Mesh:
    """Level 0 before odd adjustment; polygon is a corner file path."""
    if domain == SQUARE:
        return tri.triangulate_unit_square(SQUARE_BASE_N)
    if domain == PENTAGON:
        return tri.triangulate_polygon_fan(tri.regular_polygon(5))
    if domain == POLYGON:
        if polygon is None:
            raise ValueError('polygon domains need a corner file')
        return tri.triangulate_polygon_fan(tri.read_polygon(polygon))
    raise ValueError(f'Bad value for {domain=}')


def level_mesh(base: tri.Mesh, level: int) -> tri.Mesh:
    m = base
    for _ in range(level):
        m = tri.refine_uniform(m)
    return tri.ensure_odd_boundary(m)


reference_cache = OrderedDict()
reference_lock = threading.Lock()


def needs_reference_cache(fn):
    """
    Least recently used cache of reference solves, at most
    cfg.REFERENCE_CACHE_SIZE entries.
    """
    @wraps(fn)
    def wrapper(p, base, level, tol=None):
        key = (p.name, p.alpha, p.bounds, id(p.f), id(p.y_d), id(base),
               level, tol)
        with reference_lock:
            cached = reference_cache.get(key)
            if cached is not None:
                reference_cache.move_to_end(key)
                return cached[2]
        sol = fn(p, base, level, tol)
        with reference_lock:
            # p and base live as long as the entry, so their ids stay unique
            reference_cache[key] = (base, p, sol)
            while len(reference_cache) > max(cfg.REFERENCE_CACHE_SIZE, 1):
                reference_cache.popitem(last=False)
        return sol
    return wrapper


@needs_reference_cache
def reference_solution(p: ocp.ProblemSpec, base: tri.Mesh, level: int,
                       tol: float = None) -> ocp.OptimalitySolution:
    """High-accuracy solve of p on base refined level times."""
    tol = cfg.REFERENCE_TOL if tol is None else tol
    m = level_mesh(base, level)
    logger.info('reference solve on level %d: %r', level, m)
    return ocp.solve_control(p.on_mesh(m), tol=tol,
                             max_iter=max(cfg.MAX_ITER, REFERENCE_MAX_ITER),
                             method=cfg.LU)


def p0_sanity(m: tri.Mesh) -> float:
    """||g - P0 g|| for g = sin(2 pi s / |Gamma|)."""
    perimeter = m.perimeter

    def g(s):
        return np.sin(2.0 * np.pi * s / perimeter)

    u = bops.p0_project(m, g, arclength=True)
    return bfd.boundary_l2_distance(bfd.BoundaryField.from_control(u), g,
                                    arclength=True)


def _errors(sol, exact, ref, order):
    control = bfd.BoundaryField.from_control(sol.control)
    flux = bfd.BoundaryField.from_trace(sol.flux)
    if exact is not None:
        return {
            tbl.CONTROL_L2: bfd.boundary_l2_distance(control, exact.control),
            tbl.STATE_L2: spc.l2_error(sol.state.composite, exact.state,
                                       order),
            tbl.FLUX_L2: bfd.boundary_l2_distance(flux, exact.flux),
            tbl.ADJOINT_L2: spc.l2_error(sol.adjoint, exact.adjoint, order),
        }
    return {
        tbl.CONTROL_L2: bfd.boundary_l2_distance(
            control, bfd.BoundaryField.from_control(ref.control)),
        tbl.STATE_L2: bfd.domain_l2_distance(sol.state.composite,
                                             ref.state.composite, order),
        tbl.FLUX_L2: bfd.boundary_l2_distance(
            flux, bfd.BoundaryField.from_trace(ref.flux)),
        tbl.ADJOINT_L2: bfd.domain_l2_distance(sol.adjoint, ref.adjoint,
                                               order),
    }


def study_level(p: ocp.ProblemSpec, m: tri.Mesh, level: int, ref=None,
                tol: float = None, order: int = None) -> dict:
    order = order or cfg.ERROR_QUAD_ORDER
    start = time.perf_counter()
    sol = ocp.solve_control(p.on_mesh(m), tol=tol)
    wall = time.perf_counter() - start
    row = {tbl.LEVEL: level, tbl.H: m.h,
           tbl.BOUNDARY_EDGES: m.num_boundary_edges}
    row.update(_errors(sol, p.exact, ref, order))
    row[tbl.P0_SANITY] = p0_sanity(m)
    row[tbl.ENRICHED_NORM] = sol.enriched_control_norm
    row[tbl.KKT] = sol.kkt_residual
    row[tbl.ITERATIONS] = sol.iterations
    row[tbl.WALL_TIME] = wall
    logger.info('level %d h=%.4e control error %.4e (%d iterations)',
                level, m.h, row[tbl.CONTROL_L2], sol.iterations)
    return row


def convergence_study(p: ocp.ProblemSpec, levels: int, metrics=None,
                      base: tri.Mesh = None, tol: float = None,
                      reference_gap: int = REFERENCE_GAP,
                      max_workers: int = None) -> tbl.ConvergenceTable:
    """
    Solve p on levels 0..levels-1 of the refinement family of base (by
    default p's mesh) and tabulate errors with their EOC. Without a
    closed form the errors are measured against a solve on level
    levels - 1 + reference_gap.
    """
    if levels < MIN_LEVELS:
        raise ValueError(f'Bad value for {levels=}, need >= {MIN_LEVELS}')
    if reference_gap < 2:
        raise ValueError(f'Bad value for {reference_gap=}')
    base = base or p.mesh
    metrics = list(metrics or tbl.ERROR_METRICS)
    unknown = set(metrics) - set(tbl.ERROR_METRICS)
    if unknown:
        raise ValueError(f'Bad metrics {sorted(unknown)}')
    meshes = [level_mesh(base, k) for k in range(levels)]
    ref = None
    if p.exact is None:
        ref = reference_solution(p, base, levels - 1 + reference_gap)

    table = tbl.ConvergenceTable(metrics=metrics, meta={
        'problem': p.name, 'alpha': p.alpha,
        'bounds': list(p.bounds.as_tuple()), 'levels': levels,
        'reference': 'closed form' if ref is None
        else f'level {levels - 1 + reference_gap}',
        'seed': cfg.SEED,
    })

    def run(k):
        return study_level(p, meshes[k], k, ref, tol)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(run, k) for k in range(levels)]
            results = []
            for k, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except slv.SolverError as e:
                    _abort(table, results, k, e)
    else:
        results = []
        for k in range(levels):
            try:
                results.append(run(k))
            except slv.SolverError as e:
                _abort(table, results, k, e)
    for row in results:
        table.add_row({c: row[c] for c in row
                       if c not in tbl.ERROR_METRICS or c in metrics})
    return table


def _abort(table, results, k, err):
    for row in results:
        table.add_row(row)
    logger.warning('study aborted at level %d: %s', k, err)
    raise StudyError(f'level {k} failed: {err}', table=table,
                     level=k) from err


def orthogonality_violation(m: tri.Mesh, rng: np.random.Generator,
                            pairs: int = 10) -> float:
    """
    Largest |a_pw(p, v - I_c v)| / (|p|_h |v|_h) over random broken P1
    functions p and random v with zero boundary edge means.
    """
    worst = 0.0
    for _ in range(pairs):
        p = spc.BrokenP1Function(m, rng.standard_normal((m.num_triangles,
                                                         3)))
        coefs = np.zeros(m.num_edges)
        coefs[m.interior_edges] = rng.standard_normal(len(m.interior_edges))
        v = spc.CrFunction(m, coefs)
        scale = np.sqrt(spc.broken_energy(p, p) * spc.broken_energy(v, v))
        if scale == 0.0:
            continue
        gap = spc.broken_energy(p, v) - spc.broken_energy(p, spc.enrich(v))
        worst = max(worst, abs(gap) / scale)
    return worst


def operator_report(base: tri.Mesh, levels: int, seed: int = None,
                    pairs: int = 10) -> list:
    """Per level: boundary edges, orthogonality maximum, ||P1~||."""
    rng = np.random.default_rng(cfg.SEED if seed is None else seed)
    report = []
    for k in range(levels):
        m = level_mesh(base, k)
        report.append({
            tbl.LEVEL: k,
            tbl.BOUNDARY_EDGES: m.num_boundary_edges,
            'orthogonality': orthogonality_violation(m, rng, pairs),
            'p1_norm': bops.p1_tilde_operator_norm(m),
        })
    return report
