"""
This is the file containing all of the endpoints for our flask app.
The endpoint called `endpoints` will return all available endpoints.
"""
from http import HTTPStatus

import numpy as np
from flask import Flask
from flask_restx import Resource, Api, fields
from flask import request
from flask_cors import CORS

import config.settings as cfg
import harness.manufactured as mfd
import harness.study as std
import linalg.solvers as slv
import mesh.triangulation as tri
import optimizer.control_problem as ocp
import optimizer.oracle as orc

app = Flask(__name__)
CORS(app)
api = Api(
    app,
    version='1.0',
    title='Boundary Control API',
    description='A REST API for Crouzeix-Raviart Dirichlet boundary '
                'control solves, meshes and operator checks',
    doc='/'
)

ENDPOINT_EP = '/endpoints'
ENDPOINT_RESP = 'Available endpoints'
HEALTH_EP = '/health'
MESHES_EP = '/meshes'
SOLVE_EP = '/solve'
OPERATORS_EP = '/operators'
ORACLE_EP = '/oracle-check'
ERROR = 'error'

DOMAIN = 'domain'
LEVEL = 'level'
PROBLEM = 'problem'
ALPHA = 'alpha'
BOUNDS = 'bounds'
TOL = 'tol'
INSTANCES = 'instances'
SEED = 'seed'

MAX_LEVEL = 6
MAX_OPERATOR_LEVELS = 6
MAX_SEED = 2**32 - 1

SOLVE_FIELDS = api.model('Solve', {
    DOMAIN: fields.String(example=std.SQUARE),
    LEVEL: fields.Integer(example=0),
    PROBLEM: fields.String(example=mfd.INACTIVE),
    ALPHA: fields.Float(example=1.0),
    BOUNDS: fields.List(fields.Float, example=[-4.14, 1.0]),
    TOL: fields.Float(example=1e-9),
})

ORACLE_FIELDS = api.model('OracleCheck', {
    DOMAIN: fields.String(example=std.PENTAGON),
    LEVEL: fields.Integer(example=0),
    INSTANCES: fields.Integer(example=2),
    SEED: fields.Integer(example=cfg.SEED),
})


def number(val, name: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)) \
            or not np.isfinite(val):
        raise ValueError(f'Bad value for {name}={val!r}')
    return float(val)


def integer(val, name: str, lo: int, hi: int) -> int:
    if isinstance(val, bool) or not isinstance(val, int) \
            or not lo <= val <= hi:
        raise ValueError(f'Bad value for {name}={val!r}')
    return val


def level_mesh(domain: str, level: int) -> tri.Mesh:
    if domain not in (std.SQUARE, std.PENTAGON):
        raise ValueError(f'Bad value for {domain=}')
    level = integer(level, LEVEL, 0, MAX_LEVEL)
    return std.level_mesh(std.base_mesh(domain), level)


def solve_problem(data: dict) -> dict:
    if not isinstance(data, dict):
        raise ValueError(f'Bad type for {type(data)=}')
    m = level_mesh(data.get(DOMAIN, std.SQUARE), data.get(LEVEL, 0))
    bounds = data.get(BOUNDS)
    if bounds is not None:
        if not isinstance(bounds, list) or len(bounds) != 2:
            raise ValueError(f'Bad value for {bounds=}')
        bounds = [number(b, BOUNDS) for b in bounds]
    name = data.get(PROBLEM, mfd.INACTIVE)
    if name not in (mfd.INACTIVE, mfd.ACTIVE):
        raise ValueError(f'Bad value for problem {name!r}')
    tol = data.get(TOL)
    if tol is not None:
        tol = number(tol, TOL)
    alpha = number(data.get(ALPHA, 1.0), ALPHA)
    p = mfd.make_problem(name, m, alpha, bounds)
    sol = ocp.solve_control(p, tol=tol)
    return {
        'boundary_edges': m.num_boundary_edges,
        'objective': sol.objective,
        'kkt_residual': sol.kkt_residual,
        'iterations': sol.iterations,
        'enriched_control_norm': sol.enriched_control_norm,
        'control': sol.control.coefficients.tolist(),
    }


def oracle_check(data: dict) -> dict:
    if not isinstance(data, dict):
        raise ValueError(f'Bad type for {type(data)=}')
    m = level_mesh(data.get(DOMAIN, std.PENTAGON), data.get(LEVEL, 0))
    instances = integer(data.get(INSTANCES, 1), INSTANCES, 1,
                        cfg.MAX_ORACLE_INSTANCES)
    seed = integer(data.get(SEED, cfg.SEED), SEED, 0, MAX_SEED)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p = mfd.random_problem(m, rng)
        sol = ocp.solve_control(p, tol=1e-12, method=cfg.LU)
        dist, _ = orc.oracle_deviation(p, sol)
        worst = max(worst, dist)
    return {'boundary_edges': m.num_boundary_edges,
            'max_deviation': worst}


@api.route(ENDPOINT_EP)
class Endpoints(Resource):
    """
    This class will serve as live, fetchable documentation of what endpoints
    are available in the system.
    """
    def get(self):
        """
        The `get()` method will return a sorted list of available endpoints.
        """
        endpoints = sorted(rule.rule for rule in api.app.url_map.iter_rules())
        return {ENDPOINT_RESP: endpoints}


@api.route(HEALTH_EP)
class Health(Resource):
    """
    Health check endpoint
    """
    @api.doc('health_check')
    def get(self):
        """
        Check if the API is running
        """
        return {'status': 'ok'}


@api.route(f'{MESHES_EP}/<string:domain>/<int:level>')
class Mesh(Resource):
    """
    Size and quality of one mesh of a refinement family
    """
    @api.doc('get_mesh')
    def get(self, domain, level):
        """
        Counts, mesh size, minimum angle and validation diagnostics
        """
        try:
            m = level_mesh(domain, level)
            return {
                'vertices': m.num_vertices,
                'edges': m.num_edges,
                'triangles': m.num_triangles,
                'boundary_edges': m.num_boundary_edges,
                'h': m.h,
                'min_angle': m.min_angle,
                'diagnostics': tri.validate(m),
            }, HTTPStatus.OK
        except ValueError as e:
            return {ERROR: str(e)}, HTTPStatus.BAD_REQUEST
        except Exception as e:
            return {ERROR: str(e)}, HTTPStatus.INTERNAL_SERVER_ERROR


@api.route(SOLVE_EP)
class Solve(Resource):
    """
    Solve a manufactured problem on one mesh
    """
    @api.doc('solve')
    @api.expect(SOLVE_FIELDS)
    def post(self):
        """
        Run the projected gradient solver and return the control
        """
        try:
            return solve_problem(request.get_json(force=True)), HTTPStatus.OK
        except ValueError as e:
            return {ERROR: str(e)}, HTTPStatus.BAD_REQUEST
        except slv.SolverError as e:
            return {ERROR: str(e)}, HTTPStatus.UNPROCESSABLE_ENTITY
        except Exception as e:
            return {ERROR: str(e)}, HTTPStatus.INTERNAL_SERVER_ERROR


@api.route(OPERATORS_EP)
class Operators(Resource):
    """
    Orthogonality of the enrichment and the norm of P1~ per level
    """
    @api.doc('operators', params={'levels': 'number of levels',
                                  'domain': 'square or pentagon'})
    def get(self):
        """
        Per-level operator report
        """
        try:
            levels = request.args.get('levels', 3, type=int)
            domain = request.args.get('domain', std.PENTAGON)
            if not 1 <= levels <= MAX_OPERATOR_LEVELS:
                raise ValueError(f'Bad value for {levels=}')
            if domain not in (std.SQUARE, std.PENTAGON):
                raise ValueError(f'Bad value for {domain=}')
            report = std.operator_report(std.base_mesh(domain), levels)
            return {'levels': report}, HTTPStatus.OK
        except ValueError as e:
            return {ERROR: str(e)}, HTTPStatus.BAD_REQUEST
        except slv.SolverError as e:
            return {ERROR: str(e)}, HTTPStatus.UNPROCESSABLE_ENTITY
        except Exception as e:
            return {ERROR: str(e)}, HTTPStatus.INTERNAL_SERVER_ERROR


@api.route(ORACLE_EP)
class OracleCheck(Resource):
    """
    Compare the solver with the dense QP oracle on random problems
    """
    @api.doc('oracle_check')
    @api.expect(ORACLE_FIELDS)
    def post(self):
        """
        Largest L2(Gamma) distance between solver and oracle controls
        """
        try:
            return oracle_check(request.get_json(force=True)), HTTPStatus.OK
        except ValueError as e:
            return {ERROR: str(e)}, HTTPStatus.BAD_REQUEST
        except slv.SolverError as e:
            return {ERROR: str(e)}, HTTPStatus.UNPROCESSABLE_ENTITY
        except Exception as e:
            return {ERROR: str(e)}, HTTPStatus.INTERNAL_SERVER_ERROR
