"""
Problems with known data.

On the unit square the inactive problem has the closed-form optimum

    theta = sin(pi x) sin(pi y)
    y     = -(pi / alpha) (sin(pi x) + sin(pi y))
    u     = d_n theta / alpha = y on the boundary

with f = -lap y = pi^2 y and y_d = y + lap theta = y - 2 pi^2 theta.
The box [-pi/alpha - 1, 1] never binds.
"""
import json
import logging

import numpy as np

import control_ops.boundary_ops as bops
import mesh.triangulation as tri
import optimizer.control_problem as ocp

logger = logging.getLogger(__name__)

INACTIVE = 'inactive'
ACTIVE = 'active'
CUSTOM = 'custom'
HOMOGENEOUS = 'homogeneous'
PROBLEMS = [INACTIVE, ACTIVE, CUSTOM]

DEFAULT_CLIP = 0.5
SQUARE_TOL = 1e-12

ALPHA = 'alpha'
BOUNDS = 'bounds'
SOURCE = 'f'
TARGET = 'y_d'
EXPR_NAMES = {
    'sin': np.sin,
    'cos': np.cos,
    'exp': np.exp,
    'sqrt': np.sqrt,
    'pi': np.pi,
}
EXPR_VARS = ('x', 'y')

PI = np.pi


def is_unit_square(m: tri.Mesh) -> bool:
    lo = m.vertices.min(axis=0)
    hi = m.vertices.max(axis=0)
    return (np.allclose(lo, 0.0, atol=SQUARE_TOL)
            and np.allclose(hi, 1.0, atol=SQUARE_TOL)
            and abs(m.area - 1.0) <= SQUARE_TOL)


def theta(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def theta_grad(x, y):
    return (PI * np.cos(PI * x) * np.sin(PI * y),
            PI * np.sin(PI * x) * np.cos(PI * y))


def _inactive_fields(alpha):
    def state(x, y):
        return -(PI / alpha) * (np.sin(PI * x) + np.sin(PI * y))

    def state_grad(x, y):
        return (-(PI ** 2 / alpha) * np.cos(PI * x),
                -(PI ** 2 / alpha) * np.cos(PI * y))

    def source(x, y):
        return PI ** 2 * state(x, y)

    def target(x, y):
        return state(x, y) - 2.0 * PI ** 2 * theta(x, y)

    def flux(x, y):
        # the outward normal derivative of theta on every side of the square
        return -PI * (np.sin(PI * x) + np.sin(PI * y))

    exact = ocp.ExactSolution(control=state, state=state, adjoint=theta,
                              flux=flux, state_grad=state_grad,
                              adjoint_grad=theta_grad)
    return source, target, exact


def manufactured_inactive(alpha: float = 1.0, m: tri.Mesh = None
                          ) -> ocp.ProblemSpec:
    if alpha <= 0:
        raise ValueError(f'Bad value for {alpha=}')
    if m is None:
        m = tri.ensure_odd_boundary(tri.triangulate_unit_square(2))
    source, target, exact = _inactive_fields(alpha)
    bounds = bops.BoxBounds(-PI / alpha - 1.0, 1.0)
    return ocp.ProblemSpec(m, alpha, bounds, source, target,
                           exact if is_unit_square(m) else None, INACTIVE)


def manufactured_active(alpha: float = 1.0, clip: float = DEFAULT_CLIP,
                        m: tri.Mesh = None) -> ocp.ProblemSpec:
    """
    The inactive data with u_a = -clip pi / alpha, so the lower bound
    binds around the side midpoints. No closed form.
    """
    if not 0.0 < clip < 1.0:
        raise ValueError(f'Bad value for {clip=}')
    p = manufactured_inactive(alpha, m)
    bounds = bops.BoxBounds(-clip * PI / p.alpha, 1.0)
    return ocp.ProblemSpec(p.mesh, p.alpha, bounds, p.f, p.y_d, None, ACTIVE)


def homogeneous_problem(m: tri.Mesh, alpha: float = 1.0,
                        bounds: bops.BoxBounds = None) -> ocp.ProblemSpec:
    """f = y_d = 0: the optimum is the feasible point closest to zero."""
    def zero(x, y):
        return np.zeros_like(x)

    return ocp.ProblemSpec(m, alpha, bounds or bops.BoxBounds(-1.0, 1.0),
                           zero, zero, None, HOMOGENEOUS)


def random_problem(m: tri.Mesh, rng: np.random.Generator
                   ) -> ocp.ProblemSpec:
    """
    Random alpha in [0.1, 2], a random box around zero and smooth f, y_d
    built from a few random modes.
    """
    alpha = float(rng.uniform(0.1, 2.0))
    lo = -float(rng.uniform(0.05, 1.5))
    hi = float(rng.uniform(0.05, 1.5))
    cf = rng.standard_normal(4) * 5.0
    cd = rng.standard_normal(4) * 2.0

    def modes(c, x, y):
        return (c[0] + c[1] * x + c[2] * np.sin(PI * y)
                + c[3] * np.cos(PI * x) * np.sin(PI * y))

    def source(x, y):
        return modes(cf, x, y)

    def target(x, y):
        return modes(cd, x, y)

    return ocp.ProblemSpec(m, alpha, bops.BoxBounds(lo, hi), source, target,
                           None, 'random')


def compile_expression(text: str):
    """
    Turn an expression in x and y into a callable. Only the names in
    EXPR_NAMES and the two variables may appear.
    """
    if not isinstance(text, str) or not text.strip():
        raise ValueError(f'Bad value for expression {text!r}')
    try:
        code = compile(text, '<expression>', 'eval')
    except SyntaxError as e:
        raise ValueError(f'Bad expression {text!r}: {e.msg}') from e
    unknown = set(code.co_names) - set(EXPR_NAMES) - set(EXPR_VARS)
    if unknown:
        raise ValueError(f'Bad names {sorted(unknown)} in {text!r}')

    def fn(x, y):
        scope = dict(EXPR_NAMES, x=x, y=y)
        val = eval(code, {'__builtins__': {}}, scope)
        return np.broadcast_to(np.asarray(val, dtype=float),
                               np.shape(x)).copy()
    fn.expression = text
    return fn


def custom_problem(fields: dict, m: tri.Mesh) -> ocp.ProblemSpec:
    if not isinstance(fields, dict):
        raise ValueError(f'Bad type for {type(fields)=}')
    for key in (ALPHA, BOUNDS, SOURCE, TARGET):
        if key not in fields:
            raise ValueError(f'Bad problem: missing {key!r}')
    bounds = fields[BOUNDS]
    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
        raise ValueError(f'Bad value for {bounds=}')
    return ocp.ProblemSpec(m, float(fields[ALPHA]),
                           bops.BoxBounds(*map(float, bounds)),
                           compile_expression(fields[SOURCE]),
                           compile_expression(fields[TARGET]), None, CUSTOM)


def load_custom_problem(path, m: tri.Mesh) -> ocp.ProblemSpec:
    with open(path) as src:
        try:
            fields = json.load(src)
        except json.JSONDecodeError as e:
            raise ValueError(f'Bad JSON in {path}: {e}') from e
    logger.info('loaded problem from %s', path)
    return custom_problem(fields, m)


def make_problem(name: str, m: tri.Mesh, alpha: float = 1.0,
                 bounds=None, path=None) -> ocp.ProblemSpec:
    """Build a named problem; explicit bounds replace the defaults."""
    if name == INACTIVE:
        p = manufactured_inactive(alpha, m)
    elif name == ACTIVE:
        p = manufactured_active(alpha, m=m)
    elif name == CUSTOM:
        if path is None:
            raise ValueError('custom problems need a file')
        p = load_custom_problem(path, m)
    else:
        raise ValueError(f'Bad value for problem {name=}')
    if bounds is not None:
        bounds = bops.BoxBounds(*bounds)
        p = ocp.ProblemSpec(p.mesh, p.alpha, bounds, p.f, p.y_d,
                            p.exact if bounds == p.bounds else None, p.name)
    return p
