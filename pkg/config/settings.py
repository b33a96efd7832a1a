"""
All tunable numbers live here and are read once from the environment.
Anything that takes a tolerance as an argument lets the argument win.
"""
import os

LOG_LEVEL = os.getenv('CRBC_LOG_LEVEL', 'WARNING')

# linear solves
CG = 'cg'
LU = 'lu'
SOLVERS = [CG, LU]
LINEAR_SOLVER = os.getenv('CRBC_LINEAR_SOLVER', CG)
CG_TOL = float(os.getenv('CRBC_CG_TOL', 1e-12))
# 0 means "ten times the system size"
CG_MAX_ITER = int(os.getenv('CRBC_CG_MAX_ITER', 0))

# optimization
KKT_TOL = float(os.getenv('CRBC_KKT_TOL', 1e-9))
MAX_ITER = int(os.getenv('CRBC_MAX_ITER', 5000))
REFERENCE_TOL = float(os.getenv('CRBC_REFERENCE_TOL', 1e-11))
MAX_ORACLE_EDGES = int(os.getenv('CRBC_MAX_ORACLE_EDGES', 24))
MAX_ORACLE_INSTANCES = int(os.getenv('CRBC_MAX_ORACLE_INSTANCES', 20))
REFERENCE_CACHE_SIZE = int(os.getenv('CRBC_REFERENCE_CACHE_SIZE', 8))

# geometry and quadrature
MIN_ANGLE = float(os.getenv('CRBC_MIN_ANGLE', 10.0))
QUAD_ORDER = int(os.getenv('CRBC_QUAD_ORDER', 4))
ERROR_QUAD_ORDER = int(os.getenv('CRBC_ERROR_QUAD_ORDER', 6))

SEED = int(os.getenv('CRBC_SEED', 20231))


def is_valid_solver(name: str) -> bool:
    return name in SOLVERS


def linear_solver() -> str:
    if not is_valid_solver(LINEAR_SOLVER):
        raise ValueError(f'Bad value for {LINEAR_SOLVER=}')
    return LINEAR_SOLVER
