"""
The handful of linear solvers the finite element code needs: Jacobi
preconditioned conjugate gradients for the sparse SPD systems, a direct
solver for cyclic two-band boundary systems, and dense fallbacks used
by the oracles.
"""
import logging
from functools import wraps

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

import config.settings as cfg

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14
SYMMETRY_TOL = 1e-12
EIG_TOL = 1e-10
EIG_MAX_ITER = 100000
EIG_STEP_RATIO = 1e-2


class SolverError(Exception):
    pass


class NotConvergedError(SolverError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularMatrixError(SolverError):
    pass


def handle_errors(fn):
    """Turn LAPACK / SuperLU failures into SingularMatrixError."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (np.linalg.LinAlgError, sla.LinAlgError) as e:
            raise SingularMatrixError(str(e)) from e
        except RuntimeError as e:
            if 'singular' in str(e).lower():
                raise SingularMatrixError(str(e)) from e
            raise
    return wrapper


def is_symmetric(A, tol: float = SYMMETRY_TOL) -> bool:
    A = sp.csr_matrix(A)
    diff = abs(A - A.T)
    scale = max(abs(A).max(), 1.0) if A.nnz else 1.0
    return diff.nnz == 0 or diff.max() <= tol * scale


def to_csr(A) -> sp.csr_matrix:
    """CSR with sorted, unique column indices per row."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def jacobi_preconditioner(A) -> np.ndarray:
    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag <= 0.0):
        raise SingularMatrixError('Jacobi preconditioner needs a positive '
                                  'diagonal')
    return 1.0 / diag


def cg_solve(A, b, tol: float = None, max_iter: int = None, x0=None,
             history: list = None) -> np.ndarray:
    """
    Jacobi preconditioned conjugate gradients with minimal residual
    smoothing: the returned iterate is the smoothed one, whose residual
    norm never increases. Stops when ||Ax - b|| <= tol * ||b||.
    Residual norms are appended to history if one is given.
    """
    if tol is None:
        tol = cfg.CG_TOL
    if tol <= 0:
        raise ValueError(f'Bad value for {tol=}')
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = cfg.CG_MAX_ITER or 10 * max(n, 1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        if history is not None:
            history.append(0.0)
        return np.zeros(n)
    inv_diag = jacobi_preconditioner(A)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_diag * r
    d = z.copy()
    rz = r @ z
    x_s = x.copy()
    r_s = r.copy()
    res = np.linalg.norm(r_s)
    if history is not None:
        history.append(res)
    k = 0
    while res > tol * bnorm:
        if k >= max_iter:
            logger.warning('cg stopped after %d iterations at %.3e', k,
                           res / bnorm)
            raise NotConvergedError(
                f'cg did not converge in {max_iter} iterations, '
                f'relative residual {res / bnorm:.3e}',
                residual=res, iterations=k)
        Ad = A @ d
        dAd = d @ Ad
        if dAd <= 0.0:
            raise NotConvergedError(
                f'cg met a non-positive curvature {dAd!r}',
                residual=res, iterations=k)
        step = rz / dAd
        x = x + step * d
        r = r - step * Ad
        z = inv_diag * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        # minimal residual smoothing
        diff = r_s - r
        dd = diff @ diff
        if dd > 0.0:
            eta = (r_s @ diff) / dd
            x_s = x_s + eta * (x - x_s)
            r_s = r_s - eta * diff
        res = np.linalg.norm(r_s)
        k += 1
        if history is not None:
            history.append(res)
    logger.debug('cg converged in %d iterations, relative residual %.3e',
                 k, res / bnorm)
    return x_s


class SpdSolver:
    """
    Repeated solves with one SPD matrix through the configured backend.
    """
    def __init__(self, A, method: str = None, tol: float = None):
        self.A = to_csr(A)
        self.method = method or cfg.linear_solver()
        if not cfg.is_valid_solver(self.method):
            raise ValueError(f'Bad value for {self.method=}')
        self.tol = tol
        self._lu = None

    def __call__(self, b) -> np.ndarray:
        if self.A.shape[0] == 0:
            return np.zeros(0)
        if self.method == cfg.LU:
            return self._solve_lu(b)
        return cg_solve(self.A, b, tol=self.tol)

    @handle_errors
    def _solve_lu(self, b):
        if self._lu is None:
            self._lu = factorized(self.A.tocsc())
        return self._lu(np.asarray(b, dtype=float))


def cyclic_bidiagonal_det(diag, band) -> float:
    """
    Determinant of the N x N matrix with diag on the diagonal and band
    coupling each row to the next one cyclically.
    """
    diag = np.asarray(diag, dtype=float)
    band = np.asarray(band, dtype=float)
    n = len(diag)
    return float(np.prod(diag) + (-1) ** (n + 1) * np.prod(band))


def _band_matrix(diag, band, upper):
    n = len(diag)
    rows = np.arange(n)
    cols = (rows + 1) % n if upper else (rows - 1) % n
    M = np.diag(np.asarray(diag, dtype=float))
    if n == 1:
        M[0, 0] += band[0]
        return M
    M[rows, cols] += band
    return M


def cyclic_bidiagonal_solve(diag, band, rhs, upper: bool = True
                            ) -> np.ndarray:
    """
    Solve diag[i] x[i] + band[i] x[i+1] = rhs[i] (indices mod N), or
    with x[i-1] in place of x[i+1] when upper is False.

    x[0] is kept as a parameter t, one triangular sweep expresses every
    unknown as p + q t, and closing the cycle fixes t.
    """
    diag = np.asarray(diag, dtype=float)
    band = np.asarray(band, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = len(diag)
    if not (len(band) == n == len(rhs)):
        raise ValueError(f'Bad lengths {len(diag)=}, {len(band)=}, '
                         f'{len(rhs)=}')
    if n == 0:
        return np.zeros(0)
    if not upper:
        # reversing the unknowns turns the lower band into an upper one
        order = np.arange(n)[::-1]
        diag_r, rhs_r = diag[order], rhs[order]
        band_r = band[order]
        x = cyclic_bidiagonal_solve(diag_r, band_r, rhs_r, upper=True)
        return x[order]
    scale = max(np.max(np.abs(diag)), np.max(np.abs(band)))
    if scale == 0.0:
        raise SingularMatrixError('cyclic system is identically zero')
    if np.min(np.abs(diag)) <= SINGULAR_TOL * scale:
        return dense_solve(_band_matrix(diag, band, upper=True), rhs)

    # x[i] = (rhs[i] - band[i] x[i+1]) / diag[i], swept from i = n-1 down
    p = np.empty(n)
    q = np.empty(n)
    p_next, q_next = 0.0, 1.0
    for i in range(n - 1, -1, -1):
        p[i] = (rhs[i] - band[i] * p_next) / diag[i]
        q[i] = -band[i] * q_next / diag[i]
        p_next, q_next = p[i], q[i]
    closing = 1.0 - q[0]
    if abs(closing) <= SINGULAR_TOL:
        raise SingularMatrixError(
            f'cyclic two-band system of size {n} is singular '
            f'(scaled determinant {closing:.3e})')
    t = p[0] / closing
    return p + q * t


@handle_errors
def dense_solve(A, b) -> np.ndarray:
    """Partial-pivoting LU solve; near-zero pivots count as singular."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f'Bad shape for {A.shape=}')
    if A.shape[0] == 0:
        return np.zeros(b.shape)
    lu, piv = sla.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= SINGULAR_TOL * max(pivots.max(), 1e-300):
        raise SingularMatrixError(
            f'matrix is singular to working precision '
            f'(pivot ratio {pivots.min() / max(pivots.max(), 1e-300):.3e})')
    return sla.lu_solve((lu, piv), b)


def dense_eig_max(A, tol: float = EIG_TOL, max_iter: int = EIG_MAX_ITER,
                  seed: int = None) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f'Bad shape for {A.shape=}')
    n = A.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(cfg.SEED if seed is None else seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for k in range(max_iter):
        w = A @ v
        lam_new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        step = abs(lam_new - lam)
        if k > 0 and step <= tol * EIG_STEP_RATIO * abs(lam_new):
            return lam_new
        lam = lam_new
    raise NotConvergedError(
        f'power iteration did not settle in {max_iter} steps',
        residual=abs(lam_new - lam), iterations=max_iter)
