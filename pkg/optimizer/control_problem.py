"""
The discrete Dirichlet boundary control problem

    min J_h(u) = 1/2 ||y_h(u) - y_d||^2 + alpha/2 ||P1~ u||^2_{L2(Gamma)}
    over piecewise constant boundary controls u_a <= u <= u_b,

with the Crouzeix-Raviart state y_h = y_f + y_0 + z~, z = P1~ u.
The objective, the adjoint right-hand side and the flux functional are
all evaluated with one triangle rule, so reduced_gradient is the exact
derivative of the objective as computed.
"""
import logging
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

import assembly.forms as frm
import config.settings as cfg
import control_ops.boundary_ops as bops
import fespace.quadrature as quad
import fespace.spaces as spc
import linalg.solvers as slv
import mesh.triangulation as tri

logger = logging.getLogger(__name__)

ARMIJO_SIGMA = 1e-4
# J values closer than this (relative) count as equal in the line search
ARMIJO_SLACK = 1e-13
MAX_BACKTRACKS = 60
STEP_MIN = 1e-12
STEP_MAX = 1e12


class OptimizationError(slv.SolverError):
    def __init__(self, message, control=None, residual=None, history=None):
        super().__init__(message)
        self.control = control
        self.residual = residual
        self.history = history or []


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form optimal triple; every callable takes (x, y)."""
    control: Callable
    state: Callable
    adjoint: Callable
    flux: Callable
    state_grad: Optional[Callable] = None
    adjoint_grad: Optional[Callable] = None


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mesh: tri.Mesh
    alpha: float
    bounds: bops.BoxBounds
    f: Callable
    y_d: Callable
    exact: Optional[ExactSolution] = None
    name: str = 'custom'

    def __post_init__(self):
        alpha = float(self.alpha)
        if not np.isfinite(alpha) or alpha <= 0.0:
            raise ValueError(f'Bad value for alpha={self.alpha!r}')
        object.__setattr__(self, 'alpha', alpha)
        if not isinstance(self.bounds, bops.BoxBounds):
            raise ValueError(f'Bad type for {type(self.bounds)=}')
        for name in ('f', 'y_d'):
            if not callable(getattr(self, name)):
                raise ValueError(f'Bad value for {name}: not callable')

    def on_mesh(self, m: tri.Mesh) -> 'ProblemSpec':
        """The same data on another mesh."""
        return ProblemSpec(m, self.alpha, self.bounds, self.f, self.y_d,
                           self.exact, self.name)


@dataclass(frozen=True, eq=False)
class StateSolution:
    y_f: spc.CrFunction
    y_0: spc.CrFunction
    z_tilde: spc.W1Function
    trace: spc.BoundaryTrace

    @property
    def mesh(self) -> tri.Mesh:
        return self.y_f.mesh

    @property
    def composite(self) -> spc.CompositeFunction:
        return spc.CompositeFunction((self.y_f + self.y_0, self.z_tilde))

    def values(self, points) -> np.ndarray:
        return self.composite.values(points)


class IterationRecord(NamedTuple):
    iteration: int
    objective: float
    step: float
    residual: float


@dataclass(eq=False)
class OptimalitySolution:
    control: spc.BoundaryControl
    state: StateSolution
    adjoint: spc.CrFunction
    flux: spc.BoundaryTrace
    objective: float
    kkt_residual: float
    iterations: int
    history: list = field(default_factory=list)

    @property
    def mesh(self) -> tri.Mesh:
        return self.control.mesh

    @property
    def enriched_control_norm(self) -> float:
        """||P1~ u||_{L2(Gamma)}."""
        return self.state.trace.l2_norm()

    def active_set(self, bounds: bops.BoxBounds, tol: float = 1e-12) -> tuple:
        u = self.control.coefficients
        scale = tol * max(1.0, abs(bounds.u_a), abs(bounds.u_b))
        return (np.flatnonzero(u <= bounds.u_a + scale),
                np.flatnonzero(u >= bounds.u_b - scale))


@dataclass(eq=False)
class Evaluation:
    """Everything computed at one control."""
    control: spc.BoundaryControl
    state: StateSolution
    objective: float
    residual_values: np.ndarray
    adjoint: spc.CrFunction = None
    flux_functional: np.ndarray = None
    gradient: np.ndarray = None


class DiscreteControlProblem:
    """
    The assembled problem on one mesh. y_f and the target values at the
    quadrature points are computed once; every control evaluation then
    costs one state solve, and a gradient one adjoint solve more.
    """
    def __init__(self, spec: ProblemSpec, method: str = None,
                 order: int = None):
        self.spec = spec
        self.mesh = spec.mesh
        self.method = method
        self.forms = frm.get_forms(self.mesh)
        self.rule = quad.quadrature_triangle(order or cfg.QUAD_ORDER)
        x, y, w = quad.physical_points(self.mesh, self.rule)
        self.weights = w
        self.y_d_values = np.broadcast_to(
            np.asarray(spec.y_d(x, y), dtype=float), x.shape)
        load = frm.cr_moments(
            self.mesh,
            np.broadcast_to(np.asarray(spec.f(x, y), dtype=float), x.shape),
            self.rule)
        self.y_f = spc.CrFunction(self.mesh, self.forms.solve_interior(
            load[self.mesh.interior_edges], method))

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def bounds(self) -> bops.BoxBounds:
        return self.spec.bounds

    def control(self, values) -> spc.BoundaryControl:
        if isinstance(values, spc.BoundaryControl):
            return values
        return spc.BoundaryControl(self.mesh, values)

    def inner(self, a, b) -> float:
        """L2(Gamma) inner product of two control coefficient vectors."""
        return float(np.sum(self.mesh.boundary_lengths * a * b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def state(self, u) -> StateSolution:
        z = bops.p1_tilde(self.control(u))
        rhs = -(self.forms.coupling_ib @ z.coefficients)
        y_0 = spc.CrFunction(self.mesh,
                             self.forms.solve_interior(rhs, self.method))
        return StateSolution(self.y_f, y_0, spc.tilde_extension(z), z)

    def evaluate(self, u) -> Evaluation:
        u = self.control(u)
        state = self.state(u)
        r = state.values(self.rule.points) - self.y_d_values
        z = state.trace.coefficients
        J = (0.5 * float(np.sum(self.weights * r * r))
             + 0.5 * self.alpha * float(z @ (self.forms.boundary_mass @ z)))
        return Evaluation(u, state, J, r)

    def adjoint(self, ev: Evaluation) -> spc.CrFunction:
        """xi in V_h^0 with a_pw(xi, v) = (y_h - y_d, v) for v in V_h^0."""
        if ev.adjoint is None:
            rhs = frm.cr_moments(self.mesh, ev.residual_values, self.rule)
            ev.adjoint = spc.CrFunction(self.mesh, self.forms.solve_interior(
                rhs[self.mesh.interior_edges], self.method))
        return ev.adjoint

    def flux_functional(self, ev: Evaluation) -> np.ndarray:
        """F[r] = a_pw(xi, psi_r) - (y_h - y_d, psi_r), boundary vertices."""
        if ev.flux_functional is None:
            xi = self.adjoint(ev)
            moments = frm.p1_moments(self.mesh, ev.residual_values, self.rule)
            ev.flux_functional = (
                self.forms.coupling_ib.T @ xi.coefficients[
                    self.mesh.interior_edges]
                - moments[self.mesh.boundary_vertices])
        return ev.flux_functional

    def flux(self, ev: Evaluation) -> spc.BoundaryTrace:
        F = self.flux_functional(ev)
        return spc.BoundaryTrace(self.mesh,
                                 self.forms.boundary_mass_solver(F))

    def gradient(self, ev: Evaluation) -> np.ndarray:
        """
        Riesz representative in the L2(Gamma) metric of the controls:
        g = D^-1 B^-T (alpha M z - F).
        """
        if ev.gradient is None:
            z = ev.state.trace.coefficients
            w = (self.alpha * (self.forms.boundary_mass @ z)
                 - self.flux_functional(ev))
            ev.gradient = (bops.p1_tilde_transpose(self.mesh, w)
                           / self.mesh.boundary_lengths)
        return ev.gradient

    def projected_residual(self, u, g) -> float:
        u = np.asarray(u, dtype=float)
        return self.norm(u - bops.clamp_box(u - g, self.bounds))

    def kkt_residual(self, u) -> float:
        ev = self.evaluate(u)
        return self.projected_residual(ev.control.coefficients,
                                       self.gradient(ev))

    def solve(self, u0=None, tau: float = None, tol: float = None,
              max_iter: int = None, armijo: bool = True
              ) -> OptimalitySolution:
        """
        Projected gradient u <- clamp(u - tau g). With armijo the step
        starts from a Barzilai-Borwein guess and is halved until the
        objective decreases sufficiently; without it tau is fixed.
        """
        if not armijo and (tau is None or tau <= 0):
            raise ValueError(f'Bad value for {tau=} without line search')
        if tau is not None and tau <= 0:
            raise ValueError(f'Bad value for {tau=}')
        tol = cfg.KKT_TOL if tol is None else tol
        max_iter = cfg.MAX_ITER if max_iter is None else max_iter
        n = self.mesh.num_boundary_edges
        u = np.zeros(n) if u0 is None else np.array(
            getattr(u0, 'coefficients', u0), dtype=float)
        stop = tol * (1.0 + self.norm(u))
        u = bops.clamp_box(u, self.bounds)
        step = 1.0 if tau is None else tau

        ev = self.evaluate(u)
        g = self.gradient(ev)
        history = []
        for k in range(max_iter + 1):
            res = self.projected_residual(u, g)
            history.append(IterationRecord(k, ev.objective, step, res))
            logger.debug('iter %d J=%.12e step=%.3e kkt=%.3e', k,
                         ev.objective, step, res)
            if res <= stop:
                return self._solution(ev, res, k, history)
            if k == max_iter:
                break
            direction = bops.clamp_box(u - step * g, self.bounds) - u
            if armijo:
                slope = self.inner(g, direction)
                lam = 1.0
                for _ in range(MAX_BACKTRACKS):
                    trial = self.evaluate(
                        bops.clamp_box(u + lam * direction, self.bounds))
                    if (trial.objective <= ev.objective + ARMIJO_SIGMA * lam
                            * slope + ARMIJO_SLACK * abs(ev.objective)):
                        break
                    lam *= 0.5
                else:
                    raise OptimizationError(
                        f'line search failed at iteration {k}', control=u,
                        residual=res, history=history)
            else:
                trial = self.evaluate(
                    bops.clamp_box(u + direction, self.bounds))
            u_new = trial.control.coefficients
            g_new = self.gradient(trial)
            if armijo:
                s = u_new - u
                yv = g_new - g
                sy = self.inner(s, yv)
                step = (float(np.clip(self.inner(s, s) / sy, STEP_MIN,
                                      STEP_MAX)) if sy > 0 else STEP_MAX)
            u, g, ev = u_new, g_new, trial
        logger.warning('projected gradient stopped after %d iterations, '
                       'kkt residual %.3e', max_iter, res)
        raise OptimizationError(
            f'no convergence in {max_iter} iterations, '
            f'kkt residual {res:.3e} > {stop:.3e}',
            control=spc.BoundaryControl(self.mesh, u), residual=res,
            history=history)

    def _solution(self, ev, res, iterations, history):
        logger.debug('converged in %d iterations, J=%.12e', iterations,
                     ev.objective)
        return OptimalitySolution(
            control=ev.control, state=ev.state, adjoint=self.adjoint(ev),
            flux=self.flux(ev), objective=ev.objective, kkt_residual=res,
            iterations=iterations, history=history)


_problems = weakref.WeakKeyDictionary()
_problems_lock = threading.Lock()


def discrete_problem(p: ProblemSpec, method: str = None
                     ) -> DiscreteControlProblem:
    """Cached DiscreteControlProblem for the configured solver."""
    if method is not None:
        return DiscreteControlProblem(p, method)
    with _problems_lock:
        prob = _problems.get(p)
    if prob is None:
        prob = DiscreteControlProblem(p)
        with _problems_lock:
            prob = _problems.setdefault(p, prob)
    return prob


def solve_state(p: ProblemSpec, u) -> StateSolution:
    return discrete_problem(p).state(u)


def solve_adjoint(p: ProblemSpec, y: StateSolution) -> spc.CrFunction:
    prob = discrete_problem(p)
    r = y.values(prob.rule.points) - prob.y_d_values
    return prob.adjoint(Evaluation(None, y, np.nan, r))


def discrete_flux(xi: spc.CrFunction, y: StateSolution, p: ProblemSpec
                  ) -> spc.BoundaryTrace:
    prob = discrete_problem(p)
    r = y.values(prob.rule.points) - prob.y_d_values
    return prob.flux(Evaluation(None, y, np.nan, r, adjoint=xi))


def objective(p: ProblemSpec, u) -> float:
    return discrete_problem(p).evaluate(u).objective


def reduced_gradient(p: ProblemSpec, u) -> spc.BoundaryControl:
    prob = discrete_problem(p)
    return spc.BoundaryControl(p.mesh, prob.gradient(prob.evaluate(u)))


def kkt_residual(p: ProblemSpec, u) -> float:
    return discrete_problem(p).kkt_residual(u)


def solve_control(p: ProblemSpec, tau: float = None, tol: float = None,
                  max_iter: int = None, u0=None, armijo: bool = True,
                  method: str = None) -> OptimalitySolution:
    return discrete_problem(p, method).solve(u0, tau, tol, max_iter, armijo)
