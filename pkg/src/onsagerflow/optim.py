"""Solvers for ``min L(theta)  s.t.  B theta = b``.

Three methods share one problem interface (:class:`ConstrainedProblem`):

``projected_gd``
    ``theta <- theta - eta * G grad L`` with ``G = I - B^T (B B^T)^{-1} B``.
``aepg``
    Adaptive energy-based preconditioned gradient on ``l = sqrt(L + c)``::

        v     = G grad l(theta)
        r    <- r / (1 + 2 eta |v|^2)
        theta <- theta - 2 eta r v

    ``r`` is non-increasing for every ``eta > 0``.
``newton_kkt``
    Newton on the Lagrange system ``grad L + B^T lam = 0, B theta = b``,
    with a fraction-to-boundary cap on the step for barrier variables and
    step halving until the KKT residual decreases.

All iterates start from ``problem.theta0``, which must be feasible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainViolation, NoConvergence, ShiftViolation, SingularSystem

logger = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "OptimizerConfig",
    "KKTPoint",
    "ConstrainedProblem",
    "FunctionProblem",
    "apply_projection",
    "least_squares_multipliers",
    "kkt_residual",
    "projected_gradient",
    "aepg",
    "newton_kkt",
    "solve",
]

METHODS = ("projected_gd", "aepg", "newton_kkt")

DEFAULT_MAX_ITERATIONS = {"projected_gd": 50_000, "aepg": 50_000, "newton_kkt": 50}


@dataclass(frozen=True)
class OptimizerConfig:
    """Inner-solver settings.

    ``kkt_tolerance`` is relative: a run stops once the KKT residual is below
    ``kkt_tolerance * (1 + |grad L(theta0)|)``.  ``aepg_shift=None`` picks
    ``c = 1 + max(0, -L(theta0))``.  ``max_iterations=None`` uses 50 for
    Newton and 50 000 for the first-order methods.
    """

    method: str = "newton_kkt"
    eta: float = 1.0
    aepg_shift: float | None = None
    max_iterations: int | None = None
    kkt_tolerance: float = 1e-9
    linear_tolerance: float = 1e-12
    damping: float = 0.95

    def __post_init__(self):
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.eta > 0:
            problems.append("eta must be positive")
        if not self.kkt_tolerance > 0:
            problems.append("kkt_tolerance must be positive")
        if not self.linear_tolerance > 0:
            problems.append("linear_tolerance must be positive")
        if not 0 < self.damping < 1:
            problems.append("damping must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            problems.append("max_iterations must be at least 1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def iteration_cap(self):
        if self.max_iterations is not None:
            return int(self.max_iterations)
        return DEFAULT_MAX_ITERATIONS[self.method]


@dataclass
class KKTPoint:
    theta: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    r_trace: list | None = None
    residual_trace: list = field(default_factory=list)
    method: str = ""


class ConstrainedProblem:
    """Linearly constrained minimization problem.

    Subclasses implement :meth:`objective`, :meth:`gradient` and, for Newton,
    :meth:`hessian`.  ``positive_mask`` flags entries of ``theta`` that sit
    inside a log barrier and must stay strictly positive.
    """

    def __init__(self, B, b, theta0, positive_mask=None):
        self.B = sp.csr_matrix(B)
        self.b = np.asarray(b, dtype=float)
        self.theta0 = np.asarray(theta0, dtype=float)
        self.n = self.theta0.size
        if self.B.shape != (self.b.size, self.n):
            raise ValueError(f"B has shape {self.B.shape}, expected ({self.b.size}, {self.n})")
        if positive_mask is None:
            positive_mask = np.zeros(self.n, dtype=bool)
        self.positive_mask = np.asarray(positive_mask, dtype=bool)
        self._gram_solve = None

    @property
    def n_constraints(self):
        return self.b.size

    def objective(self, theta):
        raise NotImplementedError

    def gradient(self, theta):
        raise NotImplementedError

    def hessian(self, theta):
        raise NotImplementedError

    def hessian_vector(self, theta, v):
        return self.hessian(theta) @ v

    def newton_matrix(self, theta):
        """Saddle matrix ``[[H, B^T], [B, 0]]`` plus the number of auxiliary rows."""
        H = sp.csr_matrix(self.hessian(theta))
        if self.n_constraints == 0:
            return H.tocsc(), 0
        return sp.bmat([[H, self.B.T], [self.B, None]], format="csc"), 0

    def is_interior(self, theta):
        return bool(np.all(theta[self.positive_mask] > 0))

    def constraint_residual(self, theta):
        if self.n_constraints == 0:
            return 0.0
        return float(np.linalg.norm(self.B @ theta - self.b))

    def gram_solve(self, rhs):
        """Solve ``(B B^T) x = rhs`` with a cached sparse LU factorization."""
        if self._gram_solve is None:
            gram = (self.B @ self.B.T).tocsc()
            self._gram_solve = spla.factorized(gram)
        return self._gram_solve(np.asarray(rhs, dtype=float))


class FunctionProblem(ConstrainedProblem):
    """Problem assembled from plain callables (handy for small examples)."""

    def __init__(self, objective, gradient, B, b, theta0, hessian=None, positive_mask=None):
        super().__init__(B, b, theta0, positive_mask)
        self._f = objective
        self._g = gradient
        self._h = hessian

    def objective(self, theta):
        return float(self._f(theta))

    def gradient(self, theta):
        return np.asarray(self._g(theta), dtype=float)

    def hessian(self, theta):
        if self._h is None:
            raise NotImplementedError("no Hessian supplied")
        return self._h(theta)


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------


def apply_projection(problem, v, linear_tolerance=1e-12):
    """Orthogonal projection of ``v`` onto the null space of ``B``."""
    v = np.asarray(v, dtype=float)
    if problem.n_constraints == 0:
        return v.copy()
    B = problem.B
    g = v - B.T @ problem.gram_solve(B @ v)
    # one refinement sweep removes the residual left by the factorization
    g -= B.T @ problem.gram_solve(B @ g)
    err = float(np.linalg.norm(B @ g))
    if err > linear_tolerance * max(1.0, float(np.linalg.norm(v))):
        raise NoConvergence(f"projection left |B G v| = {err:.3e}", residual=err)
    return g


def least_squares_multipliers(problem, grad):
    """``lam = -(B B^T)^{-1} B grad``, the multiplier minimizing the KKT residual."""
    if problem.n_constraints == 0:
        return np.zeros(0)
    return -problem.gram_solve(problem.B @ grad)


def kkt_residual(problem, theta, multipliers, grad=None):
    """Euclidean norm of ``(grad L + B^T lam, B theta - b)``."""
    if grad is None:
        grad = problem.gradient(theta)
    if problem.n_constraints == 0:
        return float(np.linalg.norm(grad))
    stat = grad + problem.B.T @ multipliers
    feas = problem.B @ theta - problem.b
    return float(np.sqrt(stat @ stat + feas @ feas))


def _safe_gradient(problem, theta):
    if not problem.is_interior(theta):
        return None
    try:
        return problem.gradient(theta)
    except DomainViolation:
        return None


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


def projected_gradient(problem, config=None):
    """Fixed-step projected gradient descent.

    Steps that leave the barrier domain are halved until the trial point is
    interior.
    """
    config = config or OptimizerConfig(method="projected_gd")
    theta = problem.theta0.copy()
    grad = problem.gradient(theta)
    tol = config.kkt_tolerance * (1.0 + float(np.linalg.norm(grad)))
    trace = []
    for it in range(config.iteration_cap + 1):
        pg = apply_projection(problem, grad, config.linear_tolerance)
        norm = float(np.linalg.norm(pg))
        trace.append(norm)
        if norm <= tol:
            lam = least_squares_multipliers(problem, grad)
            return KKTPoint(
                theta, lam, kkt_residual(problem, theta, lam, grad), it,
                residual_trace=trace, method="projected_gd",
            )
        if it == config.iteration_cap:
            break
        step = config.eta
        for _ in range(60):
            trial = theta - step * pg
            new_grad = _safe_gradient(problem, trial)
            if new_grad is not None:
                break
            step *= 0.5
        else:
            raise DomainViolation("projected gradient could not find an interior step")
        theta, grad = trial, new_grad
    lam = least_squares_multipliers(problem, grad)
    point = KKTPoint(theta, lam, kkt_residual(problem, theta, lam, grad), config.iteration_cap,
                     residual_trace=trace, method="projected_gd")
    raise NoConvergence(
        f"projected gradient: |G grad L| = {trace[-1]:.3e} > {tol:.3e}",
        iterations=config.iteration_cap, residual=point.kkt_residual, point=point,
    )


def aepg(problem, config=None):
    """Adaptive energy-based preconditioned gradient descent.

    When a step would leave the barrier domain the base step ``eta`` is halved
    for that iteration only, and ``r`` is updated with the halved value, so the
    recursion stays a contraction.
    """
    config = config or OptimizerConfig(method="aepg")
    theta = problem.theta0.copy()
    value = problem.objective(theta)
    grad = problem.gradient(theta)
    shift = config.aepg_shift
    if shift is None:
        shift = 1.0 + max(0.0, -value)
    if value + shift <= 0:
        raise ShiftViolation(f"L + c = {value + shift:.3e} <= 0 at the initial point")
    tol = config.kkt_tolerance * (1.0 + float(np.linalg.norm(grad)))
    r = float(np.sqrt(value + shift))
    r_trace = [r]
    trace = []
    for it in range(config.iteration_cap + 1):
        ell = np.sqrt(value + shift)
        v = apply_projection(problem, grad / (2.0 * ell), config.linear_tolerance)
        norm = float(2.0 * ell * np.linalg.norm(v))
        trace.append(norm)
        if norm <= tol:
            lam = least_squares_multipliers(problem, grad)
            return KKTPoint(
                theta, lam, kkt_residual(problem, theta, lam, grad), it,
                r_trace=r_trace, residual_trace=trace, method="aepg",
            )
        if it == config.iteration_cap:
            break
        vv = float(v @ v)
        eta = config.eta
        for _ in range(60):
            r_new = r / (1.0 + 2.0 * eta * vv)
            trial = theta - 2.0 * eta * r_new * v
            new_grad = _safe_gradient(problem, trial)
            if new_grad is not None:
                break
            eta *= 0.5
        else:
            raise DomainViolation("AEPG could not find an interior step")
        theta, grad, r = trial, new_grad, r_new
        value = problem.objective(theta)
        if value + shift <= 0:
            raise ShiftViolation(f"L + c = {value + shift:.3e} <= 0 at iteration {it + 1}")
        r_trace.append(r)
    lam = least_squares_multipliers(problem, grad)
    point = KKTPoint(theta, lam, kkt_residual(problem, theta, lam, grad), config.iteration_cap,
                     r_trace=r_trace, residual_trace=trace, method="aepg")
    raise NoConvergence(
        f"AEPG: |G grad L| = {trace[-1]:.3e} > {tol:.3e}",
        iterations=config.iteration_cap, residual=point.kkt_residual, point=point,
    )


def _solve_saddle(K, rhs, n):
    """Sparse LU solve, retrying with a growing diagonal shift on the theta block."""
    scale = max(1.0, float(abs(K).max()))
    for shift in (0.0, 1e-12, 1e-10, 1e-8):
        M = K
        if shift:
            d = np.zeros(K.shape[0])
            d[:n] = shift * scale
            M = (K + sp.diags(d)).tocsc()
        try:
            sol = spla.splu(M).solve(rhs)
        except RuntimeError:
            continue
        if np.all(np.isfinite(sol)):
            if shift:
                logger.debug("saddle system regularized with shift %.1e", shift)
            return sol
    raise SingularSystem("Newton saddle-point matrix is singular")


def _boundary_fraction(theta, step, mask, damping):
    """Largest alpha <= 1 keeping masked entries above (1 - damping) * current."""
    ds = step[mask]
    neg = ds < 0
    if not np.any(neg):
        return 1.0
    ratios = -theta[mask][neg] / ds[neg]
    return float(min(1.0, damping * ratios.min()))


def newton_kkt(problem, config=None):
    """Damped Newton iteration on the KKT system."""
    config = config or OptimizerConfig(method="newton_kkt")
    theta = problem.theta0.copy()
    n, l = problem.n, problem.n_constraints
    grad = problem.gradient(theta)
    tol = config.kkt_tolerance * (1.0 + float(np.linalg.norm(grad)))
    lam = least_squares_multipliers(problem, grad)
    res = kkt_residual(problem, theta, lam, grad)
    trace = [res]
    for it in range(config.iteration_cap + 1):
        if res <= tol:
            return KKTPoint(theta, lam, res, it, residual_trace=trace, method="newton_kkt")
        if it == config.iteration_cap:
            break
        K, n_aux = problem.newton_matrix(theta)
        rhs = np.zeros(n + l + n_aux)
        rhs[:n] = -(grad + (problem.B.T @ lam if l else 0.0))
        if l:
            rhs[n:n + l] = -(problem.B @ theta - problem.b)
        sol = _solve_saddle(K, rhs, n)
        dtheta, dlam = sol[:n], sol[n:n + l]

        alpha = _boundary_fraction(theta, dtheta, problem.positive_mask, config.damping)
        for _ in range(60):
            trial = theta + alpha * dtheta
            trial_lam = lam + alpha * dlam
            trial_grad = _safe_gradient(problem, trial)
            if trial_grad is not None:
                trial_res = kkt_residual(problem, trial, trial_lam, trial_grad)
                if trial_res < res:
                    break
            alpha *= 0.5
        else:
            point = KKTPoint(theta, lam, res, it, residual_trace=trace, method="newton_kkt")
            raise NoConvergence(
                f"Newton line search failed at iteration {it} (residual {res:.3e})",
                iterations=it, residual=res, point=point,
            )
        theta, lam, grad, res = trial, trial_lam, trial_grad, trial_res
        trace.append(res)
    point = KKTPoint(theta, lam, res, config.iteration_cap, residual_trace=trace, method="newton_kkt")
    raise NoConvergence(
        f"Newton: KKT residual {res:.3e} > {tol:.3e} after {config.iteration_cap} iterations",
        iterations=config.iteration_cap, residual=res, point=point,
    )


_DISPATCH = {"projected_gd": projected_gradient, "aepg": aepg, "newton_kkt": newton_kkt}


def solve(problem, config):
    """Run the method selected by ``config.method``."""
    return _DISPATCH[config.method](problem, config)
