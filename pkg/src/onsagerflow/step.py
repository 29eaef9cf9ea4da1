"""One implicit time step as a linearly constrained minimization.

Conserved models solve::

    min_{u, m}  E(u) + Phi(u^k; m) / tau
    s.t.        P (u_i - u_i^k) + d_h m_i = 0        for every species i
                sum_i d_h m_i = 0                    (volume-fraction models)

where ``m = tau * j`` is the scaled face flux and ``P`` is the porosity
(identity except for porous media).  Allen-Cahn is unconstrained::

    min_u  E(u) + Phi(u - u^k) / tau

The unknown vector is ``theta = (u_1, ..., u_s, m_1, ..., m_s)`` with every
``m_i`` laid out axis-major over faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NoConvergence
from .models import PNP, FokkerPlanck, PorousMedia, SystemState
from .optim import ConstrainedProblem, OptimizerConfig, solve

__all__ = [
    "StepProblem",
    "StepResult",
    "ode_minimizing_movement",
    "build_step",
    "objective_value",
    "objective_gradient",
    "constraint_apply",
    "constraint_apply_transpose",
    "advance",
]


class StepProblem(ConstrainedProblem):
    """Discrete Onsager step built by :func:`build_step`."""

    def __init__(self, model, previous, tau):
        if not tau > 0:
            raise ValueError("tau must be positive")
        grid = previous.grid
        u_prev = model.check_state(previous.components)
        self.model = model
        self.previous = previous
        self.grid = grid
        self.tau = float(tau)
        self.n_species = s = model.n_species
        nc = grid.n_cells
        self.n_u = s * nc
        self.n_m = s * grid.n_faces if model.conserved else 0
        self.joint = isinstance(model, FokkerPlanck) and model.dissipation_mode == "joint"
        if self.joint and grid.dim != 1:
            raise ValueError("joint dissipation mode is only defined in 1-D")

        B, b = self._constraints(u_prev)
        theta0 = np.concatenate([u_prev.ravel(), np.zeros(self.n_m)])
        mask = np.zeros(theta0.size, dtype=bool)
        if model.barrier:
            mask[: self.n_u] = True
        super().__init__(B, b, theta0, mask)

        if self.joint:
            self.metric = None
        elif model.conserved:
            self.metric = model.metric_matrix(grid, u_prev)
        else:
            self.metric = model.metric_matrix(grid)
        self.energy_before = model.energy(grid, u_prev)

    # -- layout ----------------------------------------------------------------

    def split(self, theta):
        """Views ``(u, m)`` with shapes ``(s, n_cells)`` and ``(s, dim, n_cells)``."""
        theta = np.asarray(theta, dtype=float)
        u = theta[: self.n_u].reshape(self.n_species, self.grid.n_cells)
        if not self.model.conserved:
            return u, None
        m = theta[self.n_u:].reshape(self.n_species, self.grid.dim, self.grid.n_cells)
        return u, m

    def pack(self, u, m=None):
        parts = [np.asarray(u, dtype=float).ravel()]
        if self.model.conserved:
            parts.append(np.asarray(m, dtype=float).ravel())
        return np.concatenate(parts)

    def _constraints(self, u_prev):
        model, grid = self.model, self.grid
        s, nc = self.n_species, grid.n_cells
        if not model.conserved:
            return sp.csr_matrix((0, self.n_u)), np.zeros(0)
        if isinstance(model, PorousMedia):
            weight = sp.diags(np.tile(model.porosity, s))
            b = (model.porosity[None, :] * u_prev).ravel()
        else:
            weight = sp.identity(s * nc)
            b = u_prev.ravel().copy()
        div = grid.divergence_matrix
        rows = [sp.hstack([weight, sp.block_diag([div] * s)])]
        if model.simplex:
            # the sum over cells of any divergence vanishes, so the last row of
            # the volume constraint is implied by the others; dropping it keeps
            # B B^T nonsingular
            total = sp.hstack([sp.csr_matrix((nc, s * nc)), sp.hstack([div] * s)]).tocsr()
            rows.append(total[:-1])
            b = np.concatenate([b, np.zeros(nc - 1)])
        return sp.vstack(rows, format="csr"), b

    # -- objective ---------------------------------------------------------------

    def dissipation_value(self, theta):
        """``Phi`` at ``theta`` (not divided by tau)."""
        u, m = self.split(theta)
        if not self.model.conserved:
            du = (u - self.previous.components).ravel()
            return 0.5 * float(du @ (self.metric @ du))
        if self.joint:
            return self.model.joint_terms(self.grid, u, m)[0]
        mm = m.ravel()
        return 0.5 * float(mm @ (self.metric @ mm))

    def objective(self, theta):
        u, _ = self.split(theta)
        return self.model.energy(self.grid, u) + self.dissipation_value(theta) / self.tau

    def gradient(self, theta):
        u, m = self.split(theta)
        g_u = self.model.energy_gradient(self.grid, u).ravel()
        if not self.model.conserved:
            du = (u - self.previous.components).ravel()
            return g_u + (self.metric @ du) / self.tau
        if self.joint:
            _, gu, gm, *_ = self.model.joint_terms(self.grid, u, m)
            return np.concatenate([g_u + gu / self.tau, gm / self.tau])
        return np.concatenate([g_u, (self.metric @ m.ravel()) / self.tau])

    def hessian(self, theta):
        """Sparse Hessian; for PNP the non-local electrostatic block is omitted."""
        u, m = self.split(theta)
        h_e = self.model.energy_hessian(self.grid, u)
        if not self.model.conserved:
            return (h_e + self.metric / self.tau).tocsr()
        if self.joint:
            _, _, _, h_uu, h_um, h_mm = self.model.joint_terms(self.grid, u, m)
            return sp.bmat(
                [[h_e + h_uu / self.tau, h_um / self.tau], [h_um.T / self.tau, h_mm / self.tau]],
                format="csr",
            )
        return sp.block_diag([h_e, self.metric / self.tau], format="csr")

    def hessian_vector(self, theta, v):
        out = self.hessian(theta) @ v
        if isinstance(self.model, PNP):
            out[: self.n_u] += self.model.electrostatic_hessian_vector(self.grid, v[: self.n_u]).ravel()
        return out

    def newton_matrix(self, theta):
        if not isinstance(self.model, PNP):
            return super().newton_matrix(theta)
        # Electrostatics enter the Hessian as vol * Z^T (eps L)^+ Z.  Rather than
        # forming that dense block, carry psi = (eps L)^+ Z dtheta and a scalar
        # kappa pinning mean(psi) = 0 as extra unknowns; the system stays sparse
        # and symmetric.
        model, grid = self.model, self.grid
        vol, nc = grid.cell_volume, grid.n_cells
        H = self.hessian(theta)
        Z = sp.hstack(
            [sp.hstack([zi * sp.identity(nc) for zi in model.charges]),
             sp.csr_matrix((nc, self.n_m))]
        ).tocsr()
        neg_lap = -grid.laplacian_matrix
        ones = sp.csr_matrix(np.ones((nc, 1)))
        K = sp.bmat(
            [
                [H, self.B.T, vol * Z.T, None],
                [self.B, None, None, None],
                [vol * Z, None, -vol * model.permittivity * neg_lap, vol * ones],
                [None, None, vol * ones.T, None],
            ],
            format="csc",
        )
        return K, nc + 1


@dataclass
class StepResult:
    state: SystemState
    flux: np.ndarray | None
    energy_before: float
    energy_after: float
    dissipation_value: float
    iterations: int
    constraint_residual: float
    kkt_residual: float
    multipliers: np.ndarray | None = None
    tau: float = 0.0

    @property
    def dissipation_over_tau(self):
        return self.dissipation_value / self.tau

    @property
    def energy_inequality_slack(self):
        """``E_k - E_{k+1} - Phi/tau``; nonnegative up to round-off for a minimizer."""
        return self.energy_before - self.energy_after - self.dissipation_over_tau


def build_step(model, previous, tau, grid=None):
    """Assemble the constrained problem for one step from ``previous``."""
    if grid is not None and grid != previous.grid:
        raise ValueError("grid does not match the state's grid")
    return StepProblem(model, previous, tau)


def objective_value(problem, theta):
    return problem.objective(theta)


def objective_gradient(problem, theta):
    return problem.gradient(theta)


def constraint_apply(problem, theta):
    return problem.B @ np.asarray(theta, dtype=float)


def constraint_apply_transpose(problem, lam):
    return problem.B.T @ np.asarray(lam, dtype=float)


def advance(problem, solver=None):
    """Solve one step and package the new state.

    Raises
    ------
    NoConvergence
        If the inner solver fails; the exception keeps the last iterate.
    """
    solver = solver or OptimizerConfig()
    point = solve(problem, solver)
    u, m = problem.split(point.theta)
    potential = None
    if isinstance(problem.model, PNP):
        potential = problem.model.potential(problem.grid, u)
    state = SystemState(problem.grid, u.copy(), potential)
    return StepResult(
        state=state,
        flux=None if m is None else m.copy(),
        energy_before=problem.energy_before,
        energy_after=problem.model.energy(problem.grid, u),
        dissipation_value=problem.dissipation_value(point.theta),
        iterations=point.iterations,
        constraint_residual=problem.constraint_residual(point.theta),
        kkt_residual=point.kkt_residual,
        multipliers=point.multipliers,
        tau=problem.tau,
    )


def ode_minimizing_movement(metric, potential, gradient, y_prev, tau, hessian=None,
                            tol=1e-10, max_iterations=100):
    """Minimizing-movement step ``argmin_y U(y) + |y - y_k|_A^2 / (2 tau)``.

    Damped Newton with Armijo backtracking; the Hessian is shifted to be
    positive definite where ``U`` is nonconvex.  Without ``hessian`` the
    Hessian of ``U`` is approximated by central differences of ``gradient``.

    Returns the stationary point; raises :class:`NoConvergence` if the gradient
    norm does not reach ``tol``.
    """
    A = np.atleast_2d(np.asarray(metric, dtype=float))
    y_prev = np.atleast_1d(np.asarray(y_prev, dtype=float))
    if not tau > 0:
        raise ValueError("tau must be positive")
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.abs(A).max()):
        raise ValueError("metric must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError("metric must be positive definite") from None

    def f(y):
        d = y - y_prev
        return float(potential(y)) + float(d @ A @ d) / (2 * tau)

    def g(y):
        return np.atleast_1d(np.asarray(gradient(y), dtype=float)) + A @ (y - y_prev) / tau

    def hess_u(y):
        if hessian is not None:
            return np.atleast_2d(np.asarray(hessian(y), dtype=float))
        n = y.size
        H = np.empty((n, n))
        eps = 1e-6 * max(1.0, float(np.abs(y).max()))
        for k in range(n):
            e = np.zeros(n)
            e[k] = eps
            H[:, k] = (np.atleast_1d(gradient(y + e)) - np.atleast_1d(gradient(y - e))) / (2 * eps)
        return 0.5 * (H + H.T)

    y = y_prev.copy()
    for it in range(max_iterations):
        gy = g(y)
        if np.linalg.norm(gy) <= tol:
            return y
        H = hess_u(y) + A / tau
        # nonconvex U: shift the Hessian until it is positive definite
        lam = np.linalg.eigvalsh(H)
        if lam[0] <= 1e-10 * max(1.0, abs(lam[-1])):
            H = H + (1e-6 * max(1.0, abs(lam[-1])) - lam[0]) * np.eye(H.shape[0])
        step = -np.linalg.solve(H, gy)
        fy, alpha = f(y), 1.0
        noise = 64 * np.finfo(float).eps * (1.0 + abs(fy))
        if f(y + step) <= fy + noise and np.linalg.norm(g(y + step)) < np.linalg.norm(gy):
            # near the minimum the decrease in f is below round-off; judge by the gradient
            y = y + step
            continue
        while f(y + alpha * step) > fy + 1e-4 * alpha * (step @ gy) and alpha > 1e-14:
            alpha *= 0.5
        y = y + alpha * step
    if np.linalg.norm(g(y)) <= tol:
        return y
    raise NoConvergence(
        "minimizing movement did not converge", iterations=max_iterations,
        residual=float(np.linalg.norm(g(y))),
    )
