"""Per-step structure checks and time-series records."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import PorousMedia
from .optim import kkt_residual

__all__ = [
    "TOLERANCES",
    "DiagnosticsRow",
    "mass_totals",
    "check_dissipation_inequality",
    "kkt_residual_report",
    "simplex_deviation",
    "make_row",
]

#: Every tolerance the package asserts against, echoed into output headers.
TOLERANCES = {
    "energy_inequality_rel": 1e-9,
    "mass_drift_rel": 1e-10,
    "simplex_abs": 1e-10,
    "kkt_rel": 1e-9,
    "constraint_abs": 1e-11,
    "poisson_residual_abs": 1e-12,
    "linear_abs": 1e-12,
}


@dataclass(frozen=True)
class DiagnosticsRow:
    step: int
    time: float
    energy: float
    dissipation_over_tau: float
    mass: tuple
    min_value: tuple
    max_value: tuple
    inner_iterations: int = 0
    kkt_residual: float = 0.0
    constraint_residual: float = 0.0

    def __post_init__(self):
        values = [self.time, self.energy, self.dissipation_over_tau, self.kkt_residual,
                  self.constraint_residual, *self.mass, *self.min_value, *self.max_value]
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite diagnostics at step {self.step}")


def mass_totals(state, grid=None, porosity=None):
    """Integral of each component; pore-volume weighted when ``porosity`` is given."""
    grid = grid or state.grid
    u = state.components
    if porosity is not None:
        u = u * np.asarray(porosity)[None, :]
    return tuple(grid.integrate(c) for c in u)


def simplex_deviation(state):
    """Largest per-cell deviation of ``sum_i u_i`` from one."""
    return float(np.max(np.abs(state.components.sum(axis=0) - 1.0)))


def check_dissipation_inequality(row_prev, row_new, rel_tol=TOLERANCES["energy_inequality_rel"]):
    """``E_new + Phi/tau <= E_prev`` up to ``rel_tol * (1 + |E_prev|)``."""
    bound = row_prev.energy + rel_tol * (1.0 + abs(row_prev.energy))
    return bool(row_new.energy + row_new.dissipation_over_tau <= bound)


def kkt_residual_report(problem, point):
    """Norm of ``(grad L + B^T lam, B theta - b)`` at a solver result."""
    return kkt_residual(problem, point.theta, point.multipliers)


def make_row(step, time, state, model, result=None):
    """Diagnostics for ``state``; ``result`` supplies the per-step solver figures."""
    porosity = model.porosity if isinstance(model, PorousMedia) else None
    u = state.components
    energy = result.energy_after if result is not None else model.energy(state.grid, u)
    return DiagnosticsRow(
        step=int(step),
        time=float(time),
        energy=float(energy),
        dissipation_over_tau=0.0 if result is None else float(result.dissipation_over_tau),
        mass=mass_totals(state, porosity=porosity),
        min_value=tuple(float(v) for v in u.min(axis=1)),
        max_value=tuple(float(v) for v in u.max(axis=1)),
        inner_iterations=0 if result is None else int(result.iterations),
        kkt_residual=0.0 if result is None else float(result.kkt_residual),
        constraint_residual=0.0 if result is None else float(result.constraint_residual),
    )
