"""Structure-preserving time stepping for dissipative gradient flows.

Each implicit step minimizes free energy plus a quadratic dissipation of the
face fluxes, subject to a discrete continuity equation, so energy decay and
mass conservation hold by construction.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .config import RunConfig, builtin_initial_condition, load_config, parse_config
from .diagnostics import (
    TOLERANCES,
    DiagnosticsRow,
    check_dissipation_inequality,
    kkt_residual_report,
    make_row,
    mass_totals,
)
from .errors import (
    DomainViolation,
    NoConvergence,
    NonNeutralSource,
    OnsagerError,
    ParseError,
    ShiftViolation,
    SingularSystem,
    UnknownProfile,
    ValidationError,
)
from .grid import (
    PeriodicGrid,
    average_to_faces,
    divergence_to_centers,
    gradient_to_faces,
    integrate_cells,
    solve_periodic_poisson,
)
from .models import (
    PNP,
    AllenCahn,
    CahnHilliard,
    FokkerPlanck,
    MaxwellStefan,
    PorousMedia,
    SystemState,
    chemical_potential,
    dissipation,
    energy,
    solve_electrostatic_potential,
    stationary_residual,
)
from .optim import OptimizerConfig, KKTPoint, aepg, newton_kkt, projected_gradient, solve
from .simulation import OutputBundle, run_simulation, write_series, write_snapshot
from .step import StepResult, advance, build_step, ode_minimizing_movement

__all__ = [
    "RunConfig",
    "builtin_initial_condition",
    "load_config",
    "parse_config",
    "TOLERANCES",
    "DiagnosticsRow",
    "check_dissipation_inequality",
    "kkt_residual_report",
    "make_row",
    "mass_totals",
    "DomainViolation",
    "NoConvergence",
    "NonNeutralSource",
    "OnsagerError",
    "ParseError",
    "ShiftViolation",
    "SingularSystem",
    "UnknownProfile",
    "ValidationError",
    "PeriodicGrid",
    "average_to_faces",
    "divergence_to_centers",
    "gradient_to_faces",
    "integrate_cells",
    "solve_periodic_poisson",
    "PNP",
    "AllenCahn",
    "CahnHilliard",
    "FokkerPlanck",
    "MaxwellStefan",
    "PorousMedia",
    "SystemState",
    "chemical_potential",
    "dissipation",
    "energy",
    "solve_electrostatic_potential",
    "stationary_residual",
    "OptimizerConfig",
    "KKTPoint",
    "aepg",
    "newton_kkt",
    "projected_gradient",
    "solve",
    "OutputBundle",
    "run_simulation",
    "write_series",
    "write_snapshot",
    "StepResult",
    "advance",
    "build_step",
    "ode_minimizing_movement",
]
