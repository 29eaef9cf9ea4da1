"""Batch driver: run a configuration and write series, snapshots and a manifest.

Output layout for a run with label ``L`` under directory ``D``::

    D/L/manifest.json
    D/L/series.csv
    D/L/snapshot_000000.csv   (initial state)
    D/L/snapshot_<step>.csv   (every ``snapshot_every`` steps and the final step)
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, read_snapshot
from .diagnostics import TOLERANCES, make_row
from .errors import DomainViolation, NoConvergence, ShiftViolation, SingularSystem
from .step import advance, build_step

logger = logging.getLogger(__name__)

__all__ = [
    "OutputBundle",
    "series_header",
    "write_series",
    "write_snapshot",
    "read_snapshot",
    "run_simulation",
]

_FMT = ".17g"


def _code_version():
    from . import __version__

    return __version__


@dataclass
class OutputBundle:
    """Paths produced by :func:`run_simulation` plus the in-memory rows."""

    directory: Path
    manifest_path: Path
    series_path: Path
    snapshot_paths: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    status: str = "pending"
    failure: dict | None = None

    @property
    def ok(self):
        return self.status == "completed"


def series_header(n_species):
    cols = ["step", "time", "energy", "dissipation_over_tau", "kkt_residual",
            "constraint_residual", "inner_iterations"]
    for prefix in ("mass", "min", "max"):
        cols += [f"{prefix}_{i + 1}" for i in range(n_species)]
    return cols


def _tolerance_lines():
    return [f"# tolerance {key} {value!r}" for key, value in TOLERANCES.items()]


def write_series(rows, path, n_species=None):
    """Write diagnostics rows as CSV preceded by ``#`` tolerance lines.

    ``n_species`` fixes the column count when ``rows`` is empty (default 1).
    """
    rows = list(rows)
    if n_species is None:
        n_species = len(rows[0].mass) if rows else 1
    lines = _tolerance_lines() + [",".join(series_header(n_species))]
    for r in rows:
        vals = [str(r.step), format(r.time, _FMT), format(r.energy, _FMT),
                format(r.dissipation_over_tau, _FMT), format(r.kkt_residual, _FMT),
                format(r.constraint_residual, _FMT), str(r.inner_iterations)]
        vals += [format(v, _FMT) for v in (*r.mass, *r.min_value, *r.max_value)]
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot(state, path):
    """Write ``state`` as CSV: header lines, then one row per cell (C order)."""
    grid = state.grid
    u = state.components
    idx = grid.cell_indices()
    lines = [
        f"# dim {grid.dim}",
        "# n_per_axis " + " ".join(str(k) for k in grid.n),
        "# h " + " ".join(format(h, _FMT) for h in grid.spacing),
        f"# components {u.shape[0]}",
    ]
    for c in range(grid.n_cells):
        cells = [str(int(i)) for i in idx[c]]
        lines.append(",".join(cells + [format(v, _FMT) for v in u[:, c]]))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_manifest(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_simulation(config: RunConfig, output_dir=None, label=None):
    """Execute ``config.time.steps`` steps and write all outputs.

    The manifest is written with ``status = "running"`` before the first
    step and rewritten at the end.  A solver error (:class:`NoConvergence`,
    :class:`SingularSystem`, ...) aborts the run:
    rows completed so far are kept, the manifest records the failing step,
    and the exception is re-raised.
    """
    base = Path(output_dir if output_dir is not None else config.output["directory"])
    label = label or config.output["label"]
    run_dir = base / label
    run_dir.mkdir(parents=True, exist_ok=True)
    bundle = OutputBundle(run_dir, run_dir / "manifest.json", run_dir / "series.csv")

    manifest = {
        "config": config.to_dict(),
        "tolerances": dict(TOLERANCES),
        "code_version": _code_version(),
        "label": label,
        "status": "running",
        "failure": None,
        "steps_completed": 0,
        "series": bundle.series_path.name,
        "snapshots": [],
    }
    _write_manifest(bundle.manifest_path, manifest)

    grid = config.build_grid()
    model = config.build_model(grid)
    solver = config.optimizer_config()
    state = config.initial_state(grid, model)
    tau = float(config.time["tau"])
    steps = int(config.time["steps"])
    every = int(config.time["snapshot_every"])

    def snap(step, st):
        p = run_dir / f"snapshot_{step:06d}.csv"
        write_snapshot(st, p)
        bundle.snapshot_paths.append(p)
        manifest["snapshots"].append(p.name)

    snap(0, state)
    try:
        for k in range(1, steps + 1):
            result = advance(build_step(model, state, tau), solver)
            state = result.state
            bundle.rows.append(make_row(k, k * tau, state, model, result))
            manifest["steps_completed"] = k
            if (every and k % every == 0) or k == steps:
                snap(k, state)
    except (NoConvergence, SingularSystem, ShiftViolation, DomainViolation) as exc:
        bundle.status = "failed"
        bundle.failure = {
            "error": type(exc).__name__,
            "step": len(bundle.rows) + 1,
            "message": str(exc),
            "iterations": getattr(exc, "iterations", None),
            "residual": None if getattr(exc, "residual", None) is None else float(exc.residual),
        }
        manifest.update(status="failed", failure=bundle.failure)
        write_series(bundle.rows, bundle.series_path, model.n_species)
        _write_manifest(bundle.manifest_path, manifest)
        logger.error("run %s failed at step %d: %s", label, bundle.failure["step"], exc)
        raise
    write_series(bundle.rows, bundle.series_path, model.n_species)
    bundle.status = "completed"
    manifest["status"] = "completed"
    manifest["final"] = {
        "energy": bundle.rows[-1].energy,
        "mass": list(bundle.rows[-1].mass),
        "min_value": list(bundle.rows[-1].min_value),
        "median_inner_iterations": float(np.median([r.inner_iterations for r in bundle.rows])),
    }
    _write_manifest(bundle.manifest_path, manifest)
    return bundle
