"""Run configuration: strict JSON parsing, defaults, and builders.

A configuration has the blocks ``model``, ``grid``, ``time`` (required) and
``solver``, ``initial_condition``, ``output`` (optional), plus an optional
free-text ``description``.  Unknown keys are rejected with :class:`ParseError`;
values that parse but break an invariant are collected into a single
:class:`ValidationError`.

Spatially varying coefficients (FP potential, PNP fixed charge, porosity,
permeability) are *field specs*: a number, or one of::

    {"profile": "constant", "value": v}
    {"profile": "cosine", "mean": a, "amplitude": b, "wavenumber": k, "axis": 0}
    {"profile": "two_region", "inside": a, "outside": b, "box": [[x0, x1], [y0, y1]]}

with box corners given as fractions of the side length.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainViolation, ParseError, UnknownProfile, ValidationError
from .grid import PeriodicGrid
from .models import PNP, AllenCahn, CahnHilliard, FokkerPlanck, MaxwellStefan, PorousMedia, SystemState
from .optim import METHODS, OptimizerConfig

__all__ = [
    "REQUIRED",
    "MODEL_SCHEMAS",
    "PROFILES",
    "RunConfig",
    "parse_config",
    "load_config",
    "field_values",
    "builtin_initial_condition",
    "read_snapshot",
]

REQUIRED = object()

MODEL_SCHEMAS = {
    "allen_cahn": {"alpha": REQUIRED, "xi0": 1.0, "well_scale": 1.0, "bulk": "double_well"},
    "cahn_hilliard": {"alpha": REQUIRED, "mobility": 1.0, "well_scale": 1.0},
    "fokker_planck": {"beta": 1.0, "potential": 0.0, "dissipation_mode": "frozen"},
    "pnp": {"charges": [1.0, -1.0], "diffusivities": [1.0, 1.0], "permittivity": 1.0,
            "fixed_charge": 0.0},
    "maxwell_stefan": {"friction": REQUIRED},
    "porous_media": {"porosity": REQUIRED, "sigma": REQUIRED, "quad": REQUIRED, "lin": None,
                     "viscosities": REQUIRED, "rel_perm_exponent": 3, "permeability": REQUIRED},
}

BLOCK_SCHEMAS = {
    "grid": {"dim": REQUIRED, "n": REQUIRED, "side_length": 1.0},
    "time": {"tau": REQUIRED, "steps": REQUIRED, "snapshot_every": 0},
    "solver": {"method": "newton_kkt", "eta": 1.0, "aepg_shift": None, "max_iterations": None,
               "kkt_tolerance": 1e-9, "linear_tolerance": 1e-12, "damping": 0.95},
    "output": {"directory": "runs", "label": "run"},
}

PROFILES = ("pnp_paper_example1", "uniform", "gaussian_bump", "two_region_saturation",
            "ms_three_species_smoke")

FIELD_SCHEMAS = {
    "constant": {"value": REQUIRED},
    "cosine": {"mean": 0.0, "amplitude": 1.0, "wavenumber": 1, "axis": 0},
    "two_region": {"inside": REQUIRED, "outside": REQUIRED, "box": REQUIRED},
}

TOP_LEVEL = ("description", "model", "grid", "time", "solver", "initial_condition", "output")


def _fill(block, schema, path):
    if not isinstance(block, dict):
        raise ParseError("expected an object", path)
    for key in block:
        if key not in schema:
            raise ParseError(f"unknown key {key!r}", f"{path}.{key}" if path else key)
    out = {}
    for key, default in schema.items():
        if key in block:
            out[key] = block[key]
        elif default is REQUIRED:
            raise ParseError("missing required key", f"{path}.{key}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _expect(cond, path, what):
    if not cond:
        raise ParseError(f"expected {what}", path)


def _number_list(v, path, square=False):
    if square:
        _expect(isinstance(v, list) and v and all(isinstance(r, list) for r in v), path,
                "a square matrix (list of lists)")
        for i, row in enumerate(v):
            _expect(len(row) == len(v) and all(_is_number(x) for x in row), f"{path}[{i}]",
                    "a row of numbers with matching length")
        return
    _expect(isinstance(v, list) and all(_is_number(x) for x in v), path, "a list of numbers")


def _parse_field(spec, path):
    if _is_number(spec):
        return spec
    _expect(isinstance(spec, dict) and "profile" in spec, path, "a number or a field object")
    kind = spec["profile"]
    if kind not in FIELD_SCHEMAS:
        raise ParseError(f"unknown field profile {kind!r}", f"{path}.profile")
    body = _fill({k: v for k, v in spec.items() if k != "profile"}, FIELD_SCHEMAS[kind], path)
    for key, value in body.items():
        if key == "box":
            _expect(isinstance(value, list), f"{path}.box", "a list of [lo, hi] pairs")
        else:
            _expect(_is_number(value), f"{path}.{key}", "a number")
    return {"profile": kind, **body}


def _parse_model(block):
    if not isinstance(block, dict):
        raise ParseError("expected an object", "model")
    kind = block.get("type")
    if kind not in MODEL_SCHEMAS:
        raise ParseError(f"unknown model type {kind!r}; expected one of {sorted(MODEL_SCHEMAS)}",
                         "model.type")
    params = _fill({k: v for k, v in block.items() if k != "type"}, MODEL_SCHEMAS[kind], "model")
    field_keys = {"potential", "fixed_charge", "porosity", "permeability"}
    for key, value in params.items():
        path = f"model.{key}"
        if key in field_keys:
            params[key] = _parse_field(value, path)
        elif key in ("friction", "quad"):
            _number_list(value, path, square=True)
        elif key in ("charges", "diffusivities", "sigma", "viscosities"):
            _number_list(value, path)
        elif key == "lin":
            if value is not None:
                _number_list(value, path)
        elif key in ("bulk", "dissipation_mode"):
            _expect(isinstance(value, str), path, "a string")
        elif key == "rel_perm_exponent":
            _expect(isinstance(value, int) and not isinstance(value, bool), path, "an integer")
        else:
            _expect(_is_number(value), path, "a number")
    if kind == "porous_media" and params["lin"] is None:
        params["lin"] = [0.0] * len(params["sigma"])
    return {"type": kind, **params}


def _parse_initial(block):
    if block is None:
        return {"profile": "uniform", "params": {}}
    if not isinstance(block, dict):
        raise ParseError("expected an object", "initial_condition")
    for key in block:
        if key not in ("profile", "params", "snapshot"):
            raise ParseError(f"unknown key {key!r}", f"initial_condition.{key}")
    if "snapshot" in block:
        if "profile" in block or "params" in block:
            raise ParseError("give either a snapshot path or a profile", "initial_condition")
        _expect(isinstance(block["snapshot"], str), "initial_condition.snapshot", "a file path")
        return {"snapshot": block["snapshot"]}
    profile = block.get("profile", "uniform")
    _expect(isinstance(profile, str), "initial_condition.profile", "a string")
    params = block.get("params", {})
    _expect(isinstance(params, dict), "initial_condition.params", "an object")
    return {"profile": profile, "params": dict(params)}


def _validate(cfg):
    problems = []
    model, grid, time, solver, init = cfg.model, cfg.grid, cfg.time, cfg.solver, cfg.initial_condition

    def need(cond, msg):
        if not cond:
            problems.append(msg)

    need(grid["dim"] in (1, 2), "grid.dim must be 1 or 2")
    n = grid["n"]
    n_list = n if isinstance(n, list) else [n]
    need(all(isinstance(k, int) and not isinstance(k, bool) and k >= 2 for k in n_list),
         "grid.n must be an integer >= 2 (or one per axis)")
    if isinstance(n, list):
        need(len(n) == grid["dim"], "grid.n must list one count per axis")
    need(_is_number(grid["side_length"]) and grid["side_length"] > 0, "grid.side_length must be positive")

    need(_is_number(time["tau"]) and time["tau"] > 0, "time.tau must be positive")
    need(isinstance(time["steps"], int) and time["steps"] >= 1, "time.steps must be an integer >= 1")
    need(isinstance(time["snapshot_every"], int) and time["snapshot_every"] >= 0,
         "time.snapshot_every must be an integer >= 0")

    need(solver["method"] in METHODS, f"solver.method must be one of {list(METHODS)}")
    for key in ("eta", "kkt_tolerance", "linear_tolerance"):
        need(_is_number(solver[key]) and solver[key] > 0, f"solver.{key} must be positive")
    need(_is_number(solver["damping"]) and 0 < solver["damping"] < 1, "solver.damping must lie in (0, 1)")
    mi = solver["max_iterations"]
    need(mi is None or (isinstance(mi, int) and mi >= 1), "solver.max_iterations must be null or >= 1")
    need(solver["aepg_shift"] is None or _is_number(solver["aepg_shift"]),
         "solver.aepg_shift must be null or a number")

    kind = model["type"]
    positive = {
        "allen_cahn": ("alpha", "xi0"),
        "cahn_hilliard": ("alpha", "mobility"),
        "fokker_planck": ("beta",),
        "pnp": ("permittivity",),
    }.get(kind, ())
    for key in positive:
        need(model[key] > 0, f"model.{key} must be positive")
    if kind == "allen_cahn":
        need(model["bulk"] in ("double_well", "quadratic"), "model.bulk must be 'double_well' or 'quadratic'")
    if kind == "fokker_planck":
        need(model["dissipation_mode"] in ("frozen", "joint"),
             "model.dissipation_mode must be 'frozen' or 'joint'")
        if model["dissipation_mode"] == "joint":
            need(grid["dim"] == 1, "model.dissipation_mode 'joint' requires grid.dim = 1")
    if kind == "pnp":
        need(len(model["charges"]) >= 1, "model.charges must list at least one species")
        need(len(model["charges"]) == len(model["diffusivities"]),
             "model.charges and model.diffusivities must have equal length")
        need(all(d > 0 for d in model["diffusivities"]), "model.diffusivities must be positive")
    if kind == "maxwell_stefan":
        b = np.asarray(model["friction"], dtype=float)
        need(b.shape[0] >= 2, "model.friction must be at least 2 x 2")
        need(np.allclose(b, b.T, rtol=0, atol=1e-14), "model.friction must be symmetric")
        need(np.all(b[~np.eye(len(b), dtype=bool)] >= 0), "model.friction off-diagonal entries must be >= 0")
    if kind == "porous_media":
        s = len(model["sigma"])
        need(s >= 2, "model.sigma must list at least two phases")
        need(len(model["quad"]) == s, "model.quad must be s x s")
        need(len(model["lin"]) == s, "model.lin must have one entry per phase")
        need(len(model["viscosities"]) == s, "model.viscosities must have one entry per phase")
        need(all(v > 0 for v in model["viscosities"]), "model.viscosities must be positive")
        q = np.asarray(model["quad"], dtype=float)
        need(q.shape != (s, s) or np.allclose(q, q.T, rtol=0, atol=1e-14), "model.quad must be symmetric")
        need(model["rel_perm_exponent"] >= 1, "model.rel_perm_exponent must be >= 1")

    if "snapshot" in init:
        need(Path(init["snapshot"]).is_file(), f"initial_condition.snapshot: no such file {init['snapshot']!r}")
    else:
        need(init["profile"] in PROFILES, f"initial_condition.profile must be one of {list(PROFILES)}")
    if problems:
        raise ValidationError(problems)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with every default resolved."""

    model: dict
    grid: dict
    time: dict
    solver: dict = field(default_factory=lambda: dict(BLOCK_SCHEMAS["solver"]))
    initial_condition: dict = field(default_factory=lambda: {"profile": "uniform", "params": {}})
    output: dict = field(default_factory=lambda: dict(BLOCK_SCHEMAS["output"]))
    description: str = ""

    def to_dict(self):
        return copy.deepcopy({
            "description": self.description,
            "model": self.model,
            "grid": self.grid,
            "time": self.time,
            "solver": self.solver,
            "initial_condition": self.initial_condition,
            "output": self.output,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def build_grid(self):
        return PeriodicGrid(self.grid["dim"], self.grid["n"], self.grid["side_length"])

    def build_model(self, grid):
        p = self.model
        kind = p["type"]
        if kind == "allen_cahn":
            return AllenCahn(p["alpha"], p["xi0"], p["well_scale"], p["bulk"])
        if kind == "cahn_hilliard":
            return CahnHilliard(p["alpha"], p["mobility"], p["well_scale"])
        if kind == "fokker_planck":
            return FokkerPlanck(p["beta"], field_values(p["potential"], grid), p["dissipation_mode"])
        if kind == "pnp":
            f = field_values(p["fixed_charge"], grid)
            return PNP(tuple(p["charges"]), tuple(p["diffusivities"]), p["permittivity"],
                       None if not np.any(f) else f)
        if kind == "maxwell_stefan":
            return MaxwellStefan(np.asarray(p["friction"], dtype=float))
        return PorousMedia(
            porosity=field_values(p["porosity"], grid),
            sigma=tuple(p["sigma"]),
            quad=np.asarray(p["quad"], dtype=float),
            lin=tuple(p["lin"]),
            viscosities=tuple(p["viscosities"]),
            permeability=field_values(p["permeability"], grid),
            rel_perm_exponent=p["rel_perm_exponent"],
        )

    def optimizer_config(self):
        return OptimizerConfig(**self.solver)

    def initial_state(self, grid, model):
        init = self.initial_condition
        if "snapshot" in init:
            snap = read_snapshot(init["snapshot"])
            g = snap.grid
            if g.dim != grid.dim or g.n != grid.n or not np.allclose(g.spacing, grid.spacing, rtol=1e-12):
                raise ValidationError([f"initial_condition.snapshot: grid {g.n} does not match the configured grid {grid.n}"])
            if snap.components.shape[0] != model.n_species:
                raise ValidationError([f"initial_condition.snapshot: {snap.components.shape[0]} components, model has {model.n_species}"])
            model.check_state(snap.components)
            return SystemState(grid, snap.components)
        return builtin_initial_condition(init["profile"], init["params"], grid, model)


def parse_config(text):
    """Parse and validate a JSON configuration document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError("top level must be an object")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ParseError(f"unknown key {key!r}", key)
    for key in ("model", "grid", "time"):
        if key not in raw:
            raise ParseError("missing required block", key)
    description = raw.get("description", "")
    _expect(isinstance(description, str), "description", "a string")
    cfg = RunConfig(
        model=_parse_model(raw["model"]),
        grid=_fill(raw["grid"], BLOCK_SCHEMAS["grid"], "grid"),
        time=_fill(raw["time"], BLOCK_SCHEMAS["time"], "time"),
        solver=_fill(raw.get("solver", {}), BLOCK_SCHEMAS["solver"], "solver"),
        initial_condition=_parse_initial(raw.get("initial_condition")),
        output=_fill(raw.get("output", {}), BLOCK_SCHEMAS["output"], "output"),
        description=description,
    )
    _validate(cfg)
    return cfg


def load_config(path):
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Fields and initial conditions
# ---------------------------------------------------------------------------


def _unit_coords(grid):
    return grid.cell_centers() / grid.side_length


def field_values(spec, grid):
    """Evaluate a field spec at the cell centers of ``grid``."""
    if _is_number(spec):
        return np.full(grid.n_cells, float(spec))
    kind = spec["profile"]
    x = _unit_coords(grid)
    if kind == "constant":
        return np.full(grid.n_cells, float(spec["value"]))
    if kind == "cosine":
        axis = int(spec["axis"])
        if not 0 <= axis < grid.dim:
            raise ValidationError([f"field axis {axis} out of range for dim {grid.dim}"])
        return spec["mean"] + spec["amplitude"] * np.cos(2 * np.pi * spec["wavenumber"] * x[axis])
    if kind == "two_region":
        return np.where(_in_box(x, spec["box"], grid.dim), float(spec["inside"]), float(spec["outside"]))
    raise UnknownProfile(kind)


def _in_box(x, box, dim):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape[0] != dim:
        raise ValidationError([f"box needs {dim} [lo, hi] pairs, got {box.tolist()}"])
    inside = np.ones(x.shape[1], dtype=bool)
    for a in range(dim):
        inside &= (x[a] >= box[a, 0]) & (x[a] <= box[a, 1])
    return inside


def _uniform_default(model):
    if model.simplex:
        return [1.0 / model.n_species] * model.n_species
    if model.barrier:
        return [1.0] * model.n_species
    return [0.0]


def builtin_initial_condition(name, params, grid, model):
    """Named analytic initial state sampled at cell centers.

    Profiles
    --------
    ``pnp_paper_example1``
        ``u1 = c + sin(2 pi x) cos(2 pi x)``, ``u2 = c + sin(2 pi y) cos(2 pi y)``
        with ``c = 1.02`` (``base``).  In 1-D the second species uses
        ``c - sin(2 pi x) cos(2 pi x)``.
    ``uniform``
        ``value`` (all species) or ``values`` (one per species).
    ``gaussian_bump``
        ``background + amplitude * exp(-|x - center|^2 / (2 width^2))``
        (distances periodic, in units of the side length), rescaled to unit
        mass when ``normalize`` is true.
    ``two_region_saturation``
        Two phases; saturation ``inside`` within ``box`` and ``outside``
        elsewhere.  Both values must be supplied.
    ``ms_three_species_smoke``
        Three smooth volume fractions summing to one (``amplitude``, default 0.1).
    """
    params = dict(params or {})
    x = _unit_coords(grid)
    s = model.n_species

    def take(key, default=REQUIRED):
        if key in params:
            return params.pop(key)
        if default is REQUIRED:
            raise ValidationError([f"initial_condition.params.{key} is required for {name}"])
        return default

    if name == "pnp_paper_example1":
        base = take("base", 1.02)
        sc0 = np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[0])
        if grid.dim == 2:
            sc1 = np.sin(2 * np.pi * x[1]) * np.cos(2 * np.pi * x[1])
        else:
            sc1 = -sc0
        u = np.stack([base + sc0, base + sc1])
    elif name == "uniform":
        if "values" in params:
            vals = take("values")
        else:
            v = take("value", None)
            vals = _uniform_default(model) if v is None else [v] * s
        if len(vals) != s:
            raise ValidationError([f"uniform profile needs {s} values, got {len(vals)}"])
        u = np.tile(np.asarray(vals, dtype=float)[:, None], (1, grid.n_cells))
    elif name == "gaussian_bump":
        center = np.asarray(take("center", [0.5] * grid.dim), dtype=float)
        width = float(take("width", 0.1))
        background = float(take("background", 0.1))
        amplitude = float(take("amplitude", 1.0))
        normalize = bool(take("normalize", True))
        if model.simplex:
            raise ValidationError(["gaussian_bump does not produce volume fractions"])
        d = x - center[:, None]
        d -= np.round(d)
        bump = background + amplitude * np.exp(-np.sum(d**2, axis=0) / (2 * width**2))
        if normalize:
            bump = bump / grid.integrate(bump)
        u = np.tile(bump, (s, 1))
    elif name == "two_region_saturation":
        inside = float(take("inside"))
        outside = float(take("outside"))
        box = take("box")
        if s != 2:
            raise ValidationError(["two_region_saturation needs a two-phase model"])
        sw = np.where(_in_box(x, box, grid.dim), inside, outside)
        u = np.stack([sw, 1.0 - sw])
    elif name == "ms_three_species_smoke":
        amp = float(take("amplitude", 0.1))
        if s != 3:
            raise ValidationError(["ms_three_species_smoke needs three species"])
        u1 = 0.3 + amp * np.sin(2 * np.pi * x[0])
        u2 = 0.3 - amp * np.cos(2 * np.pi * x[-1])
        u = np.stack([u1, u2, 1.0 - u1 - u2])
    else:
        raise UnknownProfile(name)
    if params:
        raise ValidationError([f"initial_condition.params: unknown key(s) {sorted(params)} for {name}"])
    if u.shape[0] != s:
        raise ValidationError([f"profile {name} gives {u.shape[0]} species, model has {s}"])
    if model.barrier and np.any(u <= 0):
        raise DomainViolation(f"profile {name} produces non-positive values (min {u.min():.3e})")
    state = SystemState(grid, u)
    if model.simplex:
        model.check_state(state.components)
    return state


def read_snapshot(path):
    """Load a state written by :func:`onsagerflow.simulation.write_snapshot`."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                header[key] = value.split()
            else:
                rows.append(line.split(","))
    try:
        dim = int(header["dim"][0])
        n = [int(v) for v in header["n_per_axis"]]
        h = [float(v) for v in header["h"]]
        n_comp = int(header["components"][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(f"bad snapshot header in {path}: {exc}") from None
    grid = PeriodicGrid(dim, tuple(n), h[0] * n[0])
    data = np.array([[float(v) for v in r[dim:]] for r in rows]).reshape(-1, n_comp)
    idx = np.array([[int(v) for v in r[:dim]] for r in rows], dtype=int).reshape(-1, dim)
    flat = np.ravel_multi_index(tuple(idx.T), grid.n)
    u = np.empty((n_comp, grid.n_cells))
    u[:, flat] = data.T
    return SystemState(grid, u)
