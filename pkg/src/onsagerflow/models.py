"""Discrete free energies and dissipation metrics for periodic gradient flows.

Every model exposes the same small surface used by the time stepper:

* ``energy(grid, u)`` and its exact gradient ``energy_gradient`` (which is
  ``h^d`` times the chemical potential),
* ``energy_hessian(grid, u)``, a sparse matrix of the local part of the
  Hessian (the electrostatic part of PNP is non-local and handled by
  :mod:`onsagerflow.step`),
* ``metric_matrix(grid, reference)``: the quadratic form ``Q`` with
  ``Phi(m) = m^T Q m / 2`` for the frozen dissipation.

States are arrays of shape ``(s, n_cells)``; fluxes are arrays of shape
``(s, dim, n_cells)``.  For Allen-Cahn the "flux" slot carries the cell
increment ``u - u^k`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
import scipy.sparse as sp

from .errors import DomainViolation, NonNeutralSource
from .grid import PeriodicGrid, solve_periodic_poisson

__all__ = [
    "SystemState",
    "Model",
    "AllenCahn",
    "CahnHilliard",
    "FokkerPlanck",
    "PNP",
    "MaxwellStefan",
    "PorousMedia",
    "energy",
    "chemical_potential",
    "dissipation",
    "solve_electrostatic_potential",
    "stationary_residual",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SystemState:
    """Cell values of every species on a grid.

    ``components`` has shape ``(s, n_cells)``; a 1-D array is promoted to a
    single species.  ``potential`` caches the electrostatic potential for PNP.
    """

    grid: PeriodicGrid
    components: np.ndarray
    potential: np.ndarray | None = None

    def __post_init__(self):
        u = np.array(self.components, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.ndim != 2 or u.shape[1] != self.grid.n_cells:
            raise ValueError(
                f"components must have shape (s, {self.grid.n_cells}), got {u.shape}"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("state has non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "components", u)
        if self.potential is not None:
            object.__setattr__(self, "potential", _frozen(self.potential))

    @property
    def n_species(self):
        return self.components.shape[0]

    def __getitem__(self, i):
        return self.components[i]


def _xlogx(u):
    return u * np.log(u)


def _check_positive(u, what="state"):
    if np.any(~(u > 0)):
        raise DomainViolation(f"{what} must be strictly positive (min {np.min(u):.3e})")


def _block_diag_cells(blocks):
    """Sparse matrix from per-cell s x s blocks, shape (s, s, n) -> (s n, s n).

    Species-major ordering: row ``i * n + c``.
    """
    s, _, n = blocks.shape
    rows, cols, vals = [], [], []
    base = np.arange(n)
    for i in range(s):
        for j in range(s):
            v = blocks[i, j]
            if np.any(v != 0):
                rows.append(i * n + base)
                cols.append(j * n + base)
                vals.append(v)
    if not rows:
        return sp.csr_matrix((s * n, s * n))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(s * n, s * n),
    )


class Model:
    """Common behaviour of the model variants; subclasses fill in the physics."""

    kind: ClassVar[str] = ""
    conserved: ClassVar[bool] = True
    barrier: ClassVar[bool] = False
    simplex: ClassVar[bool] = False

    @property
    def n_species(self):
        return 1

    # -- hooks implemented by subclasses ------------------------------------

    def energy(self, grid, u):
        raise NotImplementedError

    def energy_gradient(self, grid, u):
        raise NotImplementedError

    def energy_hessian(self, grid, u):
        raise NotImplementedError

    def metric_matrix(self, grid, reference):
        raise NotImplementedError

    def face_mobility(self, grid, reference):
        """Per-species face mobility used by :func:`stationary_residual`."""
        raise NotImplementedError

    # -- derived -------------------------------------------------------------

    def dissipation(self, grid, reference, m):
        m = np.asarray(m, dtype=float).ravel()
        q = self.metric_matrix(grid, reference)
        return 0.5 * float(m @ (q @ m))

    def check_state(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_species:
            raise ValueError(f"{self.kind} expects {self.n_species} species, got {u.shape[0]}")
        if self.barrier:
            _check_positive(u)
        if self.simplex:
            dev = np.max(np.abs(u.sum(axis=0) - 1.0))
            if dev > 1e-10:
                raise DomainViolation(f"volume fractions must sum to 1 (max deviation {dev:.3e})")
        return u


# ---------------------------------------------------------------------------
# Phase-field models
# ---------------------------------------------------------------------------


class _PhaseField(Model):
    """Shared energy: alpha/2 |grad u|^2 + F(u) with a double well or quadratic F."""

    def _bulk(self, u):
        if self.bulk == "quadratic":
            return 0.5 * u**2, u, np.ones_like(u)
        w = self.well_scale
        return w * (1 - u**2) ** 2 / 4, w * (u**3 - u), w * (3 * u**2 - 1)

    def energy(self, grid, u):
        u = np.asarray(u, dtype=float)[0]
        grad = grid.gradient(u)
        bulk, _, _ = self._bulk(u)
        return grid.cell_volume * (0.5 * self.alpha * float(np.sum(grad**2)) + float(np.sum(bulk)))

    def energy_gradient(self, grid, u):
        u = np.asarray(u, dtype=float)[0]
        _, f, _ = self._bulk(u)
        return (grid.cell_volume * (-self.alpha * grid.laplacian(u) + f))[None, :]

    def energy_hessian(self, grid, u):
        u = np.asarray(u, dtype=float)[0]
        _, _, fp = self._bulk(u)
        vol = grid.cell_volume
        return (vol * (-self.alpha * grid.laplacian_matrix + sp.diags(fp))).tocsr()


@dataclass(frozen=True, eq=False)
class AllenCahn(_PhaseField):
    """Nonconserved phase field; dissipation xi0/2 * |u_t|^2.

    ``bulk="quadratic"`` swaps the double well for ``F(u) = u^2/2``, which
    turns each step into a linear backward-Euler solve (used as a test oracle).
    """

    alpha: float
    xi0: float = 1.0
    well_scale: float = 1.0
    bulk: str = "double_well"

    kind: ClassVar[str] = "allen_cahn"
    conserved: ClassVar[bool] = False

    def __post_init__(self):
        if not self.alpha > 0 or not self.xi0 > 0:
            raise ValueError("alpha and xi0 must be positive")
        if self.bulk not in ("double_well", "quadratic"):
            raise ValueError(f"unknown bulk energy {self.bulk!r}")

    def metric_matrix(self, grid, reference=None):
        return sp.identity(grid.n_cells, format="csr") * (self.xi0 * grid.cell_volume)


@dataclass(frozen=True, eq=False)
class CahnHilliard(_PhaseField):
    """Conserved phase field with constant scalar mobility."""

    alpha: float
    mobility_const: float = 1.0
    well_scale: float = 1.0
    bulk: ClassVar[str] = "double_well"

    kind: ClassVar[str] = "cahn_hilliard"

    def __post_init__(self):
        if not self.alpha > 0 or not self.mobility_const > 0:
            raise ValueError("alpha and mobility_const must be positive")

    def metric_matrix(self, grid, reference=None):
        return sp.identity(grid.n_faces, format="csr") * (grid.cell_volume / self.mobility_const)

    def face_mobility(self, grid, reference):
        return np.full((1, grid.dim, grid.n_cells), self.mobility_const)


# ---------------------------------------------------------------------------
# Entropic models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FokkerPlanck(Model):
    """Linear Fokker-Planck: energy beta^-1 u log u + u U, metric |j|^2 / u.

    ``dissipation_mode="frozen"`` evaluates the metric at the previous state on
    faces.  ``"joint"`` (1-D only) uses the collocated form
    ``h/2 * sum_j mhat_j^2 / u_j`` with the unknown ``u``.
    """

    beta: float
    potential: np.ndarray
    dissipation_mode: str = "frozen"

    kind: ClassVar[str] = "fokker_planck"
    barrier: ClassVar[bool] = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.dissipation_mode not in ("frozen", "joint"):
            raise ValueError(f"unknown dissipation_mode {self.dissipation_mode!r}")
        object.__setattr__(self, "potential", _frozen(self.potential))

    def energy(self, grid, u):
        u = self.check_state(u)[0]
        return grid.cell_volume * float(np.sum(_xlogx(u) / self.beta + u * self.potential))

    def energy_gradient(self, grid, u):
        u = self.check_state(u)[0]
        return (grid.cell_volume * ((1 + np.log(u)) / self.beta + self.potential))[None, :]

    def energy_hessian(self, grid, u):
        u = self.check_state(u)[0]
        return sp.diags(grid.cell_volume / (self.beta * u)).tocsr()

    def face_mobility(self, grid, reference):
        ref = np.asarray(reference, dtype=float)
        return grid.average(ref[0])[None]

    def metric_matrix(self, grid, reference):
        mob = self.face_mobility(grid, reference).ravel()
        if np.any(~(mob > 0)):
            raise DomainViolation("face mobility must be positive")
        return sp.diags(grid.cell_volume / mob).tocsr()

    # joint (collocated) metric, 1-D
    def joint_terms(self, grid, u, m):
        """Value, gradients and Hessian blocks of ``h/2 sum mhat^2/u``.

        Returns ``(value, grad_u, grad_m, H_uu, H_um, H_mm)``.
        """
        if grid.dim != 1:
            raise ValueError("joint dissipation mode is only defined in 1-D")
        u = np.asarray(u, dtype=float).reshape(-1)
        _check_positive(u)
        avg = grid.face_to_cell_matrix
        mh = avg @ np.asarray(m, dtype=float).ravel()
        vol = grid.cell_volume
        value = 0.5 * vol * float(np.sum(mh**2 / u))
        grad_u = -0.5 * vol * mh**2 / u**2
        grad_m = vol * (avg.T @ (mh / u))
        h_uu = sp.diags(vol * mh**2 / u**3)
        h_um = (sp.diags(-vol * mh / u**2) @ avg).tocsr()
        h_mm = (avg.T @ sp.diags(vol / u) @ avg).tocsr()
        return value, grad_u, grad_m, h_uu, h_um, h_mm


@dataclass(frozen=True, eq=False)
class PNP(Model):
    """Poisson-Nernst-Planck: sum_i u_i log u_i + eps/2 |grad phi|^2.

    ``phi`` solves ``-eps Lap phi = f + sum_i z_i u_i`` with zero mean.
    """

    charges: tuple = (1.0, -1.0)
    diffusivities: tuple = (1.0, 1.0)
    permittivity: float = 1.0
    fixed_charge: np.ndarray | None = None

    kind: ClassVar[str] = "pnp"
    barrier: ClassVar[bool] = True

    def __post_init__(self):
        z = tuple(float(c) for c in self.charges)
        d = tuple(float(c) for c in self.diffusivities)
        if len(z) < 1 or len(z) != len(d):
            raise ValueError("charges and diffusivities must have the same nonzero length")
        if min(d) <= 0 or not self.permittivity > 0:
            raise ValueError("diffusivities and permittivity must be positive")
        object.__setattr__(self, "charges", z)
        object.__setattr__(self, "diffusivities", d)
        if self.fixed_charge is not None:
            object.__setattr__(self, "fixed_charge", _frozen(self.fixed_charge))

    @property
    def n_species(self):
        return len(self.charges)

    def charge_density(self, grid, u):
        rho = np.asarray(self.charges) @ np.asarray(u, dtype=float)
        if self.fixed_charge is not None:
            rho = rho + self.fixed_charge
        return rho

    def potential(self, grid, u):
        rho = self.charge_density(grid, u)
        total = grid.integrate(rho)
        if abs(total) > 1e-10:
            raise NonNeutralSource(f"net charge {total:.3e} on a periodic domain")
        return solve_periodic_poisson(grid, rho - rho.mean(), self.permittivity)

    def energy(self, grid, u):
        u = self.check_state(u)
        phi = self.potential(grid, u)
        field_energy = 0.5 * self.permittivity * float(np.sum(grid.gradient(phi) ** 2))
        return grid.cell_volume * (float(np.sum(_xlogx(u))) + field_energy)

    def energy_gradient(self, grid, u):
        u = self.check_state(u)
        phi = self.potential(grid, u)
        z = np.asarray(self.charges)[:, None]
        return grid.cell_volume * (1 + np.log(u) + z * phi[None, :])

    def energy_hessian(self, grid, u):
        """Local (entropy) part only; see :meth:`electrostatic_hessian_vector`."""
        u = self.check_state(u)
        return sp.diags(grid.cell_volume / u.ravel()).tocsr()

    def electrostatic_hessian_vector(self, grid, v):
        """Apply ``h^d Z^T (eps L)^+ Z`` to a species-stacked cell vector."""
        v = np.asarray(v, dtype=float).reshape(self.n_species, grid.n_cells)
        rho = np.asarray(self.charges) @ v
        psi = solve_periodic_poisson(grid, rho - rho.mean(), self.permittivity)
        return grid.cell_volume * np.outer(self.charges, psi)

    def face_mobility(self, grid, reference):
        ref = np.asarray(reference, dtype=float)
        return np.stack([d * grid.average(r) for d, r in zip(self.diffusivities, ref)])

    def metric_matrix(self, grid, reference):
        mob = self.face_mobility(grid, reference).ravel()
        if np.any(~(mob > 0)):
            raise DomainViolation("face mobility must be positive")
        return sp.diags(grid.cell_volume / mob).tocsr()


@dataclass(frozen=True, eq=False)
class MaxwellStefan(Model):
    """Multicomponent Maxwell-Stefan diffusion with volume fractions summing to one.

    Dissipation ``1/4 sum_ij b_ij u_i u_j |m_i/u_i - m_j/u_j|^2`` with the
    face-averaged previous state in place of ``u``.
    """

    friction: np.ndarray

    kind: ClassVar[str] = "maxwell_stefan"
    barrier: ClassVar[bool] = True
    simplex: ClassVar[bool] = True

    def __post_init__(self):
        b = _frozen(self.friction)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 2:
            raise ValueError("friction must be an s x s matrix with s >= 2")
        if np.max(np.abs(b - b.T)) > 1e-14:
            raise ValueError("friction matrix must be symmetric")
        off = b[~np.eye(b.shape[0], dtype=bool)]
        if np.any(off < 0):
            raise ValueError("friction coefficients b_ij (i != j) must be nonnegative")
        object.__setattr__(self, "friction", b)

    @property
    def n_species(self):
        return self.friction.shape[0]

    def energy(self, grid, u):
        u = self.check_state(u)
        return grid.cell_volume * float(np.sum(_xlogx(u)))

    def energy_gradient(self, grid, u):
        u = self.check_state(u)
        return grid.cell_volume * (1 + np.log(u))

    def energy_hessian(self, grid, u):
        u = self.check_state(u)
        return sp.diags(grid.cell_volume / u.ravel()).tocsr()

    def face_fractions(self, grid, reference):
        ref = np.asarray(reference, dtype=float)
        uh = np.stack([grid.average(r) for r in ref])  # (s, dim, n)
        if np.any(~(uh > 0)):
            raise DomainViolation("face volume fractions must be positive")
        return uh

    def face_mobility(self, grid, reference):
        return self.face_fractions(grid, reference)

    def metric_matrix(self, grid, reference):
        s = self.n_species
        uh = self.face_fractions(grid, reference).reshape(s, -1)
        b = self.friction.copy()
        np.fill_diagonal(b, 0.0)
        blocks = -b[:, :, None] * np.ones_like(uh)[None, :, :]
        diag = np.einsum("ij,jf->if", b, uh) / uh
        for i in range(s):
            blocks[i, i] = diag[i]
        return _block_diag_cells(grid.cell_volume * blocks)

    def dissipation_relative(self, grid, reference, m):
        """Same value as :meth:`dissipation`, evaluated from the pairwise form."""
        s = self.n_species
        uh = self.face_fractions(grid, reference).reshape(s, -1)
        m = np.asarray(m, dtype=float).reshape(s, -1)
        v = m / uh
        total = 0.0
        for i in range(s):
            for j in range(s):
                total += self.friction[i, j] * np.sum(uh[i] * uh[j] * (v[i] - v[j]) ** 2)
        return 0.25 * grid.cell_volume * float(total)


@dataclass(frozen=True, eq=False)
class PorousMedia(Model):
    """Immiscible multiphase flow in a rigid porous medium.

    Energy ``int porosity * F(u)`` with
    ``F = sum sigma_i u_i (log u_i - 1) + sum alpha_ij u_i u_j + sum b_j u_j``;
    dissipation ``sum_i |m_i|^2 / (2 K_i)`` with
    ``K_i = u_i^n / eta_i * K`` evaluated at the previous state.
    """

    porosity: np.ndarray
    sigma: tuple
    quad: np.ndarray
    lin: tuple
    viscosities: tuple
    permeability: np.ndarray
    rel_perm_exponent: int = 3

    kind: ClassVar[str] = "porous_media"
    barrier: ClassVar[bool] = True
    simplex: ClassVar[bool] = True

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        s = sigma.size
        quad = _frozen(self.quad)
        lin = np.asarray(self.lin, dtype=float)
        eta = np.asarray(self.viscosities, dtype=float)
        if s < 2 or quad.shape != (s, s) or lin.shape != (s,) or eta.shape != (s,):
            raise ValueError("sigma, quad, lin and viscosities must describe the same s >= 2 phases")
        if np.max(np.abs(quad - quad.T)) > 1e-14:
            raise ValueError("quad matrix must be symmetric")
        if np.any(eta <= 0):
            raise ValueError("viscosities must be positive")
        por = _frozen(self.porosity)
        if np.any(~(por > 0)) or np.any(~(por < 1)):
            raise ValueError("porosity must lie in (0, 1)")
        perm = _frozen(self.permeability)
        if np.any(~(perm > 0)):
            raise ValueError("permeability must be positive")
        if int(self.rel_perm_exponent) < 1:
            raise ValueError("rel_perm_exponent must be a positive integer")
        object.__setattr__(self, "sigma", tuple(sigma))
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", tuple(lin))
        object.__setattr__(self, "viscosities", tuple(eta))
        object.__setattr__(self, "porosity", por)
        object.__setattr__(self, "permeability", perm)
        object.__setattr__(self, "rel_perm_exponent", int(self.rel_perm_exponent))

    @property
    def n_species(self):
        return len(self.sigma)

    def density(self, u):
        sig = np.asarray(self.sigma)[:, None]
        return (
            np.sum(sig * u * (np.log(u) - 1), axis=0)
            + np.einsum("ij,ic,jc->c", self.quad, u, u)
            + np.asarray(self.lin) @ u
        )

    def energy(self, grid, u):
        u = self.check_state(u)
        return grid.cell_volume * float(np.sum(self.porosity * self.density(u)))

    def energy_gradient(self, grid, u):
        u = self.check_state(u)
        sig = np.asarray(self.sigma)[:, None]
        dF = sig * np.log(u) + 2 * self.quad @ u + np.asarray(self.lin)[:, None]
        return grid.cell_volume * self.porosity[None, :] * dF

    def energy_hessian(self, grid, u):
        u = self.check_state(u)
        s = self.n_species
        blocks = np.zeros((s, s, grid.n_cells))
        for i in range(s):
            for j in range(s):
                blocks[i, j] = 2 * self.quad[i, j]
            blocks[i, i] += self.sigma[i] / u[i]
        return _block_diag_cells(grid.cell_volume * self.porosity * blocks)

    def phase_permeability(self, reference):
        ref = np.asarray(reference, dtype=float)
        kr = ref**self.rel_perm_exponent
        return kr / np.asarray(self.viscosities)[:, None] * self.permeability[None, :]

    def face_mobility(self, grid, reference):
        k = self.phase_permeability(reference)
        return np.stack([grid.average(ki) for ki in k])

    def metric_matrix(self, grid, reference):
        mob = self.face_mobility(grid, reference).ravel()
        if np.any(~(mob > 0)):
            raise DomainViolation("face mobility must be positive")
        return sp.diags(grid.cell_volume / mob).tocsr()


# ---------------------------------------------------------------------------
# Module-level API on SystemState
# ---------------------------------------------------------------------------


def energy(model, state):
    """Discrete free energy of ``state``."""
    return model.energy(state.grid, state.components)


def chemical_potential(model, state):
    """Variational derivative of the discrete energy, shape ``(s, n_cells)``."""
    return model.energy_gradient(state.grid, state.components) / state.grid.cell_volume


def dissipation(model, reference, m):
    """Frozen quadratic dissipation ``Phi(reference; m)``."""
    return model.dissipation(reference.grid, reference.components, m)


def solve_electrostatic_potential(model, state):
    """Zero-mean potential of the PNP charge density of ``state``."""
    if not isinstance(model, PNP):
        raise TypeError("electrostatic potential is only defined for PNP")
    return model.potential(state.grid, state.components)


def stationary_residual(model, state):
    """Max-norm distance from a discrete steady state.

    Conserved models: ``|d_h(M D_h (mu_i + p))|`` (``mu_i / porosity`` for
    porous media), where ``p`` is the
    mobility-weighted pressure that enforces the volume constraint (zero for
    unconstrained species).  Allen-Cahn: ``|mu| / xi0``.
    """
    grid = state.grid
    mu = chemical_potential(model, state)
    if not model.conserved:
        return float(np.max(np.abs(mu)) / model.xi0)
    if isinstance(model, PorousMedia):
        # the constraint is porosity-weighted, so fluxes follow grad(mu / porosity)
        mu = mu / model.porosity[None, :]
    dmu = np.stack([grid.gradient(row) for row in mu])  # (s, dim, n)
    mob = model.face_mobility(grid, state.components)
    if model.simplex:
        dp = -np.sum(mob * dmu, axis=0) / np.sum(mob, axis=0)
        dmu = dmu + dp[None]
    flux = mob * dmu
    return float(max(np.max(np.abs(grid.divergence(f))) for f in flux))
