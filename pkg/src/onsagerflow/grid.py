"""Uniform periodic staggered grids in one and two dimensions.

Cell fields are flat float arrays of length ``grid.n_cells`` in row-major
order (axis 0 is x).  Face fields have shape ``(grid.dim, grid.n_cells)``:
entry ``[a, c]`` lives on the face between cell ``c`` and its upper neighbour
along axis ``a``.  All indices wrap around.

The operators below are the usual two-point stencils::

    (D u)_{j+1/2} = (u_{j+1} - u_j) / h
    (d m)_j       = (m_{j+1/2} - m_{j-1/2}) / h
    (A u)_{j+1/2} = (u_j + u_{j+1}) / 2

and satisfy the summation-by-parts identity ``<D u, m> = -<u, d m>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import NoConvergence, NonNeutralSource

__all__ = [
    "PeriodicGrid",
    "gradient_to_faces",
    "divergence_to_centers",
    "average_to_faces",
    "integrate_cells",
    "solve_periodic_poisson",
]


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Periodic cartesian mesh on the square ``[0, side_length]^dim``.

    Parameters
    ----------
    dim : int
        1 or 2.
    n : int or tuple of int
        Cells per axis.  A single integer is used on every axis.
    side_length : float
        Edge length of the domain.
    """

    dim: int
    n: tuple
    side_length: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = self.n
        if np.isscalar(n):
            n = (int(n),) * self.dim
        n = tuple(int(k) for k in n)
        if len(n) != self.dim:
            raise ValueError(f"need {self.dim} cell counts, got {n}")
        if min(n) < 2:
            raise ValueError(f"need at least 2 cells per axis, got {n}")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "side_length", float(self.side_length))

    def __eq__(self, other):
        if not isinstance(other, PeriodicGrid):
            return NotImplemented
        return (self.dim, self.n, self.side_length) == (other.dim, other.n, other.side_length)

    def __hash__(self):
        return hash((self.dim, self.n, self.side_length))

    @property
    def shape(self):
        return self.n

    @property
    def n_cells(self):
        return int(np.prod(self.n))

    @property
    def n_faces(self):
        return self.dim * self.n_cells

    @property
    def spacing(self):
        return tuple(self.side_length / k for k in self.n)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def cell_centers(self):
        """Coordinates of cell centers, shape ``(dim, n_cells)``."""
        axes = [(np.arange(k) + 0.5) * h for k, h in zip(self.n, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh])

    def face_centers(self, axis):
        """Coordinates of the faces normal to ``axis``, shape ``(dim, n_cells)``."""
        x = self.cell_centers()
        x[axis] += 0.5 * self.spacing[axis]
        return x

    def cell_indices(self):
        """Integer index tuple of every cell, shape ``(n_cells, dim)``."""
        idx = np.indices(self.n).reshape(self.dim, -1)
        return idx.T

    # -- stencils -----------------------------------------------------------

    def _roll(self, u, shift, axis):
        return np.roll(u.reshape(self.n), shift, axis=axis).ravel()

    def gradient(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack(
            [(self._roll(u, -1, a) - u) / self.spacing[a] for a in range(self.dim)]
        )

    def divergence(self, m):
        m = np.asarray(m, dtype=float).reshape(self.dim, self.n_cells)
        out = np.zeros(self.n_cells)
        for a in range(self.dim):
            out += (m[a] - self._roll(m[a], 1, a)) / self.spacing[a]
        return out

    def average(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([0.5 * (u + self._roll(u, -1, a)) for a in range(self.dim)])

    def face_to_cell_average(self, m):
        """Mean of the two faces bracketing each cell, per axis."""
        m = np.asarray(m, dtype=float).reshape(self.dim, self.n_cells)
        return np.stack([0.5 * (m[a] + self._roll(m[a], 1, a)) for a in range(self.dim)])

    def integrate(self, u):
        return self.cell_volume * float(np.sum(u))

    def laplacian(self, u):
        return self.divergence(self.gradient(u))

    # -- sparse matrices (same stencils, for assembly) -----------------------

    def _shift_matrix(self, axis):
        """Matrix S with (S u)_c = u at the upper neighbour of c along axis."""
        idx = np.arange(self.n_cells).reshape(self.n)
        nbr = np.roll(idx, -1, axis=axis).ravel()
        return sp.csr_matrix(
            (np.ones(self.n_cells), (np.arange(self.n_cells), nbr)),
            shape=(self.n_cells, self.n_cells),
        )

    @cached_property
    def gradient_matrix(self):
        eye = sp.identity(self.n_cells, format="csr")
        blocks = [(self._shift_matrix(a) - eye) / self.spacing[a] for a in range(self.dim)]
        return sp.vstack(blocks, format="csr")

    @cached_property
    def divergence_matrix(self):
        return (-self.gradient_matrix.T).tocsr()

    @cached_property
    def average_matrix(self):
        eye = sp.identity(self.n_cells, format="csr")
        return sp.vstack(
            [0.5 * (self._shift_matrix(a) + eye) for a in range(self.dim)], format="csr"
        )

    @cached_property
    def face_to_cell_matrix(self):
        """Block-diagonal (per axis) matrix of :meth:`face_to_cell_average`."""
        eye = sp.identity(self.n_cells, format="csr")
        return sp.block_diag(
            [0.5 * (self._shift_matrix(a).T + eye) for a in range(self.dim)], format="csr"
        )

    @cached_property
    def laplacian_matrix(self):
        return (self.divergence_matrix @ self.gradient_matrix).tocsr()


def gradient_to_faces(grid, u):
    """Two-point difference ``(u_{j+1} - u_j)/h`` on every face."""
    return grid.gradient(u)


def divergence_to_centers(grid, m):
    """Discrete divergence, summed over axes; adjoint of ``-gradient_to_faces``."""
    return grid.divergence(m)


def average_to_faces(grid, u):
    """Arithmetic mean of the two cells adjacent to each face."""
    return grid.average(u)


def integrate_cells(grid, u):
    """Midpoint quadrature ``h^d * sum(u)``."""
    return grid.integrate(u)


def solve_periodic_poisson(grid, rhs, coeff=1.0, tol=1e-12, max_iterations=None):
    """Solve ``-coeff * Lap_h phi = rhs`` for the zero-mean ``phi``.

    Conjugate gradients on the mean-zero subspace; the iterate and the search
    direction are re-projected after every update so round-off cannot leak
    into the constant mode.

    Raises
    ------
    NonNeutralSource
        If ``mean(rhs)`` exceeds ``1e-12 * max|rhs|``.
    NoConvergence
        If the residual norm does not reach ``tol`` within the iteration cap
        (default ``10 * n_cells``).
    """
    rhs = np.asarray(rhs, dtype=float)
    if not coeff > 0:
        raise ValueError("coeff must be positive")
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    mean = float(np.mean(rhs))
    if abs(mean) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise NonNeutralSource(f"source has mean {mean:.3e} (max |rhs| = {scale:.3e})")
    if scale == 0.0:
        return np.zeros_like(rhs)

    if max_iterations is None:
        max_iterations = 10 * grid.n_cells
    lap = grid.laplacian_matrix
    b = (rhs - mean) / coeff

    phi = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    for it in range(max_iterations + 1):
        if np.sqrt(rr) <= max(tol, 1e-15 * np.linalg.norm(b)):
            return phi - phi.mean()
        if it == max_iterations:
            break
        q = -(lap @ p)
        alpha = rr / (p @ q)
        phi += alpha * p
        phi -= phi.mean()
        r -= alpha * q
        r -= r.mean()
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        p -= p.mean()
        rr = rr_new
    raise NoConvergence(
        "periodic Poisson CG stalled", iterations=max_iterations, residual=float(np.sqrt(rr))
    )
