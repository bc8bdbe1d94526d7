"""Uniform cell-centred grids on D = [-L/2, L/2]^d and the fields living on them.

Fields are stored as numpy arrays shaped like the grid: ``(Ns,)`` in 1D and
``(Ns, Ns)`` in 2D, indexed ``[ix, iy]``.  Flattening in C order therefore
gives the row-major, y-fastest layout used by the CSV writers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Domain",
    "Grid",
    "ScalarField",
    "StateField",
    "make_grid",
    "integrate_field",
]


@dataclass(frozen=True)
class Domain:
    dim: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def length(self) -> float:
        return 2.0 * self.half_width


@dataclass(frozen=True)
class Grid:
    """Ns equal cells per axis covering the domain."""

    domain: Domain
    cells_per_axis: int

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def length(self) -> float:
        return self.domain.length

    @property
    def dx(self) -> float:
        return self.domain.length / self.cells_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @cached_property
    def centers(self) -> np.ndarray:
        """1D array of cell centres along one axis."""
        i = np.arange(self.cells_per_axis)
        return -self.domain.half_width + (i + 0.5) * self.dx

    @cached_property
    def edges(self) -> np.ndarray:
        i = np.arange(self.cells_per_axis + 1)
        return -self.domain.half_width + i * self.dx

    def mesh(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.centers,)
        return tuple(np.meshgrid(self.centers, self.centers, indexing="ij"))

    def points(self) -> np.ndarray:
        """Cell centres as an ``(n_cells, d)`` array in storage order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def make_grid(domain: Domain, Ns: int) -> Grid:
    """Build a uniform cell-centred grid with ``Ns`` cells per axis."""
    if int(Ns) != Ns or Ns < 3:
        raise ValueError(f"need at least 3 cells per axis, got Ns={Ns}")
    return Grid(domain, int(Ns))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.cells_per_axis**self.grid.dim:
            raise ValueError(
                f"field has {values.size} values, grid has "
                f"{self.grid.cells_per_axis ** self.grid.dim} cells"
            )
        values = values.reshape(self.grid.shape)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class StateField:
    """Hydrodynamic state: density plus one momentum component per axis."""

    grid: Grid
    rho: ScalarField
    momentum: tuple[ScalarField, ...] = field(default=())

    def __post_init__(self):
        momentum = tuple(self.momentum)
        if len(momentum) != self.grid.dim:
            raise ValueError(
                f"expected {self.grid.dim} momentum components, got {len(momentum)}"
            )
        for f in (self.rho, *momentum):
            if f.grid != self.grid:
                raise ValueError("all state components must share one grid")
        object.__setattr__(self, "momentum", momentum)

    def stack(self) -> np.ndarray:
        """Components stacked along a leading axis: ``(1 + d, *grid.shape)``."""
        return np.stack([self.rho.values] + [m.values for m in self.momentum])

    @classmethod
    def from_stack(cls, grid: Grid, U: np.ndarray) -> "StateField":
        fields = [ScalarField(grid, np.array(c)) for c in U]
        return cls(grid, fields[0], tuple(fields[1:]))

    def velocity(self, floor: float = 1e-10) -> np.ndarray:
        rho = np.maximum(self.rho.values, floor)
        return np.stack([m.values / rho for m in self.momentum])


def integrate_field(f: ScalarField) -> float:
    """Midpoint-rule integral of a cell field over the domain."""
    return float(np.sum(f.values) * f.grid.cell_volume)
