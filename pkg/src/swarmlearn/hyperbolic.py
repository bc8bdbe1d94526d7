"""Kurganov-Tadmor central finite volumes for the pressureless transport part.

States are arrays ``U`` of shape ``(1 + d, *grid.shape)`` holding
``(rho, m_1, ..., m_d)``.  Two ghost cells per side are filled with zeros
(compactly supported states), so mass leaves only through fluxes at the
outer interfaces.
"""

from __future__ import annotations

import warnings

import numpy as np

from .domain import Grid, StateField

__all__ = [
    "RHO_FLOOR",
    "SPEED_FLOOR",
    "CFLWarning",
    "minmod",
    "reconstruct_interfaces",
    "physical_flux",
    "kt_flux",
    "flux_divergence",
    "semi_discrete_rhs",
    "step_time",
    "cfl_dt",
]

RHO_FLOOR = 1e-10
SPEED_FLOOR = 1e-3
N_GHOST = 2


class CFLWarning(UserWarning):
    pass


def minmod(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))
    return out[()] if out.ndim == 0 else out


def _pad(U: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * U.ndim
    width[axis] = (N_GHOST, N_GHOST)
    return np.pad(U, width)


def reconstruct_interfaces(U: np.ndarray, dx: float, axis: int = -1):
    """Limited piecewise-linear values on both sides of every interface.

    Returns ``(U_minus, U_plus)`` with ``Ns + 1`` interfaces along ``axis``;
    interface ``j`` separates cell ``j - 1`` from cell ``j`` (cells ``-1`` and
    ``Ns`` are ghosts).
    """
    axis = axis % U.ndim
    G = np.moveaxis(_pad(U, axis), axis, -1)
    diff = np.diff(G, axis=-1) / dx
    # limited slopes for padded cells 1 .. Ns+2
    slope = minmod(diff[..., 1:], diff[..., :-1])
    n = U.shape[axis]
    left = G[..., 1 : n + 2] + 0.5 * dx * slope[..., 0 : n + 1]
    right = G[..., 2 : n + 3] - 0.5 * dx * slope[..., 1 : n + 2]
    return np.moveaxis(left, -1, axis), np.moveaxis(right, -1, axis)


def physical_flux(U: np.ndarray, direction: int, floor: float = RHO_FLOOR):
    """Pressureless flux ``u_dir * U`` and the normal velocity ``u_dir``."""
    u = U[1 + direction] / np.maximum(U[0], floor)
    return u * U, u


def kt_flux(left: np.ndarray, right: np.ndarray, direction: int = 0, floor: float = RHO_FLOOR):
    """Central flux with local-speed dissipation at interfaces.

    ``left``/``right`` are ``(1 + d, ...)`` state arrays on the two sides.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    F_l, u_l = physical_flux(left, direction, floor)
    F_r, u_r = physical_flux(right, direction, floor)
    a = np.maximum(np.abs(u_l), np.abs(u_r))
    return 0.5 * (F_r + F_l - a * (right - left))


def flux_divergence(U: np.ndarray, grid: Grid, floor: float = RHO_FLOOR) -> np.ndarray:
    """``-sum_axis (F_{i+1/2} - F_{i-1/2}) / dx`` for every cell."""
    out = np.zeros_like(U)
    dx = grid.dx
    for direction in range(grid.dim):
        axis = 1 + direction
        Um, Up = reconstruct_interfaces(U, dx, axis=axis)
        F = kt_flux(Um, Up, direction, floor)
        out -= np.diff(F, axis=axis) / dx
    return out


def semi_discrete_rhs(U: StateField, source: StateField | None = None) -> StateField:
    """Time derivative of the cell averages for a given source field."""
    dU = flux_divergence(U.stack(), U.grid)
    if source is not None:
        if source.grid != U.grid:
            raise ValueError("source must live on the state's grid")
        dU = dU + source.stack()
    return StateField.from_stack(U.grid, dU)


def step_time(U, rhs, dt: float):
    """One SSP-RK2 (Heun) step.  ``U`` may be an array or any object ``rhs`` accepts
    that supports ``+`` and scalar ``*`` (numpy arrays in practice)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    U1 = U + dt * rhs(U)
    return 0.5 * U + 0.5 * (U1 + dt * rhs(U1))


def max_speed(U: np.ndarray, floor: float = RHO_FLOOR) -> float:
    rho = np.maximum(U[0], floor)
    return float(max(np.max(np.abs(U[1 + j] / rho)) for j in range(U.shape[0] - 1)))


def cfl_dt(U, dx: float | None = None, cfl: float = 0.45, speed_floor: float = SPEED_FLOOR) -> float:
    """Largest stable step ``cfl * dx / (d * max|u|)``; accepts a StateField or (array, dx)."""
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    if isinstance(U, StateField):
        dx = U.grid.dx
        U = U.stack()
    dim = U.shape[0] - 1
    return cfl * dx / (dim * max(max_speed(U), speed_floor))


def check_cfl(U: np.ndarray, dx: float, dt: float, cfl: float = 1.0) -> bool:
    ok = dt <= cfl_dt(U, dx, cfl, speed_floor=1e-300) * (1 + 1e-12)
    if not ok:
        warnings.warn(f"dt={dt:g} exceeds the CFL limit for max speed {max_speed(U):g}", CFLWarning)
    return ok
