"""Mean-field density/momentum solver.

The alignment source ``rho * L_psi m - m * L_psi rho`` is computed either by
spectral screened-Poisson solves (augmented path) or by zero-padded FFT
convolution with a translation-invariant kernel (general-kernel path).
Transport uses the Kurganov-Tadmor scheme from :mod:`.hyperbolic` and SSP-RK2
in time, with the non-local solve redone at every Runge-Kutta stage.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import Grid, ScalarField, StateField, integrate_field
from .hyperbolic import RHO_FLOOR, cfl_dt, check_cfl, flux_divergence, step_time
from .kernels import ScreenedPoisson1D, ScreenedPoisson2DSeries
from .spectral import (
    apply_inverse_operator,
    fft_convolve_array,
    sample_displacement_kernel,
    screened_poisson_symbol,
)

__all__ = [
    "MacroConfig",
    "DensitySeries",
    "AuxFields",
    "ConservationReport",
    "SimulationAborted",
    "augmented_rhs",
    "general_kernel_rhs",
    "solve_aux_fields",
    "simulate_macro",
    "simulate_macro_general_kernel",
    "initial_conditions_1d",
    "initial_conditions_2d",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MacroConfig:
    grid: Grid
    kernel: object
    t0: float = 0.0
    tf: float = 2.0
    dt: float | None = 0.01
    cfl: float = 0.45
    save_every: int = 10
    symbol: str | None = None

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"tf={self.tf} must exceed t0={self.t0}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.save_every) != self.save_every or self.save_every < 1:
            raise ValueError(f"save_every must be a positive integer, got {self.save_every}")


@dataclass
class DensitySeries:
    times: list[float]
    states: list[StateField]
    aborted_at: float | None = None

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if self.states:
            g = self.states[0].grid
            if any(s.grid != g for s in self.states):
                raise ValueError("all frames must share one grid")

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    def __len__(self):
        return len(self.times)

    def densities(self) -> np.ndarray:
        return np.stack([s.rho.values for s in self.states])


@dataclass(frozen=True, eq=False)
class AuxFields:
    z: ScalarField
    y: tuple[ScalarField, ...]


@dataclass
class ConservationReport:
    mass_drift: float
    momentum_drift: list[float]
    steps: int
    cfl_violations: int = 0
    aborted_at: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"mass_drift": self.mass_drift, "momentum_drift": list(self.momentum_drift), "steps": self.steps}
        if self.cfl_violations:
            d["cfl_violations"] = self.cfl_violations
        if self.aborted_at is not None:
            d["aborted_at"] = self.aborted_at
        return d


class SimulationAborted(RuntimeError):
    def __init__(self, t, series=None, report=None):
        super().__init__(f"non-finite state at t={t:.6g}")
        self.t = t
        self.series = series
        self.report = report


def _screened_params(kernel):
    if isinstance(kernel, (ScreenedPoisson1D, ScreenedPoisson2DSeries)):
        return kernel.k, kernel.lam
    raise TypeError(f"augmented path needs a screened-Poisson kernel, got {type(kernel).__name__}")


def _alignment_source(U: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Y[0] = L_psi rho, Y[1:] = L_psi m
    S = np.zeros_like(U)
    S[1:] = U[0] * Y[1:] - Y[0] * U[1:]
    return S


def solve_aux_fields(U: StateField, k: float, lam: float, symbol: str | None = None) -> AuxFields:
    mult = screened_poisson_symbol(U.grid, k, lam, symbol)
    Y = apply_inverse_operator(U.grid, U.stack(), mult)
    return AuxFields(ScalarField(U.grid, Y[0]), tuple(ScalarField(U.grid, y) for y in Y[1:]))


def _augmented_rhs_array(grid: Grid, mult: np.ndarray):
    def rhs(U):
        Y = apply_inverse_operator(grid, U, mult)
        return flux_divergence(U, grid) + _alignment_source(U, Y)

    return rhs


def _general_rhs_array(grid: Grid, samples: np.ndarray):
    vol = grid.cell_volume

    def rhs(U):
        Y = fft_convolve_array(samples, U, grid.dim) * vol
        return flux_divergence(U, grid) + _alignment_source(U, Y)

    return rhs


def augmented_rhs(U: StateField, k: float, lam: float, symbol: str | None = None) -> StateField:
    """Full time derivative with non-local terms from z = L^-1 rho, y = L^-1 m."""
    if not (k > 0 and lam > 0):
        raise ValueError("k and lambda must be positive")
    mult = screened_poisson_symbol(U.grid, k, lam, symbol)
    return StateField.from_stack(U.grid, _augmented_rhs_array(U.grid, mult)(U.stack()))


def general_kernel_rhs(U: StateField, kernel) -> StateField:
    samples = _kernel_samples(kernel, U.grid)
    return StateField.from_stack(U.grid, _general_rhs_array(U.grid, samples)(U.stack()))


def _kernel_samples(kernel, grid: Grid) -> np.ndarray:
    if isinstance(kernel, np.ndarray):
        return kernel
    return sample_displacement_kernel(kernel, grid)


def _integrate(grid: Grid, U: np.ndarray) -> np.ndarray:
    return U.reshape(U.shape[0], -1).sum(axis=1) * grid.cell_volume


def _run(config: MacroConfig, init: StateField, rhs, save_times=None):
    grid = init.grid
    if grid != config.grid:
        raise ValueError("initial state must live on the configured grid")
    U = init.stack().astype(float)
    if np.any(U[0] < 0):
        raise ValueError("initial density must be nonnegative")
    t = float(config.t0)
    tf = float(config.tf)
    totals0 = _integrate(grid, U)
    drift = np.zeros_like(totals0)
    times, states = [t], [init]

    if save_times is not None:
        targets = [float(s) for s in save_times if s > t + 1e-12]
        if targets and targets[-1] > tf + 1e-12:
            raise ValueError("save_times extend past tf")
        tf = targets[-1] if targets else tf
    else:
        targets = None

    steps = 0
    violations = 0
    eps = 1e-9 * max(1.0, abs(tf))
    while t < tf - eps:
        if config.dt is not None:
            dt = config.dt
            if not check_cfl(U, grid.dx, dt):
                violations += 1
        else:
            dt = cfl_dt(U, grid.dx, config.cfl)
        next_save = targets[0] if targets else tf
        if t + dt > next_save - eps:
            dt = next_save - t
        U = step_time(U, rhs, dt)
        steps += 1
        t = next_save if abs(t + dt - next_save) <= eps else t + dt
        if not np.all(np.isfinite(U)):
            report = ConservationReport(float(drift[0]), drift[1:].tolist(), steps, violations, aborted_at=t)
            series = DensitySeries(times, states, aborted_at=t)
            log.error("macro run aborted at t=%g after %d steps", t, steps)
            raise SimulationAborted(t, series, report)
        drift = np.maximum(drift, np.abs(_integrate(grid, U) - totals0))
        if targets is not None:
            if targets and abs(t - targets[0]) <= eps:
                targets.pop(0)
                times.append(t)
                states.append(StateField.from_stack(grid, U))
        elif steps % config.save_every == 0 or t >= tf - eps:
            times.append(t)
            states.append(StateField.from_stack(grid, U))

    report = ConservationReport(float(drift[0]), drift[1:].tolist(), steps, violations)
    return DensitySeries(times, states), report


def simulate_macro(config: MacroConfig, init: StateField, save_times=None):
    """Integrate the augmented system; returns ``(DensitySeries, ConservationReport)``.

    ``save_times`` overrides ``save_every`` and makes the run land exactly on
    each requested time (the learner uses this to match observations).
    """
    k, lam = _screened_params(config.kernel)
    mult = screened_poisson_symbol(config.grid, k, lam, config.symbol)
    return _run(config, init, _augmented_rhs_array(config.grid, mult), save_times)


def simulate_macro_general_kernel(config: MacroConfig, init: StateField, save_times=None):
    """Same stepping, with non-local terms by FFT convolution.

    ``config.kernel`` is a translation-invariant kernel spec or an array of
    displacement samples (see :func:`sample_displacement_kernel`).
    """
    samples = _kernel_samples(config.kernel, config.grid)
    return _run(config, init, _general_rhs_array(config.grid, samples), save_times)


def initial_conditions_1d(grid: Grid) -> StateField:
    """Cosine density bump with inward sine velocity on [-L/2, L/2]."""
    L = grid.length
    x = grid.centers
    rho = (np.pi / (2.0 * L)) * np.cos(np.pi * x / L)
    u = -np.sin(np.pi * x / L)
    return StateField(grid, ScalarField(grid, rho), (ScalarField(grid, rho * u),))


def initial_conditions_2d(grid: Grid) -> StateField:
    L = grid.length
    X, Y = grid.mesh()
    rho = (np.pi**2 / (4.0 * L**2)) * np.cos(np.pi * X / L) * np.cos(np.pi * Y / L)
    u1 = -0.25 * np.sin(np.pi * X / L)
    u2 = -0.25 * np.sin(np.pi * Y / L)
    return StateField(grid, ScalarField(grid, rho), (ScalarField(grid, rho * u1), ScalarField(grid, rho * u2)))


def total_mass(state: StateField) -> float:
    return integrate_field(state.rho)


def bulk_velocity_amplitude(state: StateField, floor: float = RHO_FLOOR, support: float = 1e-8) -> float:
    """max |u| over cells where the density exceeds ``support``."""
    u = state.velocity(floor)
    mask = state.rho.values > support
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(u[:, mask])))
