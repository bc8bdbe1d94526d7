"""Particle-level Cucker-Smale simulation and flocking diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from .domain import Grid, ScalarField
from .kernels import FreeSpaceExp, ScreenedPoisson1D

__all__ = [
    "ParticleEnsemble",
    "FlockingReport",
    "cs_rhs",
    "verlet_step",
    "simulate_micro",
    "to_fluctuation_frame",
    "to_lab_frame",
    "sample_from_density",
    "add_observation_noise",
    "empirical_density",
    "empirical_momentum",
    "fluctuation_norms",
    "flocking_diagnostics",
    "flocking_condition_check",
]


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    in_fluctuation_frame: bool = False
    xc0: np.ndarray | None = None
    vc0: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if x.shape != v.shape:
            raise ValueError(f"positions {x.shape} and velocities {v.shape} differ in shape")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def center_of_mass(self):
        return self.positions.mean(axis=0), self.velocities.mean(axis=0)


@dataclass
class FlockingReport:
    times: list[float]
    velocity_fluctuation: list[float]
    max_pair_distance: list[float]
    sufficient_condition_met: bool
    decay_bound_respected: bool
    x_M: float | None = None
    x_bar: float | None = None
    decay_rate: float | None = None
    coherence_bound: float | None = None
    velocity_nonincreasing: bool = True
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _separable_rhs(x, v, kernel):
    """O(N log N) evaluation for kernels of the form f(min(x,s)) g(max(x,s)).

    Exact rewrite of the pair sum: sort once, then prefix sums of f(x_j) v_j
    below each particle and suffix sums of g(x_j) v_j above it.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    vs = v[order]
    if isinstance(kernel, ScreenedPoisson1D):
        half, lam = 0.5 * kernel.L, kernel.lam
        K = -(kernel.k / lam) / (2.0 * np.sinh(lam * kernel.L))
        f = 2.0 * np.sinh(lam * (xs + half))
        g = 2.0 * np.sinh(lam * (xs - half)) * K
    else:
        # exp(-lam|x-s|) = exp(lam min) exp(-lam max); shift by the median to limit range
        c = xs[len(xs) // 2]
        lam = kernel.lam
        f = np.exp(lam * (xs - c))
        g = (kernel.k / lam) * np.exp(-lam * (xs - c))
    # for particle i (sorted): sum_{j<=i} f_j * g_i  +  sum_{j>i} f_i * g_j
    f = f[:, None]
    g = g[:, None]
    below_w = np.cumsum(f, axis=0)
    below_v = np.cumsum(f * vs, axis=0)
    zero = np.zeros((1, vs.shape[1]))
    above_w = np.concatenate([np.cumsum(g[::-1], axis=0)[::-1][1:], zero[:, :1]])
    above_v = np.concatenate([np.cumsum((g * vs)[::-1], axis=0)[::-1][1:], zero])
    weight = g * below_w + f * above_w
    weighted_v = g * below_v + f * above_v
    acc_sorted = (weighted_v - vs * weight) / len(xs)
    acc = np.empty_like(acc_sorted)
    acc[order] = acc_sorted
    return acc


def _pairwise_rhs(x, v, kernel, chunk=2048):
    n, d = x.shape
    acc = np.empty_like(v)
    radial = getattr(kernel, "radial", None)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        if d == 1:
            if radial is not None:
                W = radial(np.abs(x[start:stop, None, 0] - x[None, :, 0]))
            else:
                W = kernel.evaluate(x[start:stop, None, 0], x[None, :, 0])
        else:
            if radial is None:
                raise ValueError(f"{type(kernel).__name__} cannot drive a {d}D particle system")
            diff = x[start:stop, None, :] - x[None, :, :]
            W = radial(np.sqrt((diff * diff).sum(-1)))
        acc[start:stop] = (W @ v - W.sum(axis=1)[:, None] * v[start:stop]) / n
    return acc


def cs_rhs(ensemble: ParticleEnsemble, kernel, method: str = "auto") -> np.ndarray:
    """Accelerations ``(1/N) sum_j psi(x_j, x_i) (v_j - v_i)``.

    ``method="pairwise"`` forms the O(N^2) sum in row chunks.  For the two
    exponential-type 1D kernels ``"auto"`` switches to an exact O(N log N)
    prefix-sum rewrite of the same sum.
    """
    x, v = ensemble.positions, ensemble.velocities
    if isinstance(kernel, ScreenedPoisson1D):
        half = 0.5 * kernel.L
        bad = np.flatnonzero(np.abs(x[:, 0]) > half)
        if bad.size:
            raise ValueError(f"particles outside [-{half:g}, {half:g}]: indices {bad[:20].tolist()}")
    separable = isinstance(kernel, (ScreenedPoisson1D, FreeSpaceExp)) and ensemble.dim == 1
    if method == "auto":
        method = "separable" if separable else "pairwise"
    if method == "separable":
        if not separable:
            raise ValueError("separable evaluation needs a 1D exponential-type kernel")
        return _separable_rhs(x[:, 0], v, kernel)
    if method == "pairwise":
        return _pairwise_rhs(x, v, kernel)
    raise ValueError(f"unknown method {method!r}")


def verlet_step(ensemble: ParticleEnsemble, kernel, dt: float, accel=None, method: str = "auto"):
    """Velocity Verlet with a velocity-dependent force.

    The half-step velocity feeds the end-of-step force, and the final update
    averages the two forces:
    ``v+ = v + dt/2 [a(x, v) + a(x+, v_half)]``.
    ``accel(x, v)`` overrides the Cucker-Smale force (used for integrator tests).
    """
    x, v = ensemble.positions, ensemble.velocities
    if accel is None:
        def accel(px, pv):
            return cs_rhs(replace(ensemble, positions=px, velocities=pv), kernel, method)
    a0 = accel(x, v)
    v_half = v + 0.5 * dt * a0
    x_new = x + dt * v_half
    a1 = accel(x_new, v_half)
    v_new = v + 0.5 * dt * (a0 + a1)
    return replace(ensemble, positions=x_new, velocities=v_new)


def simulate_micro(ensemble, kernel, dt, n_steps, save_every=1, method="auto"):
    """Return lists ``(times, ensembles)`` including the initial state."""
    times, frames = [0.0], [ensemble]
    for step in range(1, n_steps + 1):
        ensemble = verlet_step(ensemble, kernel, dt, method=method)
        if step % save_every == 0 or step == n_steps:
            times.append(step * dt)
            frames.append(ensemble)
    return times, frames


def to_fluctuation_frame(ensemble: ParticleEnsemble) -> ParticleEnsemble:
    if ensemble.in_fluctuation_frame:
        raise ValueError("ensemble is already in the fluctuation frame")
    xc, vc = ensemble.center_of_mass()
    return ParticleEnsemble(ensemble.positions - xc, ensemble.velocities - vc, True, xc, vc)


def to_lab_frame(ensemble: ParticleEnsemble, t: float) -> ParticleEnsemble:
    """Undo the fluctuation transform at time t; the centre drifts as x_c(0) + t v_c(0)."""
    if not ensemble.in_fluctuation_frame:
        raise ValueError("ensemble is not in the fluctuation frame")
    xc = ensemble.xc0 + t * ensemble.vc0
    return ParticleEnsemble(ensemble.positions + xc, ensemble.velocities + ensemble.vc0)


def _inverse_cdf_sampler(pdf, lo, hi, n_nodes=20001):
    x = np.linspace(lo, hi, n_nodes)
    p = np.clip(np.asarray(pdf(x), dtype=float), 0.0, None)
    cdf = integrate.cumulative_trapezoid(p, x, initial=0.0)
    total = cdf[-1]
    if not np.isfinite(total) or total <= 0:
        raise ValueError("density is not normalizable on the domain")
    cdf /= total
    # drop flat stretches so the inverse is single valued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return total, lambda u: np.interp(u, cdf[keep], x[keep])


def sample_from_density(rho0, u0, n: int, seed: int, half_width: float = np.pi, dim: int = 1,
                        normalization_tol: float = 1e-2, stratified: bool = False) -> ParticleEnsemble:
    """Draw positions from ``rho0`` by inverse CDF; set velocities to ``u0(x)``.

    By default the uniforms are i.i.d.  With ``stratified=True`` the i-th
    uniform is drawn from ``[i/n, (i+1)/n)`` (1D only), which removes most of
    the histogram sampling noise while keeping every draw random.

    In 2D ``rho0`` must be separable and is passed as a pair of 1D factors
    ``(rho_x, rho_y)``; ``u0`` maps an ``(n, 2)`` array to ``(n, 2)`` velocities.
    """
    if n < 1:
        raise ValueError(f"need at least one particle, got n={n}")
    if stratified and dim != 1:
        raise ValueError("stratified sampling is only available in 1D")
    rng = np.random.default_rng(seed)
    factors = (rho0,) if dim == 1 else tuple(rho0)
    if len(factors) != dim:
        raise ValueError("2D sampling needs one density factor per axis")
    cols, mass = [], 1.0
    for pdf in factors:
        total, inv = _inverse_cdf_sampler(pdf, -half_width, half_width)
        mass *= total
        u = (np.arange(n) + rng.random(n)) / n if stratified else rng.random(n)
        cols.append(inv(u))
    if abs(mass - 1.0) > normalization_tol:
        raise ValueError(f"density integrates to {mass:.6g}, expected 1")
    x = np.stack(cols, axis=-1)
    v = np.asarray(u0(x[:, 0] if dim == 1 else x), dtype=float).reshape(n, dim)
    return ParticleEnsemble(x, v)


def add_observation_noise(ensemble: ParticleEnsemble, sigma2: float, seed: int) -> ParticleEnsemble:
    """Gaussian N(0, sigma2) perturbation of recorded positions only."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if sigma2 == 0:
        return ensemble
    rng = np.random.default_rng(seed)
    noisy = ensemble.positions + rng.normal(0.0, np.sqrt(sigma2), ensemble.positions.shape)
    return replace(ensemble, positions=noisy)


def _cell_index(grid: Grid, positions: np.ndarray) -> np.ndarray:
    idx = np.floor((positions + grid.domain.half_width) / grid.dx).astype(int)
    return np.clip(idx, 0, grid.cells_per_axis - 1)


def empirical_density(ensemble: ParticleEnsemble, grid: Grid) -> ScalarField:
    """Histogram count per cell over ``N dx^d``; out-of-domain particles land in the edge cell."""
    if ensemble.dim != grid.dim:
        raise ValueError("ensemble and grid dimensions differ")
    idx = _cell_index(grid, ensemble.positions)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.cells_per_axis**grid.dim)
    return ScalarField(grid, counts / (ensemble.n * grid.cell_volume))


def empirical_momentum(ensemble: ParticleEnsemble, grid: Grid) -> list[ScalarField]:
    idx = _cell_index(grid, ensemble.positions)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    size = grid.cells_per_axis**grid.dim
    scale = ensemble.n * grid.cell_volume
    return [
        ScalarField(grid, np.bincount(flat, weights=ensemble.velocities[:, j], minlength=size) / scale)
        for j in range(grid.dim)
    ]


def fluctuation_norms(ensemble: ParticleEnsemble) -> tuple[float, float]:
    """RMS norms ``|x_hat|`` and ``|v_hat|`` about the current centre of mass."""
    xc, vc = ensemble.center_of_mass()
    dx = ensemble.positions - xc
    dv = ensemble.velocities - vc
    return float(np.sqrt((dx * dx).sum(1).mean())), float(np.sqrt((dv * dv).sum(1).mean()))


def _diameter(positions: np.ndarray) -> float:
    if positions.shape[1] == 1:
        return float(positions.max() - positions.min())
    from scipy.spatial import ConvexHull, distance

    pts = positions
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    return float(distance.pdist(pts).max()) if len(pts) > 1 else 0.0


def flocking_condition_check(ensemble: ParticleEnsemble, kernel: ScreenedPoisson1D, n_candidates: int = 400):
    """Look for x_M < L/4 meeting the sufficient flocking condition.

    With ``phi(s) = psi(-2 x_M, lam s)`` (zero once ``lam s`` leaves the
    domain) the condition is ``|v_hat(0)| < int_{|x_hat(0)|}^{x_M} phi``.
    The kernel's own lambda plays the role of the comparison constant.
    ``coherence_bound = 2 x_M`` bounds pairwise distances, since the
    hypothesis caps half the initial diameter by ``x_M``.
    Returns a dict with the best candidate, or ``satisfied=False``.
    """
    x_norm, v_norm = fluctuation_norms(ensemble)
    half_diam = 0.5 * _diameter(ensemble.positions)
    L, lam = kernel.L, kernel.lam
    upper = L / 4.0
    lower = max(half_diam, x_norm)
    result = {"satisfied": False, "x_M": None, "x_bar": None, "decay_rate": None,
              "x_norm0": x_norm, "v_norm0": v_norm, "half_diameter0": half_diam}
    if not lower < upper:
        return result

    def phi(s, x_M):
        arg = lam * np.asarray(s, dtype=float)
        inside = np.abs(arg) <= 0.5 * L
        vals = np.zeros_like(arg)
        vals[inside] = kernel.evaluate(-2.0 * x_M, arg[inside])
        return vals

    best = None
    for x_M in np.linspace(lower, upper, n_candidates + 2)[1:-1]:
        s = np.linspace(x_norm, x_M, 257)
        integral = integrate.trapezoid(phi(s, x_M), s)
        margin = integral - v_norm
        if best is None or margin > best[0]:
            best = (margin, x_M)
    margin, x_M = best
    if margin <= 0:
        return result
    if v_norm == 0:
        x_bar = x_norm
    else:
        def excess(xb):
            s = np.linspace(x_norm, xb, 257)
            return integrate.trapezoid(phi(s, x_M), s) - v_norm
        x_bar = optimize.brentq(excess, x_norm, x_M)
    rate = float(phi(np.array([x_bar]), x_M)[0])
    result.update(satisfied=True, x_M=float(x_M), x_bar=float(x_bar), decay_rate=rate,
                  coherence_bound=float(2.0 * x_M))
    return result


def flocking_diagnostics(times, trajectory, kernel=None, rtol: float = 1e-9) -> FlockingReport:
    """Velocity-fluctuation decay, spatial spread and the sufficient-condition check."""
    if not all(e.in_fluctuation_frame for e in trajectory):
        raise ValueError("trajectory must be in the fluctuation frame")
    v_fluct, spread = [], []
    for e in trajectory:
        v_fluct.append(fluctuation_norms(e)[1])
        spread.append(_diameter(e.positions))
    v = np.array(v_fluct)
    nonincreasing = bool(np.all(np.diff(v) <= rtol * max(v[0], 1e-300)))
    notes = []
    satisfied = False
    respected = True
    x_M = x_bar = rate = bound = None
    if isinstance(kernel, ScreenedPoisson1D):
        chk = flocking_condition_check(trajectory[0], kernel)
        notes.append("comparison constant in the condition taken as the kernel lambda")
        satisfied = chk["satisfied"]
        if satisfied:
            x_M, x_bar, rate, bound = chk["x_M"], chk["x_bar"], chk["decay_rate"], chk["coherence_bound"]
            envelope = v[0] * np.exp(-rate * np.asarray(times))
            respected = bool(np.all(v <= envelope * (1 + rtol) + 1e-15))
    elif kernel is not None:
        notes.append(f"sufficient-condition check not defined for {type(kernel).__name__}")
    if v[0] == 0:
        satisfied = True
    return FlockingReport(
        times=list(map(float, times)),
        velocity_fluctuation=v.tolist(),
        max_pair_distance=spread,
        sufficient_condition_met=bool(satisfied),
        decay_bound_respected=respected,
        x_M=x_M,
        x_bar=x_bar,
        decay_rate=rate,
        coherence_bound=bound,
        velocity_nonincreasing=nonincreasing,
        notes=notes,
    )
