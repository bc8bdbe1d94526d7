"""Recover the screened-Poisson kernel parameters theta = (k, lambda) from a
density time series by minimising the summed KL divergence between observed
and simulated densities.

The outer loop is a damped Newton iteration in log-parameters.  Gradients
and Hessians come from central finite differences of the objective (each
stencil point is one forward PDE solve); the Hessian is made positive
definite by Lanczos tridiagonalisation followed by eigenvalue clipping.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .domain import ScalarField, StateField
from .kernels import ScreenedPoisson1D, ScreenedPoisson2DSeries
from .macro import DensitySeries, MacroConfig, SimulationAborted, simulate_macro

__all__ = [
    "SUPPORT_FLOOR",
    "Q_FLOOR",
    "LearnConfig",
    "LearnState",
    "kl_divergence",
    "kernel_for_theta",
    "objective",
    "frame_divergences",
    "fd_gradient",
    "fd_hessian",
    "lanczos",
    "psd_hessian",
    "newton_learn",
    "fit_report",
]

log = logging.getLogger(__name__)

SUPPORT_FLOOR = 1e-8
Q_FLOOR = 1e-12


@dataclass
class LearnConfig:
    observations: DensitySeries
    forward: MacroConfig
    theta0: tuple[float, float] = (1.0, 0.5)
    fd_step: float = 1e-4
    max_iters: int = 20
    grad_tol: float = 1e-6
    hessian_floor: float | None = None
    init: StateField | None = None
    max_step: float = 1.0
    step_tol: float = 1e-9
    max_backtracks: int = 20
    threads: int = 1

    def __post_init__(self):
        if len(self.theta0) != 2 or min(self.theta0) <= 0:
            raise ValueError(f"theta0 must be a positive pair, got {self.theta0}")
        if not 0 < self.fd_step <= 1e-2:
            raise ValueError(f"fd_step must lie in (0, 1e-2], got {self.fd_step}")
        if self.observations.grid != self.forward.grid:
            raise ValueError("observations and forward model must share a grid")

    @property
    def initial_state(self) -> StateField:
        return self.init if self.init is not None else self.observations.states[0]


@dataclass
class LearnState:
    theta: tuple[float, float]
    objective: float
    gradient: tuple[float, float]
    hessian_psd: np.ndarray
    iteration: int
    history: list[tuple[tuple[float, float], float]] = field(default_factory=list)
    status: str = "running"


def kl_divergence(p: ScalarField, q: ScalarField, support_floor: float = SUPPORT_FLOOR,
                  q_floor: float = Q_FLOOR) -> float:
    """Riemann-sum KL divergence in bits over the support of ``p``."""
    if p.grid != q.grid:
        raise ValueError("densities live on different grids")
    return _kl_values(p.values, q.values, p.grid.cell_volume, support_floor, q_floor)


def _kl_values(p, q, vol, support_floor=SUPPORT_FLOOR, q_floor=Q_FLOOR) -> float:
    mask = p > support_floor
    pm = p[mask]
    return float(np.sum(pm * np.log2(pm / np.maximum(q[mask], q_floor))) * vol)


def kernel_for_theta(theta, config: LearnConfig):
    k, lam = float(theta[0]), float(theta[1])
    grid = config.forward.grid
    if grid.dim == 1:
        return ScreenedPoisson1D(k, lam, grid.length)
    truncation = getattr(config.forward.kernel, "truncation", 256)
    return ScreenedPoisson2DSeries(k, lam, grid.length, truncation)


def simulate_theta(theta, config: LearnConfig) -> DensitySeries:
    forward = replace(config.forward, kernel=kernel_for_theta(theta, config))
    series, _ = simulate_macro(forward, config.initial_state, save_times=config.observations.times)
    return series


def frame_divergences(theta, config: LearnConfig) -> np.ndarray:
    """KL divergence of every observed frame from the simulation at ``theta``."""
    sim = simulate_theta(theta, config)
    obs = config.observations
    if len(sim) != len(obs) or not np.allclose(sim.times, obs.times, rtol=0, atol=1e-9):
        raise RuntimeError("forward run did not land on the observation times")
    vol = obs.grid.cell_volume
    return np.array([
        _kl_values(o.rho.values, s.rho.values, vol) for o, s in zip(obs.states, sim.states)
    ])


def objective(theta, config: LearnConfig) -> float:
    """Summed KL over all observed frames; ``inf`` if the forward run blows up."""
    if min(theta) <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    try:
        return float(frame_divergences(theta, config).sum())
    except SimulationAborted as exc:
        log.warning("forward run at theta=%s aborted at t=%g", tuple(theta), exc.t)
        return math.inf


def _steps(x, fd_step):
    return fd_step * np.maximum(np.abs(x), 1.0)


class _Evaluator:
    """Memoised, optionally threaded objective evaluation at stencil points."""

    def __init__(self, f, threads=1):
        self.f = f
        self.threads = max(1, int(threads))
        self.cache = {}

    def __call__(self, points):
        keys = [tuple(float(v) for v in p) for p in points]
        todo = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                values = list(pool.map(lambda k: self.f(np.array(k)), todo))
        else:
            values = [self.f(np.array(k)) for k in todo]
        self.cache.update(zip(todo, values))
        return np.array([self.cache[k] for k in keys])


def fd_gradient(f, x, fd_step: float = 1e-4, evaluate=None) -> np.ndarray:
    """Two-point central differences with steps ``fd_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, fd_step)
    evaluate = evaluate or _Evaluator(f)
    pts = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h[i]
        pts += [x + e, x - e]
    vals = evaluate(pts).reshape(len(x), 2)
    return (vals[:, 0] - vals[:, 1]) / (2.0 * h)


def fd_hessian(f, x, fd_step: float = 1e-4, evaluate=None, f0=None, basis=None) -> np.ndarray:
    """Second-order central-difference Hessian, symmetric by construction.

    With an orthonormal ``basis`` the differences are taken along its
    columns and rotated back.  Differencing along the principal axes of a
    previous estimate resolves a flat valley direction even when the steep
    direction carries small non-smooth wiggles (limiter switching).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    B = np.eye(n) if basis is None else np.asarray(basis, dtype=float)
    h = _steps(B.T @ x, fd_step)
    evaluate = evaluate or _Evaluator(f)
    f0 = evaluate([x])[0] if f0 is None else f0
    E = B * h
    Hb = np.empty((n, n))
    with np.errstate(invalid="ignore"):
        _fill_hessian(evaluate, x, f0, E, h, Hb)
    if basis is None:
        return Hb
    H = B @ Hb @ B.T
    return 0.5 * (H + H.T)


def _fill_hessian(evaluate, x, f0, E, h, Hb):
    n = len(x)
    for i in range(n):
        ei = E[:, i]
        fp, fm = evaluate([x + ei, x - ei])
        Hb[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, n):
            ej = E[:, j]
            pp, pm, mp, mm = evaluate([x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej])
            Hb[i, j] = Hb[j, i] = (pp - pm - mp + mm) / (4.0 * h[i] * h[j])


def lanczos(A: np.ndarray, m: int | None = None, v0: np.ndarray | None = None):
    """Lanczos tridiagonalisation of a symmetric matrix with full reorthogonalisation.

    Returns ``(Q, alpha, beta)`` with ``Q.T @ A @ Q = tridiag(beta, alpha, beta)``.
    On breakdown the Krylov space is restarted with the first coordinate
    direction not yet spanned, so ``m = n`` always yields a full basis.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    m = n if m is None else m
    v = np.ones(n) if v0 is None else np.asarray(v0, dtype=float)
    Q = np.zeros((n, m))
    alpha = np.zeros(m)
    beta = np.zeros(max(m - 1, 0))
    q = v / np.linalg.norm(v)
    scale = max(np.linalg.norm(A), 1e-300)
    for j in range(m):
        Q[:, j] = q
        w = A @ q
        alpha[j] = q @ w
        if j == m - 1:
            break
        w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        b = np.linalg.norm(w)
        if b <= 1e-12 * scale:
            # invariant subspace found: restart orthogonally, tridiagonal entry is zero
            b = 0.0
            for e in np.eye(n):
                w = e - Q[:, : j + 1] @ (Q[:, : j + 1].T @ e)
                if np.linalg.norm(w) > 1e-8:
                    break
            q = w / np.linalg.norm(w)
        else:
            q = w / b
        beta[j] = b
    return Q, alpha, beta


def psd_hessian(f=None, x=None, fd_step: float = 1e-4, floor: float | None = None,
                evaluate=None, H: np.ndarray | None = None, f0=None, basis=None) -> np.ndarray:
    """Finite-difference Hessian made symmetric positive definite.

    The symmetric matrix is tridiagonalised by Lanczos, the tridiagonal
    eigenvalues are clipped from below at ``floor`` (default ``1e-6`` times
    the sum of absolute eigenvalues, which equals the trace for PSD input)
    and the matrix is reassembled.  Pass ``H`` to skip differencing.
    """
    if H is None:
        H = fd_hessian(f, x, fd_step, evaluate, f0, basis)
    H = 0.5 * (H + H.T)
    Q, alpha, beta = lanczos(H)
    evals, V = eigh_tridiagonal(alpha, beta)
    if floor is None:
        floor = 1e-6 * float(np.sum(np.abs(evals)))
    floor = max(floor, 1e-300)
    clipped = np.maximum(evals, floor)
    W = Q @ V
    out = (W * clipped) @ W.T
    return 0.5 * (out + out.T)


def newton_learn(config: LearnConfig, f=None, callback=None) -> LearnState:
    """Damped Newton iteration ``eta <- eta - alpha H^-1 grad`` in ``eta = log theta``.

    ``alpha`` starts at 1 (after capping the step at ``max_step`` in log
    units) and halves until the objective decreases.  After the first
    iteration the Hessian is differenced along the eigenvectors of the
    previous estimate (see :func:`fd_hessian`).  Stops when the
    gradient norm in (k, lambda) coordinates drops below ``grad_tol``, when
    the accepted step is below ``step_tol``, after ``max_iters`` iterations,
    or with status ``"stalled"`` if no descent is found.  ``f`` replaces the
    PDE objective (a function of theta) for testing.
    """
    obj = f if f is not None else (lambda th: objective(th, config))

    def f_eta(eta):
        return obj(np.exp(eta))

    ev = _Evaluator(f_eta, config.threads)
    eta = np.log(np.asarray(config.theta0, dtype=float))
    f0 = ev([eta])[0]
    if not np.isfinite(f0):
        raise RuntimeError(f"objective is not finite at theta0={config.theta0}")
    history = [(tuple(np.exp(eta)), float(f0))]
    status = "max_iters"
    g_theta = np.full(2, np.nan)
    Hpsd = np.eye(2)
    basis = None
    iteration = 0
    for iteration in range(config.max_iters + 1):
        theta = np.exp(eta)
        g_eta = fd_gradient(f_eta, eta, config.fd_step, ev)
        g_theta = g_eta / theta
        H = fd_hessian(f_eta, eta, config.fd_step, ev, f0, basis)
        if not (np.all(np.isfinite(g_eta)) and np.all(np.isfinite(H))):
            log.warning("forward run blew up inside the difference stencil at theta=%s", theta)
            status = "stalled"
            break
        Hpsd = psd_hessian(H=H, floor=config.hessian_floor)
        basis = np.linalg.eigh(Hpsd)[1]
        log.info("iter %d theta=%s V=%.6e |grad|=%.3e", iteration, theta, f0, np.linalg.norm(g_theta))
        if callback is not None:
            callback(iteration, theta, f0, g_theta)
        if np.linalg.norm(g_theta) <= config.grad_tol:
            status = "converged"
            break
        if iteration == config.max_iters:
            break
        d = -np.linalg.solve(Hpsd, g_eta)
        big = np.max(np.abs(d))
        if big > config.max_step:
            d *= config.max_step / big
        alpha = 1.0
        for _ in range(config.max_backtracks + 1):
            trial = eta + alpha * d
            ft = ev([trial])[0]
            if np.isfinite(ft) and ft < f0:
                break
            alpha *= 0.5
        else:
            status = "stalled"
            break
        step = alpha * d
        eta = eta + step
        f0 = ft
        history.append((tuple(np.exp(eta)), float(f0)))
        if np.max(np.abs(step)) <= config.step_tol:
            iteration += 1
            status = "converged_step"
            break
        ev.cache = {k: v for k, v in ev.cache.items() if k == tuple(eta)}
    return LearnState(
        theta=tuple(float(v) for v in np.exp(eta)),
        objective=float(f0),
        gradient=tuple(float(v) for v in g_theta),
        hessian_psd=Hpsd,
        iteration=iteration,
        history=history,
        status=status,
    )


def fit_report(state: LearnState, config: LearnConfig, true_kernel=None, x_fixed: float = 0.0) -> dict:
    """Training curve, fitted kernel profile psi(x_fixed, .) and per-frame KL of the fit."""
    objectives = [v for _, v in state.history]
    training = [
        {"iter": i, "objective": v, "objective_log2": math.log2(v) if v > 0 else -math.inf}
        for i, v in enumerate(objectives)
    ]
    grid = config.forward.grid
    fitted = kernel_for_theta(state.theta, config)
    profile = []
    if grid.dim == 1:
        s = grid.centers
        fit_vals = fitted.evaluate(x_fixed, s)
        true_vals = None
        if true_kernel is not None:
            true_vals = true_kernel.evaluate(x_fixed, s)
        for i, si in enumerate(s):
            row = {"s": float(si), "psi_fit": float(fit_vals[i])}
            if true_vals is not None:
                row["psi_true"] = float(true_vals[i])
            profile.append(row)
    else:
        # the 2D kernel is singular on the diagonal: sample along y = 0 and skip x_fixed
        s = grid.centers
        for si in s:
            pt = np.array([si, 0.0])
            anchor = np.array([x_fixed, 0.0])
            if np.linalg.norm(pt - anchor) <= 1e-12:
                val = float("nan")
            else:
                val = float(fitted.evaluate(anchor, pt))
            profile.append({"s": float(si), "psi_fit": val})
    per_frame = frame_divergences(state.theta, config)
    return {
        "theta": list(state.theta),
        "iterations": state.iteration,
        "final_objective": state.objective,
        "status": state.status,
        "training": training,
        "kernel_profile": profile,
        "frame_times": list(config.observations.times),
        "frame_kl": per_frame.tolist(),
    }
