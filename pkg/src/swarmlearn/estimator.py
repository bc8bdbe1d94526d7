"""scikit-learn style wrappers around the particle histogram and the kernel learner."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .domain import Domain, Grid, StateField, make_grid
from .kernels import ScreenedPoisson1D, ScreenedPoisson2DSeries
from .learning import LearnConfig, fit_report, newton_learn, objective, simulate_theta
from .macro import DensitySeries, MacroConfig
from .micro import ParticleEnsemble, add_observation_noise, empirical_density

__all__ = [
    "check_density_series",
    "check_positive_pair",
    "EmpiricalDensityTransformer",
    "KernelParameterEstimator",
]


def check_density_series(X) -> DensitySeries:
    if not isinstance(X, DensitySeries):
        raise TypeError(f"expected a DensitySeries, got {type(X).__name__}")
    if len(X) < 2:
        raise ValueError("need at least two frames to fit dynamics")
    for t, s in zip(X.times, X.states):
        if not np.all(np.isfinite(s.stack())):
            raise ValueError(f"frame at t={t} contains non-finite values")
        if np.any(s.rho.values < 0):
            raise ValueError(f"frame at t={t} has negative density")
    return X


def check_positive_pair(value, name: str) -> tuple[float, float]:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.shape != (2,) or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} must be a pair of positive numbers, got {value!r}")
    return float(arr[0]), float(arr[1])


class EmpiricalDensityTransformer(TransformerMixin, BaseEstimator):
    """Histogram 1D particle positions into cell densities.

    ``X`` has one row per frame and one column per particle; the output has
    one row per frame and one column per cell.  ``noise_sigma2 > 0`` adds
    Gaussian position noise before binning (row ``i`` uses seed
    ``random_state + i``).
    """

    def __init__(self, cells=101, half_width=np.pi, noise_sigma2=0.0, random_state=0):
        self.cells = cells
        self.half_width = half_width
        self.noise_sigma2 = noise_sigma2
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True)
        if self.noise_sigma2 < 0:
            raise ValueError("noise_sigma2 must be nonnegative")
        self.grid_ = make_grid(Domain(1, float(self.half_width)), int(self.cells))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X, ensure_2d=True)
        out = np.empty((X.shape[0], self.grid_.cells_per_axis))
        for i, row in enumerate(X):
            ens = ParticleEnsemble(row[:, None], np.zeros((len(row), 1)))
            ens = add_observation_noise(ens, self.noise_sigma2, self.random_state + i)
            out[i] = empirical_density(ens, self.grid_).values
        return out


class KernelParameterEstimator(BaseEstimator):
    """Learn (k, lambda) of the screened-Poisson kernel from a DensitySeries.

    After ``fit``: ``theta_``, ``k_``, ``lambda_``, ``objective_``,
    ``n_iter_``, ``status_`` and ``history_``.  ``predict`` simulates the
    fitted model on the times of a series starting from its first frame;
    ``score`` is the negated KL objective, so larger is better.
    """

    def __init__(self, theta0=(1.0, 0.5), fd_step=1e-4, max_iters=20, grad_tol=1e-6,
                 hessian_floor=None, dt=0.01, symbol=None, truncation=256, threads=1):
        self.theta0 = theta0
        self.fd_step = fd_step
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.hessian_floor = hessian_floor
        self.dt = dt
        self.symbol = symbol
        self.truncation = truncation
        self.threads = threads

    def _config(self, X: DensitySeries, theta, init: StateField | None = None) -> LearnConfig:
        grid: Grid = X.grid
        k, lam = theta
        if grid.dim == 1:
            kernel = ScreenedPoisson1D(k, lam, grid.length)
        else:
            kernel = ScreenedPoisson2DSeries(k, lam, grid.length, self.truncation)
        forward = MacroConfig(grid, kernel, X.times[0], X.times[-1], self.dt, symbol=self.symbol)
        return LearnConfig(
            observations=X,
            forward=forward,
            theta0=tuple(theta),
            fd_step=self.fd_step,
            max_iters=self.max_iters,
            grad_tol=self.grad_tol,
            hessian_floor=self.hessian_floor,
            init=init,
            threads=self.threads,
        )

    def fit(self, X, y=None, init: StateField | None = None):
        X = check_density_series(X)
        theta0 = check_positive_pair(self.theta0, "theta0")
        config = self._config(X, theta0, init)
        state = newton_learn(config)
        self.theta_ = np.array(state.theta)
        self.k_, self.lambda_ = state.theta
        self.objective_ = state.objective
        self.n_iter_ = state.iteration
        self.status_ = state.status
        self.history_ = state.history
        self.state_ = state
        self.config_ = config
        return self

    def predict(self, X, init: StateField | None = None) -> DensitySeries:
        check_is_fitted(self, "theta_")
        X = check_density_series(X)
        return simulate_theta(self.theta_, self._config(X, self.theta_, init))

    def score(self, X, y=None, init: StateField | None = None) -> float:
        check_is_fitted(self, "theta_")
        X = check_density_series(X)
        return -objective(self.theta_, self._config(X, self.theta_, init))

    def report(self, true_kernel=None) -> dict:
        check_is_fitted(self, "theta_")
        return fit_report(self.state_, self.config_, true_kernel)
