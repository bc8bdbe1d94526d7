import math
from dataclasses import replace

import numpy as np
import pytest

from swarmlearn.domain import Domain, ScalarField, make_grid
from swarmlearn.kernels import ScreenedPoisson1D
from swarmlearn.learning import (
    LearnConfig,
    fd_gradient,
    fd_hessian,
    fit_report,
    kl_divergence,
    lanczos,
    newton_learn,
    objective,
    psd_hessian,
)
from swarmlearn.macro import MacroConfig, initial_conditions_1d, simulate_macro

L = 2 * np.pi
G1 = make_grid(Domain(1, np.pi), 101)
TOY = make_grid(Domain(1, 1.5), 3)


@pytest.fixture(scope="module")
def self_generated():
    forward = MacroConfig(G1, ScreenedPoisson1D(4.0, 1.0, L))
    series, _ = simulate_macro(forward, initial_conditions_1d(G1))
    return LearnConfig(series, forward)


def toy(values):
    return ScalarField(TOY, np.array(values, dtype=float))


def test_kl_identical_is_zero():
    p = toy([0.2, 0.5, 0.3])
    assert kl_divergence(p, p) == 0.0


def test_kl_two_cell_values():
    p, q = toy([0.5, 0.5, 0.0]), toy([0.25, 0.75, 0.0])
    assert kl_divergence(p, q) == pytest.approx(0.5 * math.log2(2) + 0.5 * math.log2(2 / 3), rel=1e-14)
    assert kl_divergence(p, q) == pytest.approx(0.20752, abs=1e-5)
    assert kl_divergence(q, p) == pytest.approx(0.25 * math.log2(0.5) + 0.75 * math.log2(1.5), rel=1e-14)
    assert kl_divergence(q, p) == pytest.approx(0.18872, abs=1e-5)


def test_kl_grid_mismatch():
    with pytest.raises(ValueError):
        kl_divergence(toy([1, 0, 0]), ScalarField(G1, np.ones(101)))


def test_gibbs_inequality():
    rng = np.random.default_rng(0)
    grid = make_grid(Domain(1, 1.0), 40)
    for _ in range(1000):
        p = rng.random(40) ** 3
        q = rng.random(40) ** 3
        p /= p.sum() * grid.dx
        q /= q.sum() * grid.dx
        assert kl_divergence(ScalarField(grid, p), ScalarField(grid, q)) >= -1e-15


def test_gradient_of_quadratic_second_order():
    a = np.array([0.3, -1.2])
    f = lambda x: float(np.sum((x - a) ** 2))
    x = np.array([1.7, 0.4])
    exact = 2 * (x - a)
    # central differences are exact on quadratics up to rounding
    np.testing.assert_allclose(fd_gradient(f, x, 1e-4), exact, atol=1e-9)
    cubic = lambda x: float(np.sum((x - a) ** 3))
    exact3 = 3 * (x - a) ** 2
    e1 = np.abs(fd_gradient(cubic, x, 1e-3) - exact3).max()
    e2 = np.abs(fd_gradient(cubic, x, 5e-4) - exact3).max()
    assert e1 / e2 == pytest.approx(4.0, rel=1e-3)


def test_hessian_of_quadratic():
    f = lambda x: x[0] ** 2 + 4 * x[1] ** 2
    H = psd_hessian(f, np.array([0.7, -0.2]))
    np.testing.assert_allclose(H, np.diag([2.0, 8.0]), atol=1e-4)


def test_hessian_symmetric_and_rotated_basis():
    f = lambda x: x[0] ** 2 + 3 * x[0] * x[1] + 5 * x[1] ** 2
    x = np.array([0.2, 0.3])
    H = fd_hessian(f, x)
    assert H[0, 1] == H[1, 0]
    R = np.array([[np.cos(0.4), -np.sin(0.4)], [np.sin(0.4), np.cos(0.4)]])
    np.testing.assert_allclose(fd_hessian(f, x, basis=R), [[2, 3], [3, 10]], atol=1e-5)


def test_saddle_clipped():
    f = lambda x: x[0] ** 2 - x[1] ** 2
    floor = 1e-3
    H = psd_hessian(f, np.zeros(2), floor=floor)
    ev = np.linalg.eigvalsh(H)
    assert np.all(ev >= floor * (1 - 1e-9))
    np.linalg.cholesky(H)
    Hd = psd_hessian(f, np.zeros(2))
    assert np.min(np.linalg.eigvalsh(Hd)) >= 1e-6 * 4 * (1 - 1e-6)


def test_lanczos_tridiagonal(rng):
    A = rng.standard_normal((6, 6))
    A = A + A.T
    Q, alpha, beta = lanczos(A)
    T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
    np.testing.assert_allclose(Q.T @ Q, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(Q.T @ A @ Q, T, atol=1e-10)


def test_lanczos_breakdown_diagonal():
    A = np.diag([1.0, 2.0, 3.0])
    Q, alpha, beta = lanczos(A, v0=np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(np.sort(alpha), [1, 2, 3])
    np.testing.assert_allclose(beta, 0.0, atol=1e-15)


def test_newton_on_injected_quadratic(self_generated):
    target = np.log([4.0, 1.0])
    f = lambda th: float(np.sum((np.log(th) - target) ** 2))
    cfg = replace(self_generated, grad_tol=1e-8, step_tol=1e-12)
    state = newton_learn(cfg, f=f)
    np.testing.assert_allclose(state.theta, [4.0, 1.0], rtol=1e-6)
    vals = [v for _, v in state.history]
    assert np.all(np.diff(vals) < 0)


def test_self_consistency(self_generated):
    cfg = self_generated
    assert objective((4.0, 1.0), cfg) <= 1e-10
    g = fd_gradient(lambda th: objective(th, cfg), np.array([4.0, 1.0]))
    assert np.max(np.abs(g)) <= 1e-4
    assert objective((0.5, 4.0), cfg) > objective((4.0, 1.0), cfg)


def test_start_at_truth_stops_immediately(self_generated):
    state = newton_learn(replace(self_generated, theta0=(4.0, 1.0), grad_tol=1e-4))
    assert state.iteration <= 1
    np.testing.assert_allclose(state.theta, [4.0, 1.0], rtol=1e-6)


def test_recovers_self_generated_parameters(self_generated):
    state = newton_learn(replace(self_generated, grad_tol=1e-10))
    assert abs(state.theta[0] - 4) <= 0.05 and abs(state.theta[1] - 1) <= 0.05
    assert state.iteration <= 20
    vals = [v for _, v in state.history]
    assert np.all(np.diff(vals) <= 0)
    rep = fit_report(state, self_generated, true_kernel=ScreenedPoisson1D(4, 1, L))
    assert len(rep["kernel_profile"]) == 101
    assert len(rep["frame_kl"]) == len(self_generated.observations.times)
    assert [r["iter"] for r in rep["training"]] == list(range(len(state.history)))


def test_config_validation(self_generated):
    with pytest.raises(ValueError):
        replace(self_generated, theta0=(0.0, 1.0))
    with pytest.raises(ValueError):
        objective((-1.0, 1.0), self_generated)
