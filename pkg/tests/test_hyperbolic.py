import warnings

import numpy as np
import pytest

from swarmlearn.domain import Domain, StateField, make_grid
from swarmlearn.hyperbolic import (
    RHO_FLOOR,
    SPEED_FLOOR,
    CFLWarning,
    cfl_dt,
    check_cfl,
    flux_divergence,
    kt_flux,
    minmod,
    reconstruct_interfaces,
    semi_discrete_rhs,
    step_time,
)


@pytest.mark.parametrize("a,b,out", [(-1, 2, 0), (3, 3, 3), (1, 2, 1), (-2, -5, -2), (0, 4, 0)])
def test_minmod(a, b, out):
    assert minmod(a, b) == out


def test_reconstruct_constant():
    U = np.full((2, 20), 0.7)
    U[1] = -0.3
    left, right = reconstruct_interfaces(U, 0.1)
    # the ghost cells are zero, so only interior interfaces see the constant
    np.testing.assert_array_equal(left[:, 1:-1], U[:, :19])
    np.testing.assert_array_equal(right[:, 1:-1], U[:, 1:])


def test_reconstruct_linear_exact():
    dx = 0.1
    x = (np.arange(20) + 0.5) * dx + 1.0
    U = np.stack([x, np.zeros(20)])
    left, right = reconstruct_interfaces(U, dx)
    faces = 1.0 + np.arange(21) * dx
    np.testing.assert_allclose(left[0, 2:-2], faces[2:-2], atol=1e-14)
    np.testing.assert_allclose(right[0, 2:-2], faces[2:-2], atol=1e-14)


def test_kt_flux_no_jump():
    s = np.array([[1.0], [0.5]])
    np.testing.assert_allclose(kt_flux(s, s)[:, 0], [0.5, 0.25])
    z = np.array([[2.0], [0.0]])
    np.testing.assert_array_equal(kt_flux(z, z)[:, 0], [0.0, 0.0])


def test_kt_flux_dissipation():
    # (rho,m)=(1,1) | (1,-1): F = (0, 2), a = 1, jump (0,-2) -> (0, 2)
    left, right = np.array([[1.0], [1.0]]), np.array([[1.0], [-1.0]])
    np.testing.assert_allclose(kt_flux(left, right)[:, 0], [0.0, 2.0])


def test_kt_flux_vacuum_is_finite():
    left, right = np.array([[0.0], [1e-3]]), np.array([[RHO_FLOOR / 10], [0.0]])
    assert np.all(np.isfinite(kt_flux(left, right)))


def test_uniform_and_zero_state_rhs():
    g = make_grid(Domain(1, 1.0), 30)
    for rho, m in ((0.8, 0.2), (0.0, 0.0)):
        U = StateField.from_stack(g, np.stack([np.full(30, rho), np.full(30, m)]))
        d = semi_discrete_rhs(U).stack()
        np.testing.assert_allclose(d[:, 2:-2], 0.0, atol=1e-14)
    Z = StateField.from_stack(g, np.zeros((2, 30)))
    assert not np.any(semi_discrete_rhs(Z).stack())


def test_conservative_flux_sum():
    g = make_grid(Domain(2, 1.0), 16)
    rng = np.random.default_rng(3)
    U = np.zeros((3, 16, 16))
    U[0, 3:13, 3:13] = rng.random((10, 10)) + 0.1
    U[1:, 3:13, 3:13] = rng.standard_normal((2, 10, 10)) * 0.1
    assert np.all(np.abs(flux_divergence(U, g).sum(axis=(1, 2))) <= 1e-13)


def test_second_order_on_smooth_transport():
    errs = []
    for Ns in (200, 400, 800):
        g = make_grid(Domain(1, np.pi), Ns)
        x = g.centers
        bump = lambda y: np.where(np.abs(y) < 1.5, np.cos(np.pi * y / 3) ** 4, 0.0)
        U = np.stack([bump(x + 1.0), 0.5 * bump(x + 1.0)])
        n = int(round(1.0 / (0.2 * g.dx)))
        dt = 1.0 / n
        for _ in range(n):
            U = step_time(U, lambda V: flux_divergence(V, g), dt)
        errs.append(np.sum(np.abs(U[0] - bump(x + 0.5))) * g.dx)
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.8)


def test_step_time_zero_rhs_and_decay():
    U = np.array([1.0, 2.0])
    np.testing.assert_array_equal(step_time(U, lambda V: 0 * V, 0.01), U)
    u1 = step_time(np.array([1.0]), lambda v: -v, 0.01)[0]
    # SSP-RK2 on u'=-u gives 1 - dt + dt^2/2, local error dt^3/6
    assert u1 == pytest.approx(1 - 0.01 + 0.5e-4, abs=1e-15)
    assert abs(u1 - np.exp(-0.01)) <= 0.01**3 / 6 * 1.01
    with pytest.raises(ValueError):
        step_time(U, lambda V: V, 0.0)


def test_cfl_dt():
    U = np.array([[1.0, 1.0], [2.0, -1.0]])
    assert cfl_dt(U, 0.1, 0.45) == pytest.approx(0.0225, rel=1e-15)
    Z = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert cfl_dt(Z, 0.1, 0.45) == pytest.approx(0.045 / SPEED_FLOOR)
    with pytest.raises(ValueError):
        cfl_dt(U, 0.1, 1.5)


def test_cfl_violation_warns():
    U = np.array([[1.0], [2.0]])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert not check_cfl(U, 0.1, 0.1)
    assert any(issubclass(x.category, CFLWarning) for x in w)
