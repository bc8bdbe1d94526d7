import numpy as np
import pytest
from scipy import integrate, stats

from swarmlearn.domain import Domain, integrate_field, make_grid
from swarmlearn.kernels import CuckerSmale, FreeSpaceExp, ScreenedPoisson1D
from swarmlearn.micro import (
    ParticleEnsemble,
    add_observation_noise,
    cs_rhs,
    empirical_density,
    flocking_diagnostics,
    sample_from_density,
    simulate_micro,
    to_fluctuation_frame,
    to_lab_frame,
    verlet_step,
)

L = 2 * np.pi
SP = ScreenedPoisson1D(4.0, 1.0, L)
G1 = make_grid(Domain(1, np.pi), 101)
RHO0 = lambda x: np.where(np.abs(x) <= np.pi, np.cos(x / 2) / 4, 0.0)
U0 = lambda x: -np.sin(x / 2)


def pair():
    return ParticleEnsemble(np.array([[-0.5], [0.5]]), np.array([[1.0], [-1.0]]))


def random_ensemble(rng, n=300, dim=1, spread=2.0):
    return ParticleEnsemble(rng.uniform(-spread, spread, (n, dim)), rng.standard_normal((n, dim)))


def test_two_particle_accelerations():
    a = cs_rhs(pair(), FreeSpaceExp(4.0, 1.0))
    assert a[0, 0] == pytest.approx(-4 * np.exp(-1), rel=1e-14)
    assert a[1, 0] == pytest.approx(4 * np.exp(-1), rel=1e-14)


def test_two_particle_verlet_step():
    ens = verlet_step(pair(), FreeSpaceExp(4.0, 1.0), 0.01)
    a1 = -4 * np.exp(-1)
    assert ens.positions[0, 0] == pytest.approx(-0.5 + 0.01 * (1 + 0.5 * a1 * 0.01), abs=1e-15)
    assert ens.positions[0, 0] == pytest.approx(-0.4900736, abs=1e-7)


@pytest.mark.parametrize("kernel", [SP, FreeSpaceExp(4, 1), CuckerSmale(5, 2)])
def test_consensus_is_fixed_point(kernel, rng):
    x = rng.uniform(-2, 2, (50, 1))
    ens = ParticleEnsemble(x, np.full((50, 1), 0.7))
    assert np.max(np.abs(cs_rhs(ens, kernel))) <= 1e-15
    step = verlet_step(ens, kernel, 0.01)
    np.testing.assert_array_equal(step.velocities, ens.velocities)
    np.testing.assert_allclose(step.positions, x + 0.007, rtol=0, atol=1e-15)


@pytest.mark.parametrize("kernel", [SP, FreeSpaceExp(4, 1), CuckerSmale(5, 2)])
def test_accelerations_sum_to_zero(kernel, rng):
    a = cs_rhs(random_ensemble(rng), kernel)
    assert abs(a.sum()) <= 1e-12 * np.abs(a).sum()


@pytest.mark.parametrize("kernel", [SP, FreeSpaceExp(4, 1)])
def test_separable_matches_pairwise(kernel, rng):
    ens = random_ensemble(rng, 500)
    np.testing.assert_allclose(cs_rhs(ens, kernel, "separable"), cs_rhs(ens, kernel, "pairwise"), atol=1e-13)


def test_two_dimensional_pairwise(rng):
    a = cs_rhs(random_ensemble(rng, 100, dim=2), CuckerSmale(5, 2))
    assert a.shape == (100, 2) and np.all(np.abs(a.sum(0)) <= 1e-12)


def test_outside_domain_lists_indices():
    ens = ParticleEnsemble(np.array([[0.0], [4.0], [-5.0]]), np.zeros((3, 1)))
    with pytest.raises(ValueError, match=r"\[1, 2\]"):
        cs_rhs(ens, SP)


def test_harmonic_energy_drift():
    ens = ParticleEnsemble(np.array([[1.0]]), np.array([[0.0]]))
    accel = lambda x, v: -x
    energy = lambda e: 0.5 * (e.positions[0, 0] ** 2 + e.velocities[0, 0] ** 2)
    e0 = energy(ens)
    worst = 0.0
    for _ in range(10_000):
        ens = verlet_step(ens, None, 0.01, accel=accel)
        worst = max(worst, abs(energy(ens) - e0) / e0)
    assert worst <= 1e-4


def test_harmonic_reversible():
    ens = ParticleEnsemble(np.array([[0.3], [-1.2]]), np.array([[0.5], [0.1]]))
    accel = lambda x, v: -x
    back = verlet_step(verlet_step(ens, None, 0.01, accel=accel), None, -0.01, accel=accel)
    np.testing.assert_allclose(back.positions, ens.positions, atol=1e-15)
    np.testing.assert_allclose(back.velocities, ens.velocities, atol=1e-15)


def test_momentum_conserved_over_run(rng):
    ens = random_ensemble(rng, 400, spread=1.0)
    _, frames = simulate_micro(ens, SP, 0.01, 100, save_every=25)
    p0 = ens.velocities.sum()
    for f in frames:
        assert abs(f.velocities.sum() - p0) <= 1e-10 * np.abs(ens.velocities).sum()


def test_fluctuation_frame(rng):
    ens = random_ensemble(rng)
    f = to_fluctuation_frame(ens)
    assert np.abs(f.positions.mean()) <= 1e-15 and np.abs(f.velocities.mean()) <= 1e-15
    with pytest.raises(ValueError):
        to_fluctuation_frame(f)
    back = to_lab_frame(f, 0.0)
    np.testing.assert_allclose(back.positions, ens.positions, atol=1e-15)
    centred = ParticleEnsemble(f.positions, f.velocities)
    np.testing.assert_allclose(to_fluctuation_frame(centred).positions, f.positions, atol=1e-15)


def test_centre_of_mass_drifts_linearly(rng):
    ens = random_ensemble(rng, 200, spread=1.0)
    ens = ParticleEnsemble(ens.positions, ens.velocities + 0.2)
    f0 = to_fluctuation_frame(ens)
    times, frames = simulate_micro(ens, FreeSpaceExp(4, 1), 0.01, 50, save_every=50)
    xc = frames[-1].positions.mean()
    assert xc == pytest.approx(f0.xc0[0] + times[-1] * f0.vc0[0], abs=1e-13)


def test_sampler_mean_within_clt_bound():
    n = 20_000
    var = integrate.quad(lambda x: x * x * RHO0(x), -np.pi, np.pi)[0]
    ens = sample_from_density(RHO0, U0, n, seed=7)
    assert abs(ens.positions.mean()) <= 3 * np.sqrt(var / n)
    np.testing.assert_allclose(ens.velocities[:, 0], U0(ens.positions[:, 0]))


def test_sampler_uniform_ks():
    n = 5000
    ens = sample_from_density(lambda x: np.where(np.abs(x) <= 1, 0.5, 0.0), lambda x: 0 * x, n, seed=3,
                              half_width=1.0)
    stat = stats.kstest(ens.positions[:, 0], stats.uniform(-1, 2).cdf).statistic
    assert stat < stats.kstwo(n).ppf(0.99)


def test_sampler_deterministic_and_validated():
    a = sample_from_density(RHO0, U0, 1000, seed=11)
    b = sample_from_density(RHO0, U0, 1000, seed=11)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
    with pytest.raises(ValueError):
        sample_from_density(lambda x: 3 * RHO0(x), U0, 10, seed=0)
    with pytest.raises(ValueError):
        sample_from_density(lambda x: 0 * x, U0, 10, seed=0)
    with pytest.raises(ValueError):
        sample_from_density(RHO0, U0, 0, seed=0)


def test_observation_noise(rng):
    ens = random_ensemble(rng, 100_000)
    assert add_observation_noise(ens, 0.0, 1) is ens
    noisy = add_observation_noise(ens, 1.0, 1)
    assert 0.99 <= np.var(noisy.positions - ens.positions) <= 1.01
    np.testing.assert_array_equal(noisy.velocities, ens.velocities)
    assert not np.array_equal(noisy.positions, add_observation_noise(ens, 1.0, 2).positions)


def test_empirical_density_single_cell():
    ens = ParticleEnsemble(np.full((37, 1), G1.centers[12]), np.zeros((37, 1)))
    rho = empirical_density(ens, G1).values
    assert rho[12] == pytest.approx(1 / G1.dx, rel=1e-15)
    assert np.count_nonzero(rho) == 1


def test_empirical_density_normalised(rng):
    ens = random_ensemble(rng, 999, spread=4.0)
    assert integrate_field(empirical_density(ens, G1)) == pytest.approx(1.0, abs=1e-13)


def test_empirical_density_l1_against_binomial_oracle():
    # i.i.d. histogram: E L1 ~ sum_i sqrt(2 p_i / (pi N)) with p_i = rho_i dx
    n = 20_000
    rho = RHO0(G1.centers)
    p = rho * G1.dx
    expected = np.sum(np.sqrt(2 * p * (1 - p) / (np.pi * n)))
    l1 = [np.sum(np.abs(empirical_density(sample_from_density(RHO0, U0, n, seed=s), G1).values - rho)) * G1.dx
          for s in range(8)]
    assert np.mean(l1) == pytest.approx(expected, rel=0.15)
    strat = sample_from_density(RHO0, U0, n, seed=0, stratified=True)
    assert np.sum(np.abs(empirical_density(strat, G1).values - rho)) * G1.dx <= 0.05


def test_flocking_consensus():
    ens = ParticleEnsemble(np.linspace(-1, 1, 20)[:, None], np.full((20, 1), 0.4))
    times, frames = simulate_micro(ens, SP, 0.01, 20, save_every=5)
    rep = flocking_diagnostics(times, [to_fluctuation_frame(f) for f in frames], SP)
    assert max(rep.velocity_fluctuation) <= 1e-15
    assert rep.sufficient_condition_met


def test_flocking_requires_fluctuation_frame(rng):
    with pytest.raises(ValueError):
        flocking_diagnostics([0.0], [random_ensemble(rng)], SP)


def test_flocking_main_setup_monotone():
    ens = sample_from_density(RHO0, U0, 2000, seed=0)
    times, frames = simulate_micro(ens, SP, 0.01, 200, save_every=10)
    rep = flocking_diagnostics(times, [to_fluctuation_frame(f) for f in frames], SP)
    assert rep.velocity_nonincreasing
    assert np.all(np.diff(rep.velocity_fluctuation) <= 0)


def test_flocking_tight_cluster_bounds():
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.3, 0.3, 500)
    ens = ParticleEnsemble(x[:, None], (-0.1 * np.sin(x / 0.3))[:, None])
    times, frames = simulate_micro(ens, SP, 0.01, 200, save_every=10)
    rep = flocking_diagnostics(times, [to_fluctuation_frame(f) for f in frames], SP)
    assert rep.sufficient_condition_met and rep.decay_bound_respected
    assert rep.x_M < L / 4 and rep.decay_rate > 0
    assert max(rep.max_pair_distance) <= rep.coherence_bound
