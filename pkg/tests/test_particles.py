"""Tests for the interacting-particle simulation and empirical measures."""

import numpy as np
import pytest

from spinflow.grids import ThetaGrid, TorusGrid
from spinflow.measures import DiscreteFiber, FiberMeasure, normalize_fibers
from spinflow.models import ModelParams, default_model
from spinflow.particles import (
    ParticleBlowup,
    coarsen_to_sites,
    equilibrium_kappa,
    fibered_empirical_measure,
    pair_vs_fibered_cost,
    sample_from_fibers,
    sample_initial,
    simulate,
    sites_to_measure,
    empirical_to_grid,
)
from spinflow.measures import coarsen_measure
from spinflow.pde import gibbs_weights
from spinflow.transport import wasserstein_1d


def ou_model():
    return ModelParams(
        psi_coeffs=(0.0, 0.0, 0.5),
        j_kernel=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        growth_exponent=1,
        coercivity_coeff=0.25,
        quadratic_coeff=0.25,
        offset_coeff=0.0,
        theta_range=(-8.0, 8.0),
    )


def test_zero_noise_reduces_to_explicit_euler():
    p = ou_model()
    theta0 = np.array([1.5, -0.75, 0.3, 2.0])
    dt = 0.01
    traj = simulate(theta0, p, dt, 0.5, seed=0, noise_scale=0.0)
    n_steps = round(0.5 / dt)
    expected = theta0 * (1.0 - dt) ** n_steps
    np.testing.assert_allclose(traj.states[-1], expected, atol=1e-12)


def test_same_seed_is_bit_reproducible():
    p = default_model()
    theta0 = np.linspace(-1.0, 1.0, 32)
    a = simulate(theta0, p, 1e-3, 0.2, seed=7)
    b = simulate(theta0, p, 1e-3, 0.2, seed=7)
    np.testing.assert_array_equal(a.states, b.states)
    c = simulate(theta0, p, 1e-3, 0.2, seed=8)
    assert np.max(np.abs(c.states[-1] - a.states[-1])) > 1e-3


def test_ou_long_run_variance():
    # stationary variance of d theta = -theta dt + sqrt(2) dW is 1
    p = ou_model()
    rng = np.random.default_rng(1)
    theta0 = rng.normal(0.0, 1.0, 4096)
    traj = simulate(theta0, p, 1e-3, 2.0, seed=3)
    var = float(np.var(traj.states[-1]))
    assert var == pytest.approx(1.0, abs=0.07)


def test_blowup_is_reported():
    p = default_model()
    theta0 = np.full(8, 3.0)
    with pytest.raises(ParticleBlowup):
        simulate(theta0, p, 0.5, 5.0, seed=0)


def test_uncoupled_equilibrium_matches_gibbs():
    # J = 0 detailed balance: the late-time empirical spin law is the
    # single-site Gibbs distribution
    p = ou_model()
    kappa = equilibrium_kappa(p)
    n = 2000
    theta0 = sample_initial(p, kappa, n, seed=11)
    sample_times = np.linspace(1.0, 2.0, 51)
    traj = simulate(theta0, p, 1e-3, 2.0, seed=12,
                    sample_times=sample_times)
    pool = np.concatenate([traj.states[k] for k in range(len(sample_times))])
    atoms = DiscreteFiber(np.sort(pool), np.full(pool.size, 1.0 / pool.size))
    grid = ThetaGrid(-8.0, 8.0, 400)
    gibbs = FiberMeasure(grid, gibbs_weights(grid, p))
    assert wasserstein_1d(atoms, gibbs) < 0.05


def test_sample_initial_rejects_unnormalized_density():
    p = ou_model()

    def bad_kappa(x, theta):
        return np.full_like(np.asarray(theta, dtype=float), 1.0)

    with pytest.raises(ValueError):
        sample_initial(p, bad_kappa, 4, seed=0)


def test_sample_initial_matches_target_moments():
    p = ou_model()
    kappa = equilibrium_kappa(p)
    draws = sample_initial(p, kappa, 20000, seed=5)
    assert np.mean(draws) == pytest.approx(0.0, abs=0.02)
    assert np.var(draws) == pytest.approx(1.0, abs=0.03)


def test_pair_vs_fibered_closed_form():
    rng = np.random.default_rng(6)
    assert pair_vs_fibered_cost(rng.normal(size=1)) == pytest.approx(
        np.sqrt(1.0 / 12.0), abs=1e-14
    )
    for n in (2, 10, 100, 1000):
        thetas = rng.normal(size=n)
        cost = pair_vs_fibered_cost(thetas)
        assert cost == pytest.approx(1.0 / (np.sqrt(3.0) * n), abs=1e-14)
        assert cost <= 1.0 / n


def test_pair_vs_fibered_riemann_oracle():
    # spreading one atom across its x-cell instead of pinning it to the
    # left edge costs the cell-average squared displacement
    for n in (1, 2, 5):
        u = (np.arange(200_000) + 0.5) / 200_000 / n
        wrapped = np.minimum(u, 1.0 - u)
        expected = np.sqrt(np.mean(wrapped**2))
        got = pair_vs_fibered_cost(np.zeros(n))
        assert got == pytest.approx(expected, rel=1e-6)


def test_coarsen_to_sites_roundtrip():
    rng = np.random.default_rng(9)
    torus = TorusGrid(8)
    theta = ThetaGrid(-4.0, 4.0, 32)
    mu = normalize_fibers(rng.uniform(0.1, 1.0, (8, 32)), torus, theta)
    fibers = coarsen_to_sites(mu, 4)
    back = sites_to_measure(fibers)
    expected = coarsen_measure(mu, 4, 32)
    np.testing.assert_allclose(back.rho, expected.rho, atol=1e-13)
    with pytest.raises(ValueError):
        coarsen_to_sites(mu, 3)


def test_sample_from_fibers_hits_quantiles():
    theta = ThetaGrid(-1.0, 1.0, 4)
    # all mass in cell index 2: positions must land inside it
    w = np.array([0.0, 0.0, 2.0, 0.0])
    fibers = [FiberMeasure(theta, w) for _ in range(64)]
    draws = sample_from_fibers(fibers, seed=1)
    assert draws.shape == (64,)
    assert np.all((draws >= 0.0) & (draws <= 0.5))


def test_fibered_empirical_measure_atoms():
    thetas = np.array([0.3, -0.7, 1.1])
    mu = fibered_empirical_measure(thetas)
    assert len(mu.fibers) == 3
    for k, fiber in enumerate(mu.fibers):
        np.testing.assert_array_equal(fiber.positions, [thetas[k]])
        np.testing.assert_array_equal(fiber.masses, [1.0])


def test_empirical_to_grid_bins_cell_centers():
    theta = ThetaGrid(-1.0, 1.0, 8)
    # 4 pooled samples of a 2-site system, all draws at known cell centers
    data = np.column_stack([
        np.repeat(theta.centers[2], 4),
        theta.centers[:4],
    ])
    mu = empirical_to_grid(data, theta)
    np.testing.assert_allclose(mu.fiber_masses(), 1.0, atol=1e-12)
    np.testing.assert_array_equal((mu.rho > 0).sum(axis=1), [1, 4])
    assert mu.rho[0, 2] == pytest.approx(1.0 / theta.dtheta)


def test_trajectory_csv_format(tmp_path):
    p = ou_model()
    traj = simulate(np.array([0.5, -0.5]), p, 0.01, 0.05, seed=2,
                    sample_times=[0.0, 0.05])
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,k,theta"
    assert len(lines) == 1 + 2 * 2
