"""Tests for grid containers and fibered-measure validation."""

import numpy as np
import pytest

from spinflow.grids import ThetaGrid, TorusGrid, torus_distance
from spinflow.measures import (
    DiscreteFiber,
    DiscreteFiberedMeasure,
    FiberMeasure,
    GridMeasure,
    MeasureCurve,
    coarsen_measure,
    normalize_fibers,
)


def make_measure(n_x=8, n_theta=64, seed=0):
    rng = np.random.default_rng(seed)
    torus = TorusGrid(n_x)
    theta = ThetaGrid(-4.0, 4.0, n_theta)
    raw = rng.uniform(0.1, 1.0, size=(n_x, n_theta))
    return normalize_fibers(raw, torus, theta)


def test_torus_grid_cells():
    torus = TorusGrid(8)
    assert torus.dx == pytest.approx(0.125)
    np.testing.assert_allclose(torus.x, np.arange(8) / 8.0)
    assert torus.wrap(9) == 1
    assert torus.displacement(7, 0) == pytest.approx(-0.125)


def test_torus_distance_wraps():
    assert torus_distance(0.1, 0.9) == pytest.approx(0.2)
    assert torus_distance(0.0, 0.5) == pytest.approx(0.5)
    assert torus_distance(0.25, 0.25) == 0.0


def test_theta_grid_edges_and_centers():
    theta = ThetaGrid(-2.0, 2.0, 16)
    assert theta.dtheta == pytest.approx(0.25)
    assert len(theta.edges) == 17
    assert theta.edges[0] == -2.0 and theta.edges[-1] == 2.0
    np.testing.assert_allclose(
        theta.centers, 0.5 * (theta.edges[:-1] + theta.edges[1:])
    )
    assert theta.width == pytest.approx(4.0)


def test_fiber_measure_requires_normalization():
    theta = ThetaGrid(-1.0, 1.0, 10)
    good = FiberMeasure(theta, np.full(10, 0.5))
    assert good.mass() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        FiberMeasure(theta, np.full(10, 0.7))
    with pytest.raises(ValueError):
        FiberMeasure(theta, -np.full(10, 0.5))


def test_fiber_measure_moments():
    theta = ThetaGrid(-6.0, 6.0, 600)
    centered = np.exp(-0.5 * (theta.centers - 1.0) ** 2)
    fiber = FiberMeasure(theta, centered / (centered.sum() * theta.dtheta))
    # truncation at 5 standard deviations and midpoint quadrature
    assert fiber.mean() == pytest.approx(1.0, abs=1e-5)
    assert fiber.second_moment() == pytest.approx(2.0, abs=1e-4)
    # entropy of a unit gaussian: -0.5 * log(2 pi e)
    expected = -0.5 * np.log(2.0 * np.pi * np.e)
    assert fiber.entropy() == pytest.approx(expected, abs=1e-3)


def test_discrete_fiber_validates_masses():
    DiscreteFiber(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        DiscreteFiber(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DiscreteFiber(np.array([0.0, 1.0]), np.array([1.5, -0.5]))


def test_grid_measure_checks_every_fiber():
    torus = TorusGrid(4)
    theta = ThetaGrid(-1.0, 1.0, 10)
    rho = np.full((4, 10), 0.5)
    mu = GridMeasure(torus, theta, rho)
    assert mu.total_mass() == pytest.approx(1.0)
    bad = rho.copy()
    bad[2] *= 1.5
    with pytest.raises(ValueError):
        GridMeasure(torus, theta, bad)


def test_normalize_fibers_produces_valid_measure():
    mu = make_measure()
    np.testing.assert_allclose(mu.fiber_masses(), 1.0, atol=1e-12)
    assert mu.rho.min() > 0.0


def test_means_matches_manual_sum():
    mu = make_measure(seed=3)
    manual = mu.rho @ mu.theta.centers * mu.theta.dtheta
    np.testing.assert_allclose(mu.means(), manual)


def test_boundary_mass_counts_edge_cells():
    torus = TorusGrid(2)
    theta = ThetaGrid(-1.0, 1.0, 10)
    rho = np.full((2, 10), 0.5)
    mu = GridMeasure(torus, theta, rho)
    # uniform density: 4 of 10 cells in the two-cell bands at either end
    assert mu.boundary_mass(n_cells=2) == pytest.approx(0.4)


def test_grid_measure_csv_roundtrip(tmp_path):
    mu = make_measure(n_x=4, n_theta=32, seed=5)
    path = tmp_path / "state.csv"
    mu.to_csv(path)
    back = GridMeasure.from_csv(path)
    assert back.torus.n_x == mu.torus.n_x
    assert back.theta.n_theta == mu.theta.n_theta
    np.testing.assert_array_equal(back.rho, mu.rho)


def test_coarsen_measure_preserves_mass_and_means():
    mu = make_measure(n_x=8, n_theta=64, seed=7)
    nu = coarsen_measure(mu, 4, 32)
    assert nu.torus.n_x == 4
    assert nu.theta.n_theta == 32
    np.testing.assert_allclose(nu.fiber_masses(), 1.0, atol=1e-12)
    # coarsening only in space keeps per-site means exactly (block averages)
    nu_x = coarsen_measure(mu, 4, 64)
    fine = mu.means().reshape(4, 2).mean(axis=1)
    np.testing.assert_allclose(nu_x.means(), fine, atol=1e-12)
    # coarsening in spin moves means by at most one coarse cell width
    np.testing.assert_allclose(nu.means(), fine, atol=nu.theta.dtheta)


def test_coarsen_measure_requires_divisibility():
    mu = make_measure(n_x=8, n_theta=64)
    with pytest.raises(ValueError):
        coarsen_measure(mu, 3, 64)
    with pytest.raises(ValueError):
        coarsen_measure(mu, 4, 48)


def test_measure_curve_reversed():
    mu = make_measure(seed=1)
    nu = make_measure(seed=2)
    curve = MeasureCurve(np.array([0.0, 1.0]), (mu, nu))
    rev = curve.reversed()
    np.testing.assert_array_equal(rev.times, curve.times)
    assert rev[0] is nu and rev[1] is mu


def test_discrete_fibered_measure_holds_fibers():
    fibers = tuple(
        DiscreteFiber(np.array([0.0, float(i)]), np.array([0.5, 0.5]))
        for i in range(3)
    )
    mu = DiscreteFiberedMeasure(fibers)
    assert len(mu.fibers) == 3
