"""Tests for one-dimensional and fibered optimal transport."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.grids import ThetaGrid, TorusGrid
from spinflow.measures import (
    DiscreteFiber,
    DiscreteFiberedMeasure,
    FiberMeasure,
    GridMeasure,
    MeasureCurve,
    normalize_fibers,
)
from spinflow.transport import (
    deposit_segments,
    displacement_interpolation,
    fibered_wasserstein,
    flattened_wasserstein_lp,
    metric_derivative,
    optimal_fibered_map,
    wasserstein_1d,
    wasserstein_1d_lp,
)


def random_grid_measure(n_x=6, n_theta=48, seed=0, lo=-3.0, hi=3.0):
    rng = np.random.default_rng(seed)
    torus = TorusGrid(n_x)
    theta = ThetaGrid(lo, hi, n_theta)
    raw = rng.uniform(0.05, 1.0, size=(n_x, n_theta))
    return normalize_fibers(raw, torus, theta)


def random_atoms(rng, max_atoms=5):
    n = rng.integers(1, max_atoms + 1)
    pos = np.sort(rng.uniform(-2.0, 2.0, n))
    w = rng.uniform(0.1, 1.0, n)
    return DiscreteFiber(pos, w / w.sum())


def interp_quantile(fiber, u):
    """Independent inverse-CDF: np.interp against the cumulative masses."""
    if isinstance(fiber, DiscreteFiber):
        cum = np.cumsum(fiber.masses)
        idx = np.searchsorted(cum, u, side="left")
        return fiber.positions[np.minimum(idx, len(cum) - 1)]
    cum = np.concatenate([[0.0], np.cumsum(fiber.weights) * fiber.theta.dtheta])
    cum /= cum[-1]
    return np.interp(u, cum, fiber.theta.edges)


def oracle_w2(a, b, n=400_000):
    u = (np.arange(n) + 0.5) / n
    diff = interp_quantile(a, u) - interp_quantile(b, u)
    return float(np.sqrt(np.mean(diff**2)))


def test_two_atom_exact_value():
    a = DiscreteFiber(np.array([0.0]), np.array([1.0]))
    b = DiscreteFiber(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    # half the mass moves one unit each way: W^2 = 1
    assert wasserstein_1d(a, b) == pytest.approx(1.0, abs=1e-14)


def test_point_translation_is_distance():
    a = DiscreteFiber(np.array([0.3]), np.array([1.0]))
    b = DiscreteFiber(np.array([-0.9]), np.array([1.0]))
    assert wasserstein_1d(a, b) == pytest.approx(1.2, abs=1e-14)


def test_grid_fiber_against_interp_oracle():
    theta = ThetaGrid(-3.0, 3.0, 40)
    rng = np.random.default_rng(11)
    for _ in range(5):
        wa = rng.uniform(0.05, 1.0, 40)
        wb = rng.uniform(0.05, 1.0, 40)
        a = FiberMeasure(theta, wa / (wa.sum() * theta.dtheta))
        b = FiberMeasure(theta, wb / (wb.sum() * theta.dtheta))
        assert wasserstein_1d(a, b) == pytest.approx(oracle_w2(a, b), abs=2e-5)


def test_mixed_grid_and_atoms_against_oracle():
    theta = ThetaGrid(-3.0, 3.0, 32)
    rng = np.random.default_rng(12)
    w = rng.uniform(0.05, 1.0, 32)
    a = FiberMeasure(theta, w / (w.sum() * theta.dtheta))
    b = random_atoms(rng)
    assert wasserstein_1d(a, b) == pytest.approx(oracle_w2(a, b), abs=2e-4)


def test_discrete_pairs_against_lp():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a, b = random_atoms(rng), random_atoms(rng)
        assert wasserstein_1d(a, b) == pytest.approx(
            wasserstein_1d_lp(a, b), abs=1e-9
        )


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_quantile_matches_lp_property(data):
    atoms = st.lists(
        st.tuples(
            st.floats(-2.0, 2.0, allow_nan=False),
            st.floats(0.05, 1.0, allow_nan=False),
        ),
        min_size=1,
        max_size=4,
    )
    def build(spec):
        pos = np.array(sorted(p for p, _ in spec))
        w = np.array([m for _, m in sorted(spec)])
        return DiscreteFiber(pos, w / w.sum())
    a = build(data.draw(atoms))
    b = build(data.draw(atoms))
    assert wasserstein_1d(a, b) == pytest.approx(
        wasserstein_1d_lp(a, b), abs=1e-9
    )


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_triangle_inequality_property(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_atoms(rng) for _ in range(3))
    assert wasserstein_1d(a, c) <= (
        wasserstein_1d(a, b) + wasserstein_1d(b, c) + 1e-9
    )


def test_fibered_distance_symmetry_and_identity():
    mu = random_grid_measure(seed=1)
    nu = random_grid_measure(seed=2)
    assert fibered_wasserstein(mu, mu) == 0.0
    assert fibered_wasserstein(mu, nu) == pytest.approx(
        fibered_wasserstein(nu, mu), abs=0.0
    )
    assert fibered_wasserstein(mu, nu) > 0.0


def test_fibered_is_mean_of_fiber_costs():
    mu = random_grid_measure(seed=3)
    nu = random_grid_measure(seed=4)
    per_fiber = [
        wasserstein_1d(mu.fiber(i), nu.fiber(i)) ** 2
        for i in range(mu.torus.n_x)
    ]
    expected = np.sqrt(np.mean(per_fiber))
    assert fibered_wasserstein(mu, nu) == pytest.approx(expected, rel=1e-12)


def test_flattened_never_exceeds_fibered():
    # keeping mass inside its own fiber is one admissible flattened plan
    for seed in range(4):
        mu = random_grid_measure(n_x=4, n_theta=12, seed=seed)
        nu = random_grid_measure(n_x=4, n_theta=12, seed=seed + 10)
        flat = flattened_wasserstein_lp(mu, nu)
        assert flat <= fibered_wasserstein(mu, nu) + 1e-9


def test_counterexample_flattened_much_smaller():
    spins_a = (0.0, 1.0, 0.0, 1.0)
    spins_b = (1.0, 0.0, 1.0, 0.0)
    one = np.array([1.0])
    mu = DiscreteFiberedMeasure(
        tuple(DiscreteFiber(np.array([s]), one) for s in spins_a)
    )
    nu = DiscreteFiberedMeasure(
        tuple(DiscreteFiber(np.array([s]), one) for s in spins_b)
    )
    assert fibered_wasserstein(mu, nu) == pytest.approx(1.0, abs=1e-12)
    assert flattened_wasserstein_lp(mu, nu) == pytest.approx(0.25, abs=1e-9)


def test_theta_shift_distance():
    torus = TorusGrid(4)
    theta = ThetaGrid(-4.0, 4.0, 160)
    centers = theta.centers
    raw = np.tile(np.exp(-2.0 * centers**2), (4, 1))
    mu = normalize_fibers(raw, torus, theta)
    shift_cells = 10  # 10 cells of width 0.05
    nu = normalize_fibers(np.roll(raw, shift_cells, axis=1), torus, theta)
    delta = shift_cells * theta.dtheta
    assert fibered_wasserstein(mu, nu) == pytest.approx(delta, rel=1e-10)


def test_displacement_interpolation_endpoints_and_speed():
    mu = random_grid_measure(n_x=4, n_theta=96, seed=8)
    nu = random_grid_measure(n_x=4, n_theta=96, seed=9)
    d = fibered_wasserstein(mu, nu)
    assert fibered_wasserstein(displacement_interpolation(mu, nu, 0.0), mu) < 1e-12
    assert fibered_wasserstein(displacement_interpolation(mu, nu, 1.0), nu) < 1e-12
    for t in (0.25, 0.5, 0.75):
        mid = displacement_interpolation(mu, nu, t)
        assert fibered_wasserstein(mu, mid) == pytest.approx(t * d, rel=0.02)
        assert fibered_wasserstein(mid, nu) == pytest.approx(
            (1.0 - t) * d, rel=0.02
        )


def test_optimal_map_reproduces_cost():
    mu = random_grid_measure(n_x=4, n_theta=256, seed=10)
    nu = random_grid_measure(n_x=4, n_theta=256, seed=11)
    tmap = optimal_fibered_map(mu, nu)
    cell = mu.theta.dtheta * mu.torus.dx
    cost = np.sum((tmap.values - mu.theta.centers[None, :]) ** 2 * mu.rho) * cell
    assert np.sqrt(cost) == pytest.approx(
        fibered_wasserstein(mu, nu), rel=2e-3
    )


def test_optimal_map_is_monotone():
    mu = random_grid_measure(n_x=3, n_theta=64, seed=12)
    nu = random_grid_measure(n_x=3, n_theta=64, seed=13)
    tmap = optimal_fibered_map(mu, nu)
    assert np.all(np.diff(tmap.values, axis=1) >= -1e-12)


def test_deposit_segments_conserves_mass():
    theta = ThetaGrid(-2.0, 2.0, 32)
    mass = np.array([0.25, 0.5, 0.25])
    lo = np.array([-1.5, -0.2, 0.4])
    hi = np.array([-0.7, 0.3, 1.9])
    dens = deposit_segments(theta, mass, lo, hi)
    assert dens.sum() * theta.dtheta == pytest.approx(1.0, abs=1e-12)
    # mass left of 0.4 comes from the first two segments only
    left = dens[theta.centers < 0.35].sum() * theta.dtheta
    assert left == pytest.approx(0.25 + 0.5 * (0.2 / 0.5) + 0.5 * (0.3 / 0.5), abs=0.05)


def test_metric_derivative_constant_speed_curve():
    mu = random_grid_measure(n_x=4, n_theta=96, seed=14)
    nu = random_grid_measure(n_x=4, n_theta=96, seed=15)
    times = np.linspace(0.0, 1.0, 5)
    states = tuple(displacement_interpolation(mu, nu, t) for t in times)
    curve = MeasureCurve(times, states)
    d = fibered_wasserstein(mu, nu)
    ends = metric_derivative(curve, 0)
    assert ends.one_sided
    assert ends.value == pytest.approx(d, rel=0.03)
    mid = metric_derivative(curve, 2)
    assert not mid.one_sided
    assert mid.value == pytest.approx(d, rel=0.03)


def test_tiny_tail_masses_stay_finite():
    # cells carrying denormal-scale mass must not poison the quantiles
    torus = TorusGrid(2)
    theta = ThetaGrid(-4.0, 4.0, 64)
    raw = np.exp(-0.5 * theta.centers**2)
    raw = np.tile(raw, (2, 1))
    raw[:, :8] = 1e-300
    raw[:, -8:] = 1e-300
    mu = normalize_fibers(raw, torus, theta)
    nu = normalize_fibers(np.roll(raw, 3, axis=1), torus, theta)
    d = fibered_wasserstein(mu, nu)
    assert np.isfinite(d)
    assert d == pytest.approx(3 * theta.dtheta, rel=1e-6)
