"""Interacting spin-particle system: simulation and empirical measures.

Particles live on the discrete torus: particle ``k`` of ``N`` sits at site
``k/N`` and carries a real spin ``theta^k``.  The spins follow the coupled
Langevin system

    d theta^i = [ -psi'(theta^i) + (1/N) sum_j J((i-j)/N) theta^j ] dt
                + sqrt(2) dB^i,

integrated by Euler-Maruyama with a counter-based (Philox) Gaussian stream,
so trajectories are bit-reproducible for a given ``(seed, dt, N)`` no matter
how the work is scheduled.  The empirical state can be read either as a pair
measure (``N`` equal atoms on torus x spin) or as a fibered measure (one
spin atom per width-``1/N`` site interval); the explicit coupling between
the two transports each atom across its own site interval, giving a cost
with a closed form that is always ``<= 1/N``.

Also provided: inverse-CDF samplers for product initial data, the
site-averaging coarsening that turns a grid measure into ``N`` per-site
fibers (each site fiber is the mean of the grid fibers over its interval),
and histogram estimation back onto a grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grids import ThetaGrid, TorusGrid
from .measures import (
    DiscreteFiber,
    DiscreteFiberedMeasure,
    FiberMeasure,
    GridMeasure,
)
from .models import ModelParams
from .transport import _quantile, _segments

__all__ = [
    "ParticleBlowup",
    "ParticleTrajectory",
    "EmpiricalPairMeasure",
    "simulate",
    "sample_initial",
    "sample_from_fibers",
    "equilibrium_kappa",
    "pair_empirical_measure",
    "fibered_empirical_measure",
    "pair_vs_fibered_cost",
    "coarsen_to_sites",
    "sites_to_measure",
    "empirical_to_grid",
    "SAMPLE_GRID_CELLS",
]

TRAJECTORY_COLUMNS = "t,k,theta"

# midpoint-rule resolution used by ``sample_initial`` for density
# normalization checks and inverse-CDF tables
SAMPLE_GRID_CELLS = 4096


class ParticleBlowup(RuntimeError):
    """A spin left the stability region during integration."""

    def __init__(self, step_index: int, time: float, max_abs: float):
        self.step_index = step_index
        self.time = time
        self.max_abs = max_abs
        super().__init__(
            f"particle blow-up at step {step_index} (t = {time:.6g}):"
            f" max |theta| = {max_abs:.3e}"
        )


def _stream(seed: int, step: int) -> np.random.Generator:
    """Counter-based Gaussian stream for one step (step 0 = initial data)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + step))


@dataclass(frozen=True)
class ParticleTrajectory:
    """Sampled Euler-Maruyama path of the N-spin system.

    ``states[m, k]`` is the spin of particle ``k`` at ``times[m]``.
    """

    times: np.ndarray
    states: np.ndarray
    seed: int
    dt: float

    def __post_init__(self):
        if self.states.shape[0] != self.times.size:
            raise ValueError("times and states disagree in length")

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    def to_csv(self, path) -> None:
        n = self.n_particles
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(TRAJECTORY_COLUMNS + "\n")
            for m, t in enumerate(self.times):
                for k in range(n):
                    fh.write(f"{t:.17g},{k},{self.states[m, k]:.17g}\n")


def simulate(theta0, p: ModelParams, dt: float, t_final: float, seed: int,
             noise_scale: float = 1.0, sample_times=None) -> ParticleTrajectory:
    """Integrate the N-spin Langevin system by Euler-Maruyama.

    The Gaussian increments for step ``n`` come from a Philox generator
    keyed by ``(seed, n)``, drawn as one block of ``N`` values, so results
    do not depend on execution order.  ``noise_scale`` multiplies the noise
    (0 gives the deterministic drift ODE, for testing).  By default every
    step is recorded; ``sample_times`` selects nearest step times instead.

    Raises :class:`ParticleBlowup` when any ``|theta|`` exceeds ten times
    the spin-domain half-width.
    """
    theta = np.array(theta0, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise ValueError("theta0 must be a nonempty 1-d array")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta0 must be finite")
    if dt <= 0.0 or t_final <= 0.0:
        raise ValueError("dt and t_final must be positive")
    n = theta.size
    n_steps = max(1, int(np.ceil(t_final / dt - 1e-12)))
    dt_adj = t_final / n_steps
    if sample_times is None:
        sample_set = set(range(n_steps + 1))
    else:
        req = np.asarray(sample_times, dtype=float)
        sample_set = set(int(k) for k in np.clip(
            np.round(req / dt_adj), 0, n_steps))
        sample_set |= {0, n_steps}

    kernel = p.site_kernel_matrix(n)
    limit = 10.0 * max(abs(p.theta_range[0]), abs(p.theta_range[1]))
    root = noise_scale * np.sqrt(2.0 * dt_adj)

    times = []
    states = []
    if 0 in sample_set:
        times.append(0.0)
        states.append(theta.copy())
    for step in range(1, n_steps + 1):
        drift = -p.dpsi(theta) + (kernel @ theta) / n
        noise = _stream(seed, step).standard_normal(n) if noise_scale != 0.0 \
            else 0.0
        theta = theta + dt_adj * drift + root * noise
        worst = float(np.max(np.abs(theta)))
        if not np.isfinite(worst) or worst > limit:
            raise ParticleBlowup(step, step * dt_adj, worst)
        if step in sample_set:
            times.append(step * dt_adj)
            states.append(theta.copy())
    return ParticleTrajectory(
        times=np.asarray(times), states=np.asarray(states),
        seed=int(seed), dt=dt_adj,
    )


def _sampling_table(p: ModelParams, kappa, x: float):
    edges = np.linspace(p.theta_range[0], p.theta_range[1],
                        SAMPLE_GRID_CELLS + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dtheta = edges[1] - edges[0]
    dens = np.asarray(kappa(x, centers), dtype=float) * np.exp(-p.psi(centers))
    mass = float(dens.sum() * dtheta)
    return edges, dens, dtheta, mass


def equilibrium_kappa(p: ModelParams):
    """The constant density factor making ``kappa * exp(-psi)`` a probability.

    Normalized by the same midpoint rule ``sample_initial`` checks against,
    so the pair passes its 1e-6 normalization test exactly.
    """
    edges = np.linspace(p.theta_range[0], p.theta_range[1],
                        SAMPLE_GRID_CELLS + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    z = float(np.exp(-p.psi(centers)).sum() * (edges[1] - edges[0]))

    def kappa(x, theta):
        return np.full_like(np.asarray(theta, dtype=float), 1.0 / z)

    return kappa


def sample_initial(p: ModelParams, kappa, n_particles: int,
                   seed: int) -> np.ndarray:
    """Draw one spin per site from the product density ``kappa * exp(-psi)``.

    ``kappa(x, theta)`` is evaluated on a fixed midpoint grid of
    ``SAMPLE_GRID_CELLS`` cells over the spin domain; each site's density
    must integrate to 1 within 1e-6 under that rule.  Sampling is per-site
    inverse CDF driven by the step-0 substream of ``seed``.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    u = _stream(seed, 0).uniform(size=n_particles)
    out = np.empty(n_particles)
    for k in range(n_particles):
        edges, dens, dtheta, mass = _sampling_table(p, kappa, k / n_particles)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(
                f"site {k}: kappa * exp(-psi) integrates to {mass:.8f},"
                " expected 1 within 1e-6"
            )
        cum = np.concatenate([[0.0], np.cumsum(dens * dtheta)]) / mass
        j = int(np.searchsorted(cum, u[k], side="right") - 1)
        j = min(max(j, 0), dens.size - 1)
        gap = cum[j + 1] - cum[j]
        frac = (u[k] - cum[j]) / gap if gap > 0.0 else 0.5
        out[k] = edges[j] + frac * dtheta
    return out


def sample_from_fibers(fibers, seed: int) -> np.ndarray:
    """One spin per site, drawn exactly from each fiber by inverse CDF."""
    u = _stream(seed, 0).uniform(size=len(fibers))
    return np.array([
        float(_quantile(_segments(f), np.array([u[k]]))[0])
        for k, f in enumerate(fibers)
    ])


@dataclass(frozen=True)
class EmpiricalPairMeasure:
    """N equal atoms at (k/N, theta^k) on the torus-spin product space."""

    thetas: np.ndarray

    @property
    def n_atoms(self) -> int:
        return self.thetas.size

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_atoms) / self.n_atoms

    @property
    def masses(self) -> np.ndarray:
        return np.full(self.n_atoms, 1.0 / self.n_atoms)


def pair_empirical_measure(thetas) -> EmpiricalPairMeasure:
    """The empirical pair measure: one atom of mass 1/N per particle."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or thetas.size == 0:
        raise ValueError("state must be a nonempty 1-d array")
    return EmpiricalPairMeasure(thetas=thetas.copy())


def fibered_empirical_measure(thetas) -> DiscreteFiberedMeasure:
    """The fibered reading of a state: site interval k carries delta at theta^k."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or thetas.size == 0:
        raise ValueError("state must be a nonempty 1-d array")
    return DiscreteFiberedMeasure(tuple(
        DiscreteFiber(np.array([t]), np.array([1.0])) for t in thetas
    ))


def pair_vs_fibered_cost(thetas) -> float:
    """Cost of the explicit coupling between the two empirical readings.

    The coupling spreads each atom across its own site interval at fixed
    spin, so the cost is a pure site-coordinate effect with closed form
    ``1/(sqrt(3) N)`` for ``N >= 2`` (and ``sqrt(1/12)`` for ``N = 1``,
    where the interval wraps around the torus).  Always ``<= 1/N``.
    """
    thetas = np.asarray(thetas, dtype=float)
    n = thetas.size
    if n < 1:
        raise ValueError("state must be nonempty")
    if n == 1:
        return float(np.sqrt(1.0 / 12.0))
    return float(1.0 / (np.sqrt(3.0) * n))


def coarsen_to_sites(mu: GridMeasure, n_sites: int) -> list:
    """Average a grid measure's fibers over each width-1/N site interval.

    Requires the site count to divide the grid's x resolution, so intervals
    are exact unions of grid columns.  Returns one fiber per site; the
    product of these fibers is the natural N-site approximation of ``mu``.
    """
    n_x = mu.torus.n_x
    if n_sites < 1 or n_x % n_sites != 0:
        raise ValueError(
            f"site count {n_sites} must divide the grid resolution {n_x}"
        )
    block = n_x // n_sites
    rho = mu.rho.reshape(n_sites, block, mu.theta.n_theta).mean(axis=1)
    return [FiberMeasure(mu.theta, rho[k], tol=1e-8) for k in range(n_sites)]


def sites_to_measure(fibers, n_x: int | None = None) -> GridMeasure:
    """Expand per-site fibers to a grid measure, constant across each site."""
    n_sites = len(fibers)
    if n_x is None:
        n_x = n_sites
    if n_x % n_sites != 0:
        raise ValueError(
            f"target resolution {n_x} must be a multiple of the site count"
            f" {n_sites}"
        )
    theta = fibers[0].theta
    rho = np.repeat(
        np.stack([f.weights for f in fibers]), n_x // n_sites, axis=0
    )
    return GridMeasure(TorusGrid(n_x), theta, rho, tol=1e-8)


def empirical_to_grid(data, theta: ThetaGrid) -> GridMeasure:
    """Histogram particle states onto a grid measure (one column per site).

    ``data`` is a fibered empirical measure, a single state, or an array of
    states ``(n_samples, N)`` pooled per site.  Spins outside the grid are
    dropped with a warning; a site left with no samples is an error (draw
    more samples or widen the grid).
    """
    if isinstance(data, DiscreteFiberedMeasure):
        states = np.array([[f.positions[0] for f in data.fibers]])
    else:
        states = np.asarray(data, dtype=float)
        if states.ndim == 1:
            states = states[None, :]
        if states.ndim != 2 or states.size == 0:
            raise ValueError("data must be (n_samples, N) or a single state")
    n = states.shape[1]
    lo, hi = theta.edges[0], theta.edges[-1]
    inside = (states >= lo) & (states < hi)
    dropped = int(states.size - inside.sum())
    if dropped:
        warnings.warn(
            f"dropped {dropped} of {states.size} samples outside the spin"
            " grid", stacklevel=2,
        )
    idx = np.floor((states - lo) / theta.dtheta).astype(int)
    counts = np.zeros((n, theta.n_theta))
    sites = np.broadcast_to(np.arange(n), states.shape)
    np.add.at(counts, (sites[inside], idx[inside]), 1.0)
    per_site = counts.sum(axis=1)
    if np.any(per_site == 0.0):
        empty = int(np.argmax(per_site == 0.0))
        raise ValueError(
            f"site {empty} has no samples inside the spin grid; draw more"
            " samples or widen the grid"
        )
    rho = counts / (per_site[:, None] * theta.dtheta)
    return GridMeasure(TorusGrid(n), theta, rho, tol=1e-8)
