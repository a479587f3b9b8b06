"""Diagnostics built on top of the dynamics: energy identity, rate
function, and the finite-system-to-continuum comparison ladder.

The central object is the energy-identity residual of a measure curve,

    residual = F(end) - F(start) + (1/2) * int (slope^2 + speed^2) dt,

which vanishes exactly on gradient-flow trajectories and is positive
otherwise; its discrete value (trapezoid in time, central metric
derivatives) shrinks under grid refinement and serves as the package's
self-consistent error yardstick.  The same residual assembled from
product-form site marginals gives the finite-system version, and adding
the initial relative entropy gives the large-deviation rate of a curve.

The hydrodynamic ladder coarsens a reference solution to ``N`` sites,
evolves both an ``N``-site product surrogate (per-site Fokker-Planck
coupled through instantaneous site means — the same finite-volume solver
on the coarse site grid) and seeded particle bundles, and tabulates per
time the free-energy gap and the transport distance from the bundles'
empirical measures (read on a fixed coarse column grid) to the reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .functionals import (
    free_energy,
    metric_slope,
    product_free_energy,
    product_slope_squared,
    relative_entropy,
)
from .measures import (
    DiscreteFiber,
    DiscreteFiberedMeasure,
    GridMeasure,
    MeasureCurve,
    coarsen_measure,
)
from .models import ModelParams
from .particles import (
    coarsen_to_sites,
    sample_from_fibers,
    simulate,
    sites_to_measure,
)
from .pde import solve_pde
from .transport import fibered_wasserstein, metric_derivative, wasserstein_1d

__all__ = [
    "DissipationReport",
    "RateReport",
    "HydroLadderTable",
    "dissipation_report",
    "product_dissipation_report",
    "rate_report",
    "hydrodynamic_ladder",
]

DISSIPATION_COLUMNS = "t,free_energy,slope_squared,speed_squared,one_sided"
LADDER_COLUMNS = "N,t,gap,w2,seeds"


@dataclass(frozen=True)
class DissipationReport:
    """Energy-identity bookkeeping for a measure curve.

    ``residual`` is the defect of the descent identity; it is approximately
    zero precisely on gradient-flow curves and nonnegative (up to quadrature
    error) on every curve.
    """

    times: np.ndarray
    free_energy: np.ndarray
    slope_squared: np.ndarray
    speed_squared: np.ndarray
    one_sided: np.ndarray
    energy_initial: float
    energy_final: float
    slope_integral: float
    speed_integral: float
    residual: float

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(DISSIPATION_COLUMNS + "\n")
            for k in range(self.times.size):
                fh.write(
                    f"{self.times[k]:.17g},{self.free_energy[k]:.17g},"
                    f"{self.slope_squared[k]:.17g},"
                    f"{self.speed_squared[k]:.17g},"
                    f"{int(self.one_sided[k])}\n"
                )

    def to_json(self) -> str:
        return json.dumps({
            "energy_initial": self.energy_initial,
            "energy_final": self.energy_final,
            "energy_drop": self.energy_initial - self.energy_final,
            "slope_integral": self.slope_integral,
            "speed_integral": self.speed_integral,
            "residual": self.residual,
            "times": self.times.tolist(),
            "free_energy": self.free_energy.tolist(),
            "slope_squared": self.slope_squared.tolist(),
            "speed_squared": self.speed_squared.tolist(),
            "one_sided": [bool(v) for v in self.one_sided],
        }, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"{'energy initial':<18}{self.energy_initial: .12e}",
            f"{'energy final':<18}{self.energy_final: .12e}",
            f"{'slope integral':<18}{self.slope_integral: .12e}",
            f"{'speed integral':<18}{self.speed_integral: .12e}",
            f"{'residual':<18}{self.residual: .12e}",
            "",
            f"{'t':>12} {'free_energy':>18} {'slope^2':>14}"
            f" {'speed^2':>14} {'one_sided':>9}",
        ]
        for k in range(self.times.size):
            lines.append(
                f"{self.times[k]:>12.6g} {self.free_energy[k]:>18.10e}"
                f" {self.slope_squared[k]:>14.6e}"
                f" {self.speed_squared[k]:>14.6e}"
                f" {int(self.one_sided[k]):>9}"
            )
        return "\n".join(lines)


def _assemble_report(times, energies, slope2, speed2, one_sided):
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    slope2 = np.asarray(slope2, dtype=float)
    speed2 = np.asarray(speed2, dtype=float)
    one_sided = np.asarray(one_sided, dtype=bool)
    slope_int = float(np.trapezoid(slope2, times))
    speed_int = float(np.trapezoid(speed2, times))
    residual = float(
        energies[-1] - energies[0] + 0.5 * (slope_int + speed_int)
    )
    return DissipationReport(
        times=times, free_energy=energies, slope_squared=slope2,
        speed_squared=speed2, one_sided=one_sided,
        energy_initial=float(energies[0]), energy_final=float(energies[-1]),
        slope_integral=slope_int, speed_integral=speed_int,
        residual=residual,
    )


def dissipation_report(curve: MeasureCurve, p: ModelParams) -> DissipationReport:
    """Evaluate the energy identity along a curve of grid measures.

    Slopes are descent slopes of the free energy at each sampled state;
    speeds are central-difference metric derivatives (one-sided at the
    endpoints, flagged in the table).
    """
    if len(curve) < 2:
        raise ValueError("need at least two curve samples")
    energies = [free_energy(state, p) for state in curve.states]
    slope2 = [metric_slope(state, p) ** 2 for state in curve.states]
    speed2 = []
    one_sided = []
    for k in range(len(curve)):
        d = metric_derivative(curve, k)
        speed2.append(d.value ** 2)
        one_sided.append(d.one_sided)
    return _assemble_report(curve.times, energies, slope2, speed2, one_sided)


def product_dissipation_report(times, product_states, p: ModelParams
                               ) -> DissipationReport:
    """Energy identity for a curve of product-form (per-site) states.

    ``product_states[m]`` is the list of site marginals at ``times[m]``.
    All quantities carry the per-site (1/N) normalization, so along
    coarsenings of a continuum curve they approach the continuum report.
    The metric derivative aggregates per-site transport distances, which
    is exact for product-to-product displacement.
    """
    times = np.asarray(times, dtype=float)
    if times.size != len(product_states):
        raise ValueError("times and states disagree in length")
    if times.size < 2:
        raise ValueError("need at least two curve samples")
    n = len(product_states[0])
    for fibers in product_states:
        if len(fibers) != n:
            raise ValueError("all states must have the same number of sites")

    energies = [product_free_energy(f, p) for f in product_states]
    slope2 = [product_slope_squared(f, p) for f in product_states]

    def site_speed(a_idx: int, b_idx: int) -> float:
        dt = times[b_idx] - times[a_idx]
        total = 0.0
        for k in range(n):
            total += wasserstein_1d(
                product_states[a_idx][k], product_states[b_idx][k]
            ) ** 2
        return float(np.sqrt(total / n) / dt)

    speed2 = []
    one_sided = []
    for m in range(times.size):
        if m == 0:
            v = site_speed(0, 1)
            flag = True
        elif m == times.size - 1:
            v = site_speed(m - 1, m)
            flag = True
        else:
            v = site_speed(m - 1, m + 1)
            flag = False
        speed2.append(v ** 2)
        one_sided.append(flag)
    return _assemble_report(times, energies, slope2, speed2, one_sided)


@dataclass(frozen=True)
class RateReport:
    """Large-deviation rate of a measure curve relative to reference data.

    ``rate = residual / 2 + initial_divergence`` where ``residual`` is the
    curve's energy-identity defect and ``initial_divergence`` the relative
    entropy of the curve's start with respect to the reference initial
    state.  The rate vanishes exactly on the gradient flow started at the
    reference.
    """

    dissipation: DissipationReport
    initial_divergence: float
    rate: float

    def to_json(self) -> str:
        return json.dumps({
            "residual": self.dissipation.residual,
            "initial_divergence": self.initial_divergence,
            "rate": self.rate,
        }, indent=2, sort_keys=True)

    def to_text(self) -> str:
        return "\n".join([
            f"{'residual':<20}{self.dissipation.residual: .12e}",
            f"{'initial divergence':<20}{self.initial_divergence: .12e}",
            f"{'rate':<20}{self.rate: .12e}",
        ])


def rate_report(curve: MeasureCurve, mu0_ref: GridMeasure,
                p: ModelParams) -> RateReport:
    """Rate-function value of a curve with respect to reference initial data."""
    rep = dissipation_report(curve, p)
    div = relative_entropy(curve[0], mu0_ref)
    return RateReport(
        dissipation=rep,
        initial_divergence=float(div),
        rate=float(0.5 * rep.residual + div),
    )


@dataclass(frozen=True)
class HydroLadderTable:
    """Per-(site count, time) comparison of finite systems to the continuum."""

    n_sites: np.ndarray
    times: np.ndarray
    gap: np.ndarray
    w2: np.ndarray
    n_seeds: int

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(LADDER_COLUMNS + "\n")
            for k in range(self.n_sites.size):
                fh.write(
                    f"{int(self.n_sites[k])},{self.times[k]:.17g},"
                    f"{self.gap[k]:.17g},{self.w2[k]:.17g},{self.n_seeds}\n"
                )

    def rows_at(self, n: int):
        """(times, gap, w2) restricted to one site count."""
        sel = self.n_sites == n
        return self.times[sel], self.gap[sel], self.w2[sel]

    def w2_at_time(self, t: float):
        """(site counts, w2) at the sampled time nearest ``t``."""
        times = np.unique(self.times)
        t_near = times[np.argmin(np.abs(times - t))]
        sel = self.times == t_near
        return self.n_sites[sel], self.w2[sel]


def _nearest_index(times: np.ndarray, t: float) -> int:
    return int(np.argmin(np.abs(np.asarray(times) - t)))


def _column_empirical(state: np.ndarray, n_cols: int) -> DiscreteFiberedMeasure:
    """Bin one particle state into ``n_cols`` equal site columns, exactly."""
    n = state.size
    per = n // n_cols
    fibers = []
    for c in range(n_cols):
        atoms = np.sort(state[c * per:(c + 1) * per])
        fibers.append(DiscreteFiber(atoms, np.full(per, 1.0 / per)))
    return DiscreteFiberedMeasure(tuple(fibers))


def hydrodynamic_ladder(curve: MeasureCurve, p: ModelParams, site_ladder,
                        seeds, particle_dt: float = 5e-3,
                        n_x_hist: int | None = None) -> HydroLadderTable:
    """Compare N-site systems against a reference continuum curve.

    For each ``N`` in ``site_ladder`` (each dividing the reference x
    resolution): coarsen the initial state to ``N`` site fibers, evolve
    the product surrogate by the finite-volume solver on the ``N``-site
    grid, and evolve one particle bundle per seed from exact per-fiber
    samples.  Per sampled time the table records

    - ``gap``: |per-site product free energy of the surrogate - continuum
      free energy of the reference|,
    - ``w2``: median over seeds of the fibered transport distance between
      the bundle's empirical measure and the reference, both read on a
      fixed grid of ``n_x_hist`` site columns (each column holding
      ``N / n_x_hist`` particles, so the estimate sharpens as ``N``
      grows).  ``n_x_hist`` defaults to ``min(16, min(site_ladder))`` and
      must divide every ``N``.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    site_ladder = list(site_ladder)
    if n_x_hist is None:
        n_x_hist = min(16, min(site_ladder))
    times = np.asarray(curve.times, dtype=float)
    t_final = float(times[-1])
    if t_final <= 0.0:
        raise ValueError("curve must span positive time")
    for n in site_ladder:
        if n % n_x_hist != 0:
            raise ValueError(
                f"histogram column count {n_x_hist} must divide every site"
                f" count in the ladder (got {n})"
            )
    ref_theta = curve[0].theta
    fe_ref = np.array([free_energy(state, p) for state in curve.states])
    ref_coarse = [
        coarsen_measure(state, n_x_hist, ref_theta.n_theta)
        for state in curve.states
    ]

    rows_n, rows_t, rows_gap, rows_w2 = [], [], [], []
    for n in site_ladder:
        fibers0 = coarsen_to_sites(curve[0], n)
        surrogate0 = sites_to_measure(fibers0, n)
        sur = solve_pde(surrogate0, p, t_final, sample_times=times)

        bundles = []
        for seed in seeds:
            theta0 = sample_from_fibers(fibers0, seed)
            traj = simulate(theta0, p, particle_dt, t_final, seed,
                            sample_times=times)
            bundles.append(traj)

        for m, t in enumerate(times):
            s_idx = _nearest_index(sur.curve.times, t)
            state = sur.curve[s_idx]
            fibers_t = [state.fiber(k) for k in range(n)]
            gap = abs(product_free_energy(fibers_t, p) - fe_ref[m])

            dists = []
            for b in bundles:
                emp = _column_empirical(
                    b.states[_nearest_index(b.times, t)], n_x_hist
                )
                dists.append(fibered_wasserstein(emp, ref_coarse[m]))
            w2 = float(np.median(dists))

            rows_n.append(n)
            rows_t.append(t)
            rows_gap.append(gap)
            rows_w2.append(w2)

    return HydroLadderTable(
        n_sites=np.asarray(rows_n), times=np.asarray(rows_t),
        gap=np.asarray(rows_gap), w2=np.asarray(rows_w2),
        n_seeds=len(seeds),
    )
