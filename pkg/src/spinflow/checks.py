"""Invariant check suite: fast, self-contained verifications of the
package's structural guarantees, runnable from the command line.

Each check returns a :class:`CheckResult` with a pass flag and a one-line
detail string; the suite is pure computation (no file output) so callers
can route results to text, JSON, or exit codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functionals import metric_slope
from .grids import ThetaGrid, TorusGrid
from .measures import DiscreteFiber, DiscreteFiberedMeasure, normalize_fibers
from .models import ModelParams
from .jko import JkoConfig, jko_step
from .pde import gibbs_measure, pde_step, stable_dt
from .particles import pair_vs_fibered_cost
from .transport import (
    fibered_wasserstein,
    flattened_wasserstein_lp,
    wasserstein_1d,
    wasserstein_1d_lp,
)

__all__ = [
    "CheckResult",
    "counterexample_pair",
    "check_counterexample",
    "check_lp_oracle",
    "check_metric_axioms",
    "check_equilibrium_pde",
    "check_equilibrium_jko",
    "check_equilibrium_slope",
    "check_empirical_coupling",
    "run_suite",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.detail}"


def _zero_kernel(p: ModelParams) -> ModelParams:
    """The same confining potential with the coupling switched off."""
    return ModelParams(
        psi_coeffs=p.psi_coeffs,
        j_kernel=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        growth_exponent=p.growth_exponent,
        coercivity_coeff=p.coercivity_coeff,
        quadratic_coeff=p.quadratic_coeff,
        offset_coeff=p.offset_coeff,
        theta_range=p.theta_range,
    )


def counterexample_pair():
    """Two four-site spin states a quarter-turn apart.

    Each site's spin flips between 0 and 1, so the fibered distance is
    exactly 1 (every fiber pays 1).  Flattened to the product space, each
    atom can instead hop to the neighboring site a quarter of the torus
    away at zero spin cost, so the flattened distance is at most 1/4.
    This separates the fibered metric from the flattened one.
    """
    def state(spins):
        return DiscreteFiberedMeasure(tuple(
            DiscreteFiber(np.array([float(s)]), np.array([1.0]))
            for s in spins
        ))

    return state([0, 1, 0, 1]), state([1, 0, 1, 0])


def check_counterexample() -> CheckResult:
    mu, nu = counterexample_pair()
    wl = fibered_wasserstein(mu, nu)
    flat = flattened_wasserstein_lp(mu, nu)
    passed = abs(wl - 1.0) < 1e-12 and flat <= 0.25 + 1e-9
    return CheckResult(
        "counterexample",
        passed,
        f"W^L = {wl:.12g} (expect 1), flattened W2 = {flat:.12g}"
        " (bound 0.25)",
    )


def check_lp_oracle(n_pairs: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        na, nb = rng.integers(1, 6, size=2)
        wa, wb = rng.uniform(0.2, 1.0, na), rng.uniform(0.2, 1.0, nb)
        a = DiscreteFiber(np.sort(rng.normal(size=na)), wa / wa.sum())
        b = DiscreteFiber(np.sort(rng.normal(size=nb)), wb / wb.sum())
        worst = max(worst, abs(wasserstein_1d(a, b) - wasserstein_1d_lp(a, b)))
    return CheckResult(
        "lp_oracle",
        worst < 1e-9,
        f"max |quantile - LP| = {worst:.3e} over {n_pairs} random pairs",
    )


def _random_measure(rng, torus, theta):
    centers = theta.centers
    m = rng.uniform(-1.5, 1.5, torus.n_x)
    v = rng.uniform(0.3, 1.5, torus.n_x)
    raw = np.exp(-0.5 * (centers[None, :] - m[:, None]) ** 2 / v[:, None])
    raw += rng.uniform(0.0, 0.05)
    return normalize_fibers(raw, torus, theta)


def check_metric_axioms(n_triples: int = 30, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    torus, theta = TorusGrid(8), ThetaGrid(-6.0, 6.0, 48)
    worst_tri = -np.inf
    worst_sym = 0.0
    worst_self = 0.0
    for _ in range(n_triples):
        a, b, c = (_random_measure(rng, torus, theta) for _ in range(3))
        dab, dba = fibered_wasserstein(a, b), fibered_wasserstein(b, a)
        dbc, dac = fibered_wasserstein(b, c), fibered_wasserstein(a, c)
        worst_sym = max(worst_sym, abs(dab - dba))
        worst_self = max(worst_self, fibered_wasserstein(a, a))
        worst_tri = max(worst_tri, dac - (dab + dbc))
    passed = worst_sym == 0.0 and worst_self == 0.0 and worst_tri <= 1e-12
    return CheckResult(
        "metric_axioms",
        passed,
        f"symmetry gap {worst_sym:.1e}, self-distance {worst_self:.1e},"
        f" triangle excess {worst_tri:.2e} over {n_triples} triples",
    )


def check_equilibrium_pde(p: ModelParams, n_theta: int = 256) -> CheckResult:
    p0 = _zero_kernel(p)
    torus = TorusGrid(8)
    theta = ThetaGrid(p.theta_range[0], p.theta_range[1], n_theta)
    gibbs = gibbs_measure(torus, theta, p0)
    stepped = pde_step(gibbs, p0, stable_dt(theta))
    err = float(np.max(np.abs(stepped.rho - gibbs.rho)))
    return CheckResult(
        "equilibrium_pde",
        err < 1e-8,
        f"max per-cell drift after one step = {err:.3e} (tol 1e-8)",
    )


def check_equilibrium_jko(p: ModelParams, n_theta: int = 256) -> CheckResult:
    p0 = _zero_kernel(p)
    torus = TorusGrid(8)
    theta = ThetaGrid(p.theta_range[0], p.theta_range[1], n_theta)
    gibbs = gibbs_measure(torus, theta, p0)
    out, info = jko_step(gibbs, p0, JkoConfig())
    dist = fibered_wasserstein(out, gibbs)
    return CheckResult(
        "equilibrium_jko",
        dist <= 1e-6,
        f"W^L(step(gibbs), gibbs) = {dist:.3e} (tol 1e-6,"
        f" stationarity residual {info.grad_norm:.3e})",
    )


def check_equilibrium_slope(p: ModelParams, n_theta: int = 256) -> CheckResult:
    p0 = _zero_kernel(p)
    torus = TorusGrid(8)
    values = {}
    for n, tol in ((n_theta, 0.05), (2 * n_theta, 0.01)):
        theta = ThetaGrid(p.theta_range[0], p.theta_range[1], n)
        gibbs = gibbs_measure(torus, theta, p0)
        values[n] = (metric_slope(gibbs, p0), tol)
    passed = all(v < tol for v, tol in values.values())
    detail = ", ".join(
        f"slope@{n} = {v:.4f} (tol {tol})" for n, (v, tol) in values.items()
    )
    return CheckResult("equilibrium_slope", passed, detail)


def check_empirical_coupling(n_states: int = 100, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_margin = np.inf
    for n in (1, 2, 10, 100, 1000):
        for _ in range(n_states):
            cost = pair_vs_fibered_cost(rng.normal(size=n))
            worst_margin = min(worst_margin, 1.0 / n - cost)
    return CheckResult(
        "empirical_coupling",
        worst_margin >= 0.0,
        f"min(1/N - cost) = {worst_margin:.3e} over"
        f" {n_states} states x 5 sizes",
    )


def run_suite(p: ModelParams, which=None) -> list:
    """Run the named checks (all by default) against a model."""
    table = {
        "counterexample": check_counterexample,
        "lp_oracle": check_lp_oracle,
        "metric_axioms": check_metric_axioms,
        "equilibrium_pde": lambda: check_equilibrium_pde(p),
        "equilibrium_jko": lambda: check_equilibrium_jko(p),
        "equilibrium_slope": lambda: check_equilibrium_slope(p),
        "empirical_coupling": check_empirical_coupling,
    }
    names = list(table) if which is None else list(which)
    results = []
    for name in names:
        if name not in table:
            raise ValueError(f"unknown check '{name}'; known: {sorted(table)}")
        results.append(table[name]())
    return results
