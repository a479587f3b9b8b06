"""Numerical laboratory for local mean-field spin systems.

Tools for a chain of continuous spins on the discrete torus whose sites
interact through a slowly varying coupling kernel: a fibered transport
metric on site-indexed families of spin distributions, the associated
free-energy functional and its gradient flow (finite-volume solver and
minimizing-movement scheme), interacting-particle dynamics, and analysis
utilities for energy dissipation, large-deviation rates, and the
many-site limit.
"""

from .analysis import (
    DissipationReport,
    HydroLadderTable,
    RateReport,
    dissipation_report,
    hydrodynamic_ladder,
    product_dissipation_report,
    rate_report,
)
from .checks import CheckResult, counterexample_pair, run_suite
from .functionals import (
    entropy,
    free_energy,
    free_energy_lower_bound,
    hermite_fourier_family,
    interaction_energy,
    magnetization,
    metric_slope,
    potential_energy,
    product_free_energy,
    product_slope_squared,
    relative_entropy,
    slope_field,
    spin_hamiltonian,
    spin_hamiltonian_gradient,
    variational_slope,
)
from .grids import ThetaGrid, TorusGrid, torus_distance
from .jko import JkoConfig, JkoResult, check_tau, jko_step, solve_jko
from .measures import (
    DiscreteFiber,
    DiscreteFiberedMeasure,
    FiberMeasure,
    GridMeasure,
    MeasureCurve,
    coarsen_measure,
    normalize_fibers,
)
from .models import ModelParams, default_model
from .particles import (
    ParticleTrajectory,
    coarsen_to_sites,
    equilibrium_kappa,
    fibered_empirical_measure,
    pair_empirical_measure,
    pair_vs_fibered_cost,
    sample_from_fibers,
    sample_initial,
    simulate,
    sites_to_measure,
)
from .pde import (
    Observables,
    PdeResult,
    curve_observables,
    gibbs_measure,
    pde_step,
    solve_pde,
    stable_dt,
)
from .transport import (
    displacement_interpolation,
    fibered_wasserstein,
    flattened_wasserstein_lp,
    metric_derivative,
    optimal_fibered_map,
    wasserstein_1d,
    wasserstein_1d_lp,
)

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "DiscreteFiber",
    "DiscreteFiberedMeasure",
    "DissipationReport",
    "FiberMeasure",
    "GridMeasure",
    "HydroLadderTable",
    "JkoConfig",
    "JkoResult",
    "MeasureCurve",
    "ModelParams",
    "Observables",
    "ParticleTrajectory",
    "PdeResult",
    "RateReport",
    "ThetaGrid",
    "TorusGrid",
    "check_tau",
    "coarsen_measure",
    "coarsen_to_sites",
    "counterexample_pair",
    "curve_observables",
    "default_model",
    "displacement_interpolation",
    "dissipation_report",
    "entropy",
    "equilibrium_kappa",
    "fibered_empirical_measure",
    "fibered_wasserstein",
    "flattened_wasserstein_lp",
    "free_energy",
    "free_energy_lower_bound",
    "gibbs_measure",
    "hermite_fourier_family",
    "hydrodynamic_ladder",
    "interaction_energy",
    "jko_step",
    "magnetization",
    "metric_derivative",
    "metric_slope",
    "normalize_fibers",
    "optimal_fibered_map",
    "pair_empirical_measure",
    "pair_vs_fibered_cost",
    "pde_step",
    "potential_energy",
    "product_dissipation_report",
    "product_free_energy",
    "product_slope_squared",
    "rate_report",
    "relative_entropy",
    "run_suite",
    "sample_from_fibers",
    "sample_initial",
    "simulate",
    "sites_to_measure",
    "slope_field",
    "solve_jko",
    "solve_pde",
    "spin_hamiltonian",
    "spin_hamiltonian_gradient",
    "stable_dt",
    "torus_distance",
    "variational_slope",
    "wasserstein_1d",
    "wasserstein_1d_lp",
]
