"""Free energy, entropy, slopes, and their finite-system counterparts.

The free energy of a fibered measure with densities ``rho(x, theta)`` is

    entropy + potential + interaction
      = sum_ij rho log rho dtheta dx
        + sum_ij psi(theta_j) rho_ij dtheta dx
        - (dx^2 / 2) * means^T K means,

where ``means`` is the vector of fiber means and ``K`` the site kernel
matrix.  Its descent slope at a smooth point is the squared-density-weighted
norm of

    w = d_theta rho / rho + psi'(theta) - m(x),

with ``m`` the kernel-smoothed magnetization field.  A second, independent
route to the same quantity maximizes the integration-by-parts Rayleigh
quotient over a family of test functions; the two are compared in tests
rather than collapsed into one implementation.

Finite-system versions (a Hamiltonian for spin vectors, free energy and
slope for products of site marginals) mirror the same structure with the
kernel sampled at pairwise site displacements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import xlogy

from .grids import ThetaGrid, TorusGrid
from .measures import DENSITY_FLOOR, FiberMeasure, GridMeasure
from .models import ModelParams

__all__ = [
    "entropy",
    "potential_energy",
    "magnetization",
    "interaction_energy",
    "free_energy",
    "free_energy_lower_bound",
    "relative_entropy",
    "SlopeField",
    "slope_field",
    "metric_slope",
    "variational_slope",
    "hermite_fourier_family",
    "spin_hamiltonian",
    "spin_hamiltonian_gradient",
    "product_free_energy",
    "product_slope_squared",
]


def entropy(mu: GridMeasure) -> float:
    """Integral of ``rho log rho`` over the cylinder (zero cells contribute 0)."""
    return float(np.sum(xlogy(mu.rho, mu.rho)) * mu.theta.dtheta * mu.torus.dx)


def potential_energy(mu: GridMeasure, p: ModelParams) -> float:
    """Integral of the confining potential against the measure."""
    cell = mu.rho @ p.psi(mu.theta.centers)
    return float(np.sum(cell) * mu.theta.dtheta * mu.torus.dx)


def magnetization(mu: GridMeasure, p: ModelParams) -> np.ndarray:
    """Kernel-smoothed mean field ``m(x_i) = dx * sum_j K_ij mean_j``."""
    kernel = p.site_kernel_matrix(mu.torus.n_x)
    return mu.torus.dx * (kernel @ mu.means())


def interaction_energy(mu: GridMeasure, p: ModelParams) -> float:
    """Pairwise interaction energy ``-(dx^2 / 2) means^T K means``."""
    means = mu.means()
    kernel = p.site_kernel_matrix(mu.torus.n_x)
    return float(-0.5 * mu.torus.dx ** 2 * means @ kernel @ means)


def free_energy(mu: GridMeasure, p: ModelParams) -> float:
    """Entropy plus potential plus interaction energy."""
    return entropy(mu) + potential_energy(mu, p) + interaction_energy(mu, p)


def free_energy_lower_bound(p: ModelParams, theta: ThetaGrid):
    """Coefficients ``(poly, quad, offset)`` of a certified lower bound.

    For every fibered measure ``mu`` on a grid with spin cells ``theta``,

        free_energy(mu) >= poly * S_{2 ell}(mu) + quad * S_2(mu) - offset,

    where ``S_k`` is the k-th spin moment.  The entropy is bounded through
    the Gibbs inequality against the discrete reference with cell weights
    ``exp(-a theta^2) dtheta`` at ``a = sup|J| / 2``, the interaction by
    Cauchy-Schwarz, and the potential by the model's growth bound, so the
    inequality is exact in the discrete setting (up to rounding).
    """
    a = 0.5 * p.j_sup
    log_norm = float(
        np.log(np.sum(np.exp(-a * theta.centers ** 2)) * theta.dtheta)
    )
    poly = p.coercivity_coeff
    quad = p.quadratic_coeff - p.j_sup
    offset = p.offset_coeff + log_norm
    return poly, quad, offset


def relative_entropy(mu: GridMeasure, ref) -> float:
    """Relative entropy of ``mu`` with respect to ``ref`` on a common grid.

    ``ref`` is either a :class:`~spinflow.measures.GridMeasure` or a raw
    nonnegative density array on the same grid (which need not be
    normalized — useful for references like ``exp(-psi)`` against Lebesgue).
    Returns ``inf`` when ``mu`` puts mass where ``ref`` vanishes.
    """
    ref_rho = ref.rho if isinstance(ref, GridMeasure) else np.asarray(ref, float)
    if ref_rho.ndim == 1:
        ref_rho = np.broadcast_to(ref_rho, mu.rho.shape)
    if mu.rho.shape != ref_rho.shape:
        raise ValueError(
            f"grid shapes differ: {mu.rho.shape} vs {ref_rho.shape}"
        )
    supported = mu.rho > 0.0
    if np.any(supported & (ref_rho <= 0.0)):
        return float("inf")
    ratio = np.ones_like(mu.rho)
    np.divide(mu.rho, ref_rho, out=ratio, where=supported)
    return float(
        np.sum(xlogy(mu.rho, ratio)) * mu.theta.dtheta * mu.torus.dx
    )


@dataclass(frozen=True)
class SlopeField:
    """Descent-slope integrand ``w`` with its validity mask.

    ``values`` holds ``d_theta rho / rho + psi' - m`` where the density is
    above the floor and zero elsewhere; ``mask`` marks the cells where the
    logarithmic derivative is trustworthy, and ``excluded_mass`` is the
    total mass of the cells that were masked out.
    """

    values: np.ndarray
    mask: np.ndarray
    excluded_mass: float


def slope_field(mu: GridMeasure, p: ModelParams) -> SlopeField:
    """Pointwise slope integrand of the free energy at ``mu``."""
    rho = mu.rho
    drho = np.gradient(rho, mu.theta.dtheta, axis=1, edge_order=2)
    mask = rho > DENSITY_FLOOR
    values = np.zeros_like(rho)
    np.divide(drho, rho, out=values, where=mask)
    values += p.dpsi(mu.theta.centers)[None, :]
    values -= magnetization(mu, p)[:, None]
    values[~mask] = 0.0
    excluded = float(
        np.sum(rho[~mask]) * mu.theta.dtheta * mu.torus.dx
    )
    return SlopeField(values=values, mask=mask, excluded_mass=excluded)


def metric_slope(mu: GridMeasure, p: ModelParams) -> float:
    """Density-weighted L2 norm of the slope field."""
    sf = slope_field(mu, p)
    val = np.sum(sf.values ** 2 * mu.rho) * mu.theta.dtheta * mu.torus.dx
    return float(np.sqrt(val))


def variational_slope(mu: GridMeasure, p: ModelParams, family) -> float:
    """Best integration-by-parts Rayleigh quotient over a test family.

    Each family member is a pair ``(beta, dbeta)`` of arrays on the grid
    (``dbeta`` may be None, in which case a finite-difference derivative is
    used).  The quotient

        | integral of (beta (psi' - m) - d_theta beta) d mu | / ||beta||_mu

    never exceeds the metric slope and approaches it as the family fills
    out; members with negligible norm are skipped.
    """
    drift = p.dpsi(mu.theta.centers)[None, :] - magnetization(mu, p)[:, None]
    cell = mu.theta.dtheta * mu.torus.dx
    best = 0.0
    for beta, dbeta in family:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != mu.rho.shape:
            raise ValueError(
                f"test function shape {beta.shape} does not match grid"
                f" {mu.rho.shape}"
            )
        if dbeta is None:
            dbeta = np.gradient(beta, mu.theta.dtheta, axis=1, edge_order=2)
        numer = np.sum((beta * drift - dbeta) * mu.rho) * cell
        denom = np.sqrt(np.sum(beta ** 2 * mu.rho) * cell)
        if denom <= 1e-12:
            continue
        best = max(best, abs(numer) / denom)
    return float(best)


def hermite_fourier_family(torus: TorusGrid, theta: ThetaGrid, n_members: int):
    """Separable test functions: damped Hermite in spin, Fourier in space.

    Members are ``He_a(theta) exp(-theta^2/4) * phi_b(x)`` with the
    probabilists' Hermite polynomials and ``phi_b`` cycling through
    ``1, cos 2 pi x, sin 2 pi x, cos 4 pi x, ...``; spin derivatives are
    exact (``He_a' = a He_{a-1}``).  Returns ``n_members`` pairs
    ``(beta, dbeta)`` ordered by total (spin, space) resolution.
    """
    if n_members < 1:
        raise ValueError(f"n_members must be >= 1, got {n_members}")
    tc = theta.centers
    x = torus.x
    envelope = np.exp(-0.25 * tc ** 2)

    def spin_mode(a):
        coeffs = np.zeros(a + 1)
        coeffs[a] = 1.0
        he = hermite_e.hermeval(tc, coeffs)
        if a == 0:
            dhe = np.zeros_like(tc)
        else:
            dcoeffs = np.zeros(a)
            dcoeffs[a - 1] = a
            dhe = hermite_e.hermeval(tc, dcoeffs)
        g = he * envelope
        dg = (dhe - 0.5 * tc * he) * envelope
        return g, dg

    def space_mode(b):
        if b == 0:
            return np.ones_like(x)
        freq = 2.0 * np.pi * ((b + 1) // 2)
        return np.cos(freq * x) if b % 2 == 1 else np.sin(freq * x)

    family = []
    order = 0
    while len(family) < n_members:
        for a in range(order + 1):
            b = order - a
            g, dg = spin_mode(a)
            phi = space_mode(b)
            family.append((phi[:, None] * g[None, :], phi[:, None] * dg[None, :]))
            if len(family) == n_members:
                break
        order += 1
    return family


def spin_hamiltonian(thetas: np.ndarray, p: ModelParams) -> float:
    """Energy of a spin vector: on-site potential plus pairwise interaction.

    ``sum_k psi(theta_k) + (1 / 2N) sum_{k,j} K_kj theta_k theta_j`` with the
    kernel sampled at site displacements ``(k - j)/N``, diagonal included.
    """
    thetas = np.asarray(thetas, dtype=float)
    n = thetas.shape[0]
    kernel = p.site_kernel_matrix(n)
    return float(np.sum(p.psi(thetas)) + thetas @ kernel @ thetas / (2.0 * n))


def spin_hamiltonian_gradient(thetas: np.ndarray, p: ModelParams) -> np.ndarray:
    """Gradient of :func:`spin_hamiltonian` with respect to the spin vector."""
    thetas = np.asarray(thetas, dtype=float)
    n = thetas.shape[0]
    kernel = p.site_kernel_matrix(n)
    return p.dpsi(thetas) + (kernel @ thetas) / n


def _site_means(fibers) -> np.ndarray:
    return np.array([f.mean() for f in fibers])


def product_free_energy(fibers, p: ModelParams) -> float:
    """Per-site free energy of a product of site marginals.

    ``(1/N) sum_k [entropy_k + potential_k] + (1 / 2 N^2) means^T K means``
    for absolutely continuous site marginals (a list of
    :class:`~spinflow.measures.FiberMeasure`).
    """
    n = len(fibers)
    if n == 0:
        raise ValueError("need at least one site marginal")
    site = 0.0
    for f in fibers:
        site += f.entropy() + float(
            np.sum(f.weights * p.psi(f.theta.centers)) * f.theta.dtheta
        )
    means = _site_means(fibers)
    kernel = p.site_kernel_matrix(n)
    return float(site / n + means @ kernel @ means / (2.0 * n ** 2))


def product_slope_squared(fibers, p: ModelParams) -> float:
    """Per-site squared descent slope of the finite-system free energy.

    For a product of site marginals the slope integrand at site ``k`` is

        nu_k' / nu_k + psi'(theta) + (1/N) K_kk theta
        + (1/N) sum_{j != k} K_kj mean_j,

    and the result is ``(1/N) sum_k`` of its squared ``nu_k``-norm.
    """
    n = len(fibers)
    if n == 0:
        raise ValueError("need at least one site marginal")
    means = _site_means(fibers)
    kernel = p.site_kernel_matrix(n)
    total = 0.0
    for k, f in enumerate(fibers):
        g = f.weights
        dg = np.gradient(g, f.theta.dtheta, edge_order=2)
        mask = g > DENSITY_FLOOR
        log_deriv = np.zeros_like(g)
        np.divide(dg, g, out=log_deriv, where=mask)
        cross = kernel[k] @ means - kernel[k, k] * means[k]
        u = (log_deriv + p.dpsi(f.theta.centers)
             + (kernel[k, k] * f.theta.centers + cross) / n)
        u[~mask] = 0.0
        total += float(np.sum(u ** 2 * g) * f.theta.dtheta)
    return total / n
