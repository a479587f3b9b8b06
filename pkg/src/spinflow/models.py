"""Model data: confining potential, interaction kernel, convexity constants.

A model couples a polynomial confining potential ``psi`` acting on each spin
value with an even interaction kernel ``j_kernel`` acting on torus
displacements.  The potential must dominate an even-power growth bound

    psi(theta) >= coercivity_coeff * theta**(2*ell)
                  + quadratic_coeff * theta**2 - offset_coeff,

with ``quadratic_coeff`` strictly larger than the sup of ``|j_kernel|`` so
that the free energy is bounded below.  Convexity constants derived from the
model (the minimum of ``psi''`` and ``-sup|J|``) add up to the one-sided
convexity bound used by contraction estimates and by the step-size guard of
the minimizing-movement scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

__all__ = ["ModelParams", "default_model"]

_N_VALIDATION_SAMPLES = 10_000


@dataclass(frozen=True)
class ModelParams:
    """Confining potential, interaction kernel, and derived constants.

    Parameters
    ----------
    psi_coeffs : tuple of float
        Coefficients of the confining potential in ascending order
        (``psi_coeffs[k]`` multiplies ``theta**k``).  The polynomial must
        have even degree ``2 * growth_exponent`` with a positive leading
        coefficient.
    j_kernel : callable
        Vectorized even function of the signed torus displacement in
        ``[-1/2, 1/2)``.
    growth_exponent : int
        Half the degree of the potential (``ell >= 1``).
    coercivity_coeff, quadratic_coeff, offset_coeff : float
        Constants of the growth bound
        ``psi >= coercivity_coeff * theta**(2*ell) + quadratic_coeff *
        theta**2 - offset_coeff``.  ``coercivity_coeff > 0`` and
        ``quadratic_coeff`` must strictly exceed ``sup |J|``.
    theta_range : tuple of float, optional
        Spin-value interval the model is meant to be solved on.

    Attributes
    ----------
    j_sup : float
        Max of ``|j_kernel|`` over sampled displacements.
    kernel_convexity : float
        ``-j_sup``: convexity deficit contributed by the interaction.
    potential_convexity : float
        Min of ``psi''`` over sampled spin values in ``theta_range``.
    convexity_bound : float
        ``kernel_convexity + potential_convexity``: one-sided convexity
        constant of the free energy along interpolations.
    """

    psi_coeffs: tuple
    j_kernel: Callable[[np.ndarray], np.ndarray]
    growth_exponent: int
    coercivity_coeff: float
    quadratic_coeff: float
    offset_coeff: float
    theta_range: tuple = (-6.0, 6.0)
    j_sup: float = field(init=False, default=0.0)
    kernel_convexity: float = field(init=False, default=0.0)
    potential_convexity: float = field(init=False, default=0.0)
    convexity_bound: float = field(init=False, default=0.0)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.psi_coeffs)
        object.__setattr__(self, "psi_coeffs", coeffs)
        ell = int(self.growth_exponent)
        object.__setattr__(self, "growth_exponent", ell)
        if ell < 1:
            raise ValueError(f"growth_exponent must be >= 1, got {ell}")
        degree = len(coeffs) - 1
        if degree != 2 * ell:
            raise ValueError(
                f"potential degree {degree} does not equal 2 * growth_exponent"
                f" = {2 * ell}"
            )
        if coeffs[-1] <= 0.0:
            raise ValueError(
                f"leading potential coefficient must be positive, got {coeffs[-1]}"
            )
        if not self.coercivity_coeff > 0.0:
            raise ValueError(
                f"coercivity_coeff must be positive, got {self.coercivity_coeff}"
            )
        lo, hi = (float(t) for t in self.theta_range)
        if not lo < hi:
            raise ValueError(f"theta_range must be increasing, got ({lo}, {hi})")
        object.__setattr__(self, "theta_range", (lo, hi))

        poly = Polynomial(coeffs)
        dpoly = poly.deriv()
        d2poly = poly.deriv(2)
        object.__setattr__(self, "_poly", poly)
        object.__setattr__(self, "_dpoly", dpoly)
        object.__setattr__(self, "_d2poly", d2poly)

        disp = np.linspace(-0.5, 0.5, _N_VALIDATION_SAMPLES, endpoint=False)
        j_vals = np.asarray(self.j_kernel(disp), dtype=float)
        if j_vals.shape != disp.shape:
            raise ValueError("j_kernel must map a displacement array to an array"
                             f" of the same shape, got shape {j_vals.shape}")
        if not np.all(np.isfinite(j_vals)):
            raise ValueError("j_kernel returned non-finite values")
        j_sup = float(np.max(np.abs(j_vals)))
        # Even symmetry: J(d) == J(-d).  -0.5 wraps to itself on the torus,
        # so compare on interior points only.
        interior = disp[1:]
        asym = np.max(np.abs(np.asarray(self.j_kernel(-interior), dtype=float)
                             - np.asarray(self.j_kernel(interior), dtype=float)))
        if asym > 1e-12 * max(1.0, j_sup):
            raise ValueError(
                f"j_kernel is not even: max |J(-d) - J(d)| = {asym:.3e}"
            )
        if not self.quadratic_coeff > j_sup:
            raise ValueError(
                "quadratic growth coefficient must strictly exceed sup |J| ="
                f" {j_sup}, got {self.quadratic_coeff}"
            )

        theta = np.linspace(lo, hi, _N_VALIDATION_SAMPLES)
        psi_vals = poly(theta)
        bound = (self.coercivity_coeff * theta ** (2 * ell)
                 + self.quadratic_coeff * theta ** 2 - self.offset_coeff)
        scale = max(1.0, float(np.max(np.abs(psi_vals))))
        worst = float(np.min(psi_vals - bound))
        if worst < -1e-9 * scale:
            raise ValueError(
                "growth bound fails: min(psi - bound) ="
                f" {worst:.3e} over theta_range"
            )

        object.__setattr__(self, "j_sup", j_sup)
        object.__setattr__(self, "kernel_convexity", -j_sup)
        object.__setattr__(
            self, "potential_convexity", float(np.min(d2poly(theta)))
        )
        object.__setattr__(
            self, "convexity_bound", -j_sup + self.potential_convexity
        )

    def psi(self, theta):
        """Evaluate the confining potential."""
        return self._poly(np.asarray(theta, dtype=float))

    def dpsi(self, theta):
        """Evaluate the derivative of the confining potential."""
        return self._dpoly(np.asarray(theta, dtype=float))

    def d2psi(self, theta):
        """Evaluate the second derivative of the confining potential."""
        return self._d2poly(np.asarray(theta, dtype=float))

    def j_values(self, displacement):
        """Evaluate the kernel at signed displacements, wrapped to [-1/2, 1/2)."""
        d = np.asarray(displacement, dtype=float)
        wrapped = d - np.round(d)
        wrapped = np.where(wrapped == 0.5, -0.5, wrapped)
        return np.asarray(self.j_kernel(wrapped), dtype=float)

    def site_kernel_matrix(self, n_sites):
        """Kernel evaluated at pairwise site displacements ``(i - j) / n``.

        Returns the symmetric ``(n_sites, n_sites)`` matrix
        ``J(((i - j) mod-wrapped) / n_sites)``, including the diagonal
        ``J(0)``.
        """
        if n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {n_sites}")
        idx = np.arange(n_sites)
        return self.j_values((idx[:, None] - idx[None, :]) / n_sites)


def default_model():
    """Double-well potential with a single-mode attractive-repulsive kernel.

    The potential is ``theta**4 / 4 - theta**2 / 2`` and the kernel is
    ``0.5 * cos(2 pi d)``; the growth bound holds with coefficients
    ``(1/8, 1, 9/2)`` because ``psi - (theta**4/8 + theta**2 - 9/2)``
    equals ``(theta**2 - 6)**2 / 8``.
    """
    return ModelParams(
        psi_coeffs=(0.0, 0.0, -0.5, 0.0, 0.25),
        j_kernel=lambda d: 0.5 * np.cos(2.0 * np.pi * np.asarray(d)),
        growth_exponent=2,
        coercivity_coeff=0.125,
        quadratic_coeff=1.0,
        offset_coeff=4.5,
    )
