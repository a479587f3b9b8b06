"""Uniform grids for the periodic spatial coordinate and the truncated spin coordinate.

The spatial coordinate lives on the unit circle (torus) and is discretized by
``n_x`` equally spaced sites ``x_i = i / n_x``; site ``i`` represents the cell
``[i/n_x, (i+1)/n_x)``.  The spin coordinate lives on a truncated interval
``[theta_min, theta_max]`` discretized by ``n_theta`` midpoint cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TorusGrid", "ThetaGrid", "torus_distance"]


def torus_distance(a, b):
    """Distance on the unit circle: min(|a-b|, 1-|a-b|), elementwise."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class TorusGrid:
    """Equally spaced sites on the unit circle, indices taken modulo ``n_x``."""

    n_x: int

    def __post_init__(self):
        if not isinstance(self.n_x, (int, np.integer)) or self.n_x < 1:
            raise ValueError(f"n_x must be a positive integer, got {self.n_x!r}")

    @property
    def dx(self) -> float:
        """Cell width 1 / n_x."""
        return 1.0 / self.n_x

    @property
    def x(self) -> np.ndarray:
        """Site positions x_i = i / n_x (left cell edges)."""
        return np.arange(self.n_x) / self.n_x

    def wrap(self, i):
        """Site index modulo n_x."""
        return np.asarray(i) % self.n_x

    def displacement(self, i, j):
        """Signed torus displacement (x_i - x_j) mapped to [-1/2, 1/2)."""
        d = (np.asarray(i, dtype=float) - np.asarray(j, dtype=float)) / self.n_x
        return (d + 0.5) % 1.0 - 0.5


@dataclass(frozen=True)
class ThetaGrid:
    """Midpoint cells on the truncated spin interval [theta_min, theta_max]."""

    theta_min: float
    theta_max: float
    n_theta: int

    def __post_init__(self):
        if not np.isfinite(self.theta_min) or not np.isfinite(self.theta_max):
            raise ValueError("theta bounds must be finite")
        if not self.theta_max > self.theta_min:
            raise ValueError(
                f"theta_max must exceed theta_min, got [{self.theta_min}, {self.theta_max}]"
            )
        if not isinstance(self.n_theta, (int, np.integer)) or self.n_theta < 2:
            raise ValueError(f"n_theta must be an integer >= 2, got {self.n_theta!r}")

    @property
    def dtheta(self) -> float:
        """Cell width."""
        return (self.theta_max - self.theta_min) / self.n_theta

    @property
    def centers(self) -> np.ndarray:
        """Cell centers theta_j = theta_min + (j + 1/2) dtheta."""
        return self.theta_min + (np.arange(self.n_theta) + 0.5) * self.dtheta

    @property
    def edges(self) -> np.ndarray:
        """Cell edges, length n_theta + 1."""
        return self.theta_min + np.arange(self.n_theta + 1) * self.dtheta

    @property
    def interior_edges(self) -> np.ndarray:
        """Interior cell faces, length n_theta - 1."""
        return self.edges[1:-1]

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min
