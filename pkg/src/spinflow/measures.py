"""Probability measures on the discretized cylinder (unit torus x spin interval).

The central object is :class:`GridMeasure`: a measure whose spatial marginal is
the uniform (Lebesgue) measure on the torus and whose conditional spin
distribution at each site is a piecewise-constant probability density on the
theta grid.  Fibers may also be purely atomic (:class:`DiscreteFiber`), which
yields :class:`DiscreteFiberedMeasure` — used for empirical particle states and
for exactly representable singular examples.

All densities are midpoint-cell values; every integral used here is the
midpoint rule.  Instances are value objects: their arrays are copied in and
marked read-only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from .grids import ThetaGrid, TorusGrid

__all__ = [
    "FiberMeasure",
    "DiscreteFiber",
    "GridMeasure",
    "DiscreteFiberedMeasure",
    "MeasureCurve",
    "normalize_fibers",
    "coarsen_measure",
]

#: densities at or below this threshold are treated as numerically zero by
#: operations that divide by the density (slopes, optimal maps).
DENSITY_FLOOR = 1e-14

_FIBER_MASS_TOL = 1e-10
_ATOM_MASS_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class FiberMeasure:
    """One normalized piecewise-constant spin density on a theta grid.

    ``weights[j]`` is the density on cell j; ``sum_j weights[j] * dtheta = 1``
    within ``tol``.
    """

    def __init__(self, theta: ThetaGrid, weights, tol: float = _FIBER_MASS_TOL):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (theta.n_theta,):
            raise ValueError(
                f"weights shape {weights.shape} does not match grid ({theta.n_theta},)"
            )
        if not np.all(np.isfinite(weights)):
            raise ValueError("fiber weights must be finite")
        if weights.min() < 0.0:
            raise ValueError(
                f"negative fiber density {weights.min():.3e} at cell {int(weights.argmin())}"
            )
        mass = weights.sum() * theta.dtheta
        if abs(mass - 1.0) > tol:
            raise ValueError(f"fiber mass {mass!r} deviates from 1 beyond tol={tol}")
        self.theta = theta
        self.weights = _freeze(weights)

    def mass(self) -> float:
        return float(self.weights.sum() * self.theta.dtheta)

    def mean(self) -> float:
        return float(self.weights @ self.theta.centers * self.theta.dtheta)

    def second_moment(self) -> float:
        return float(self.weights @ self.theta.centers**2 * self.theta.dtheta)

    def entropy(self) -> float:
        """Integral of rho log rho over the fiber (0 log 0 = 0)."""
        return float(xlogy(self.weights, self.weights).sum() * self.theta.dtheta)

    def __repr__(self):
        return f"FiberMeasure(n_theta={self.theta.n_theta})"


class DiscreteFiber:
    """A purely atomic spin distribution: atoms at ``positions`` with ``masses``.

    Masses are strictly positive and sum to 1 within 1e-12.
    """

    def __init__(self, positions, masses, tol: float = _ATOM_MASS_TOL):
        positions = np.asarray(positions, dtype=float)
        masses = np.asarray(masses, dtype=float)
        if positions.ndim != 1 or positions.shape != masses.shape:
            raise ValueError("positions and masses must be 1-d arrays of equal length")
        if positions.size == 0:
            raise ValueError("a discrete fiber needs at least one atom")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(masses))):
            raise ValueError("atom positions and masses must be finite")
        if masses.min() <= 0.0:
            raise ValueError(f"atom masses must be positive, got min {masses.min()!r}")
        total = masses.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"atom masses sum to {total!r}, not 1 within tol={tol}")
        order = np.argsort(positions, kind="stable")
        self.positions = _freeze(positions[order])
        self.masses = _freeze(masses[order])

    @property
    def n_atoms(self) -> int:
        return self.positions.size

    def mean(self) -> float:
        return float(self.positions @ self.masses)

    def second_moment(self) -> float:
        return float((self.positions**2) @ self.masses)

    def __repr__(self):
        return f"DiscreteFiber(n_atoms={self.n_atoms})"


class GridMeasure:
    """Fiberwise-normalized density on the product of a torus grid and theta grid.

    ``rho[i, j]`` is the spin density at site ``x_i = i/n_x``, cell center
    ``theta_j``.  Every fiber satisfies ``sum_j rho[i, j] * dtheta = 1`` within
    ``tol`` (1e-10 on construction from exact data; pass 1e-8 for states
    produced by time stepping).
    """

    def __init__(self, torus: TorusGrid, theta: ThetaGrid, rho, tol: float = _FIBER_MASS_TOL):
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (torus.n_x, theta.n_theta):
            raise ValueError(
                f"rho shape {rho.shape} does not match grids "
                f"({torus.n_x}, {theta.n_theta})"
            )
        if not np.all(np.isfinite(rho)):
            bad = np.argwhere(~np.isfinite(rho))[0]
            raise ValueError(f"non-finite density at fiber {bad[0]}, cell {bad[1]}")
        if rho.min() < 0.0:
            i, j = np.unravel_index(rho.argmin(), rho.shape)
            raise ValueError(f"negative density {rho.min():.3e} at fiber {i}, cell {j}")
        masses = rho.sum(axis=1) * theta.dtheta
        err = np.abs(masses - 1.0)
        if err.max() > tol:
            i = int(err.argmax())
            raise ValueError(
                f"fiber {i} has mass {masses[i]!r}, deviating from 1 beyond tol={tol}"
            )
        self.torus = torus
        self.theta = theta
        self.rho = _freeze(rho)

    # ---- fiber access -------------------------------------------------

    def fiber(self, i: int) -> FiberMeasure:
        """Exact copy of fiber ``i`` as a standalone measure."""
        return FiberMeasure(self.theta, self.rho[int(i)], tol=1e-8)

    def set_fiber(self, i: int, f: FiberMeasure) -> "GridMeasure":
        """New measure with fiber ``i`` replaced by ``f`` (same theta grid)."""
        if f.theta != self.theta:
            raise ValueError("fiber theta grid does not match the measure")
        rho = self.rho.copy()
        rho[int(i)] = f.weights
        return GridMeasure(self.torus, self.theta, rho, tol=1e-8)

    # ---- moments / diagnostics ----------------------------------------

    def fiber_masses(self) -> np.ndarray:
        return self.rho.sum(axis=1) * self.theta.dtheta

    def total_mass(self) -> float:
        return float(self.fiber_masses().mean())

    def means(self) -> np.ndarray:
        """Per-site first moments of the spin distribution."""
        return self.rho @ self.theta.centers * self.theta.dtheta

    def second_moment(self) -> float:
        """Integral of theta^2 against the measure (midpoint rule)."""
        per_fiber = self.rho @ self.theta.centers**2 * self.theta.dtheta
        return float(per_fiber.mean())

    def boundary_mass(self, n_cells: int = 2) -> float:
        """Largest per-fiber mass within ``n_cells`` of either theta boundary."""
        lo = self.rho[:, :n_cells].sum(axis=1)
        hi = self.rho[:, -n_cells:].sum(axis=1)
        return float((lo + hi).max() * self.theta.dtheta)

    # ---- serialization -------------------------------------------------

    def to_csv(self, path) -> None:
        """Write rows ``i,j,x,theta,rho`` (17 significant digits) plus a JSON sidecar.

        The sidecar ``<stem>.json`` records n_x, n_theta, theta_min, theta_max so
        the file pair round-trips exactly.
        """
        path = Path(path)
        x = self.torus.x
        centers = self.theta.centers
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "x", "theta", "rho"])
            for i in range(self.torus.n_x):
                for j in range(self.theta.n_theta):
                    writer.writerow(
                        [i, j, f"{x[i]:.17g}", f"{centers[j]:.17g}", f"{self.rho[i, j]:.17g}"]
                    )
        sidecar = {
            "n_x": self.torus.n_x,
            "n_theta": self.theta.n_theta,
            "theta_min": self.theta.theta_min,
            "theta_max": self.theta.theta_max,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1))

    @classmethod
    def from_csv(cls, path, tol: float = 1e-8) -> "GridMeasure":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        torus = TorusGrid(int(meta["n_x"]))
        theta = ThetaGrid(float(meta["theta_min"]), float(meta["theta_max"]), int(meta["n_theta"]))
        rho = np.full((torus.n_x, theta.n_theta), np.nan)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["i", "j", "x", "theta", "rho"]:
                raise ValueError(f"unexpected CSV header {header!r}")
            for row in reader:
                rho[int(row[0]), int(row[1])] = float(row[4])
        if np.isnan(rho).any():
            raise ValueError("CSV does not cover every (i, j) cell")
        return cls(torus, theta, rho, tol=tol)

    def __repr__(self):
        return f"GridMeasure(n_x={self.torus.n_x}, n_theta={self.theta.n_theta})"


class DiscreteFiberedMeasure:
    """Fibered measure whose spatial marginal is Lebesgue and whose fibers are atomic.

    Site ``k`` of ``n_x`` carries the spatial cell ``[k/n_x, (k+1)/n_x)`` with
    uniform spatial mass ``1/n_x`` and the atomic spin distribution
    ``fibers[k]``.
    """

    def __init__(self, fibers):
        fibers = list(fibers)
        if not fibers:
            raise ValueError("need at least one fiber")
        if not all(isinstance(f, DiscreteFiber) for f in fibers):
            raise TypeError("fibers must be DiscreteFiber instances")
        self.fibers = tuple(fibers)

    @property
    def n_x(self) -> int:
        return len(self.fibers)

    @property
    def torus(self) -> TorusGrid:
        return TorusGrid(self.n_x)

    def fiber(self, i: int) -> DiscreteFiber:
        return self.fibers[int(i)]

    def means(self) -> np.ndarray:
        return np.array([f.mean() for f in self.fibers])

    def second_moment(self) -> float:
        return float(np.mean([f.second_moment() for f in self.fibers]))

    def __repr__(self):
        return f"DiscreteFiberedMeasure(n_x={self.n_x})"


@dataclass(frozen=True)
class MeasureCurve:
    """A time-indexed family of grid measures on one common grid."""

    times: np.ndarray
    states: tuple

    def __init__(self, times, states):
        times = np.asarray(times, dtype=float)
        states = tuple(states)
        if times.ndim != 1 or len(states) != times.size:
            raise ValueError("times and states must have equal length")
        if times.size < 1:
            raise ValueError("curve needs at least one state")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        g0 = (states[0].torus, states[0].theta)
        for s in states[1:]:
            if (s.torus, s.theta) != g0:
                raise ValueError("all states must share one grid")
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k: int) -> GridMeasure:
        return self.states[k]

    def reversed(self) -> "MeasureCurve":
        """The same path traversed backwards on the same time stamps."""
        t0, t1 = self.times[0], self.times[-1]
        return MeasureCurve(t0 + t1 - self.times[::-1], self.states[::-1])


def normalize_fibers(raw, torus: TorusGrid, theta: ThetaGrid) -> GridMeasure:
    """Normalize each row of a nonnegative array into a fiber density.

    Raises ``ValueError`` naming the site if a row carries (numerically) zero
    mass and hence cannot be normalized.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (torus.n_x, theta.n_theta):
        raise ValueError(f"raw shape {raw.shape} does not match grids")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw densities must be finite")
    if raw.min() < 0.0:
        raise ValueError(f"raw densities must be nonnegative, got min {raw.min():.3e}")
    masses = raw.sum(axis=1) * theta.dtheta
    tiny = masses <= 0.0
    if tiny.any():
        raise ValueError(f"fiber {int(np.argmax(tiny))} has zero mass and cannot be normalized")
    return GridMeasure(torus, theta, raw / masses[:, None])


def coarsen_measure(mu: GridMeasure, n_x: int, n_theta: int) -> GridMeasure:
    """Block-average in x and aggregate theta cells into a coarser measure.

    ``n_x`` must divide ``mu.torus.n_x`` and ``n_theta`` must divide
    ``mu.theta.n_theta``; coarse cells are unions of fine cells, so fiber masses
    are preserved exactly.
    """
    if mu.torus.n_x % n_x != 0:
        raise ValueError(f"n_x={n_x} does not divide {mu.torus.n_x}")
    if mu.theta.n_theta % n_theta != 0:
        raise ValueError(f"n_theta={n_theta} does not divide {mu.theta.n_theta}")
    bx = mu.torus.n_x // n_x
    bt = mu.theta.n_theta // n_theta
    # average over x-blocks (equal weights), sum masses over theta blocks
    rho = mu.rho.reshape(n_x, bx, n_theta, bt).mean(axis=1).sum(axis=2) / bt
    theta = ThetaGrid(mu.theta.theta_min, mu.theta.theta_max, n_theta)
    return GridMeasure(TorusGrid(n_x), theta, rho, tol=1e-8)
