"""Closed-form stationary densities of one-dimensional diffusions.

For ``dX = b(X) dt + sigma(X) dW`` under the dissipativity assumption the
stationary density is

    m(x) = sigma(x)**-2 * exp(int_0^x 2 b(a) / sigma(a)**2 da) / Z.

The inner integral is accumulated with composite Simpson on a uniform grid,
the normalizer by the trapezoid rule. The lower limit of the inner integral
only shifts the log-density by a constant, which the normalizer absorbs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson, trapezoid

from .errors import DomainError, EllipticityError, InputError


@dataclass(frozen=True, eq=False)
class StationaryDensity1D:
    drift: object
    diffusion: object
    domain: tuple
    grid: np.ndarray
    log_unnormalized: np.ndarray
    normalizer: float
    grid_size: int

    @property
    def values(self):
        """Density at the grid nodes."""
        return np.exp(self.log_unnormalized) / self.normalizer

    @property
    def spacing(self):
        return (self.domain[1] - self.domain[0]) / (self.grid_size - 1)

    def density(self, x):
        """Density at arbitrary points (log-linear interpolation, zero outside)."""
        x = np.asarray(x, dtype=float)
        logv = np.interp(x, self.grid, self.log_unnormalized)
        out = np.exp(logv) / self.normalizer
        return np.where((x < self.domain[0]) | (x > self.domain[1]), 0.0, out)

    __call__ = density

    @property
    def cdf_values(self):
        F = np.concatenate(([0.0], np.cumsum(0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid))))
        return F / F[-1]

    def cdf(self, x):
        return np.interp(x, self.grid, self.cdf_values, left=0.0, right=1.0)

    def quantile(self, u):
        F = self.cdf_values
        # flat stretches of F (underflowed tails) break np.interp's monotonicity
        keep = np.concatenate(([True], np.diff(F) > 0))
        return np.interp(u, F[keep], self.grid[keep])

    def moment(self, k):
        return float(trapezoid(self.grid**k * self.values, self.grid))

    @property
    def mean(self):
        return self.moment(1)

    @property
    def variance(self):
        return self.moment(2) - self.mean**2

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "density"])
            for x, v in zip(self.grid, self.values):
                w.writerow([repr(float(x)), repr(float(v))])


def default_domain(constants, center=0.0):
    """Truncation interval ``center +/- 10 * scale`` from the dissipativity constants."""
    scale = math.sqrt((constants.sigma_high**2 + 2.0 * constants.C1) / (2.0 * constants.c))
    return (center - 10.0 * scale, center + 10.0 * scale)


def build_stationary_density(drift, diffusion, domain=(-10.0, 10.0), grid_size=4097):
    """Tabulate the stationary density of ``dX = drift dt + diffusion dW``.

    Parameters
    ----------
    drift, diffusion : callable
        Vectorised coefficient functions.
    domain : (float, float)
        Truncation interval; the tails outside are assumed negligible.
    grid_size : int
        Number of uniform nodes (at least 64). An odd count keeps Simpson's
        rule in its composite form throughout.
    """
    grid_size = int(grid_size)
    if grid_size < 64:
        raise InputError("grid_size must be at least 64")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise InputError("empty domain")
    x = np.linspace(lo, hi, grid_size)
    s = np.asarray(diffusion(x), dtype=float)
    if np.any(~(s > 0)):
        i = int(np.argmax(~(s > 0)))
        raise EllipticityError(f"diffusion not positive at x={x[i]:.6g}")
    integrand = 2.0 * np.asarray(drift(x), dtype=float) / s**2
    if not np.all(np.isfinite(integrand)):
        raise DomainError("non-finite drift/diffusion ratio on the grid")
    inner = cumulative_simpson(integrand, x=x, initial=0.0)
    logu = -2.0 * np.log(s) + inner
    logu = logu - logu.max()
    Z = float(trapezoid(np.exp(logu), x))
    return StationaryDensity1D(drift, diffusion, (lo, hi), x, logu, Z, grid_size)


def sample(d: StationaryDensity1D, n, rng_seed):
    """Inverse-CDF sampling with linear interpolation of the tabulated CDF."""
    if n < 1:
        raise InputError("n must be positive")
    rng = np.random.default_rng(rng_seed)
    return d.quantile(rng.random(int(n)))


def wasserstein1(samples, d: StationaryDensity1D):
    """W1 between an empirical sample and ``d``: trapezoid integral of ``|F_emp - F_d|``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise InputError("empty sample")
    grid = d.grid
    # samples outside the truncation interval extend the integration range
    lo, hi = min(grid[0], s[0]), max(grid[-1], s[-1])
    if lo < grid[0] or hi > grid[-1]:
        grid = np.concatenate(([lo] if lo < grid[0] else [], grid, [hi] if hi > grid[-1] else []))
    F_emp = np.searchsorted(s, grid, side="right") / s.size
    return float(trapezoid(np.abs(F_emp - d.cdf(grid)), grid))
