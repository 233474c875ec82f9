"""Densities on uniform rectangular grids.

Values are point samples at the nodes; integrals use the cell-mass rule
``sum(values) * dx * dy``, the same rule that defines normalization. Every
quadrature in the package (marginals, conditional expectations, L1 norms)
uses this rule so the discrete algebra of the density transformation is
exact up to rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

NORMALIZATION_TOL = 1e-12


def _check_uniform(g, name):
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise InputError(f"{name} must be a 1D array with at least two nodes")
    d = np.diff(g)
    if np.any(d <= 0):
        raise InputError(f"{name} must be strictly increasing")
    if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
        raise InputError(f"{name} must be uniform")
    return g


@dataclass(frozen=True, eq=False)
class GridDensity2D:
    """Nonnegative normalized density on ``x_grid x y_grid``; ``values[i, j] = p(x_i, y_j)``."""

    x_grid: np.ndarray
    y_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xg = _check_uniform(self.x_grid, "x_grid")
        yg = _check_uniform(self.y_grid, "y_grid")
        v = np.array(self.values, dtype=float)
        if v.shape != (xg.size, yg.size):
            raise InputError(f"values shape {v.shape} does not match grids ({xg.size}, {yg.size})")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise InputError("density values must be finite and nonnegative")
        total = v.sum() * (xg[1] - xg[0]) * (yg[1] - yg[0])
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InputError(f"density not normalized (mass {total!r})")
        for a in (xg, yg, v):
            a.setflags(write=False)
        object.__setattr__(self, "x_grid", xg)
        object.__setattr__(self, "y_grid", yg)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_unnormalized(cls, x_grid, y_grid, values):
        x_grid = np.asarray(x_grid, dtype=float)
        y_grid = np.asarray(y_grid, dtype=float)
        v = np.asarray(values, dtype=float)
        mass = v.sum() * (x_grid[1] - x_grid[0]) * (y_grid[1] - y_grid[0])
        if not mass > 0:
            raise InputError("cannot normalize a density with zero mass")
        return cls(x_grid, y_grid, v / mass)

    @classmethod
    def from_function(cls, fn, x_grid, y_grid):
        X, Y = np.meshgrid(x_grid, y_grid, indexing="ij")
        return cls.from_unnormalized(x_grid, y_grid, fn(X, Y))

    @property
    def dx(self):
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def dy(self):
        return float(self.y_grid[1] - self.y_grid[0])

    @property
    def shape(self):
        return self.values.shape

    def mesh(self):
        return np.meshgrid(self.x_grid, self.y_grid, indexing="ij")

    @property
    def x_marginal(self):
        return self.values.sum(axis=1) * self.dy

    @property
    def y_marginal(self):
        return self.values.sum(axis=0) * self.dx

    def integrate(self, g):
        """Integral of ``g * p``; ``g`` is an array on the grid or a callable of (x, y)."""
        if callable(g):
            g = g(*self.mesh())
        return float((np.asarray(g) * self.values).sum() * self.dx * self.dy)

    def l1_distance(self, other):
        if other.shape != self.shape:
            raise InputError("grids differ")
        return float(np.abs(self.values - other.values).sum() * self.dx * self.dy)

    def to_csv(self, path):
        """Write ``x,y,value`` triplets after a ``# nx=..,ny=..`` header line."""
        with Path(path).open("w", newline="") as fh:
            fh.write(f"# nx={self.shape[0]},ny={self.shape[1]}\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            X, Y = self.mesh()
            for x, y, v in zip(X.ravel(), Y.ravel(), self.values.ravel()):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with Path(path).open(newline="") as fh:
            header = fh.readline().strip().lstrip("#").strip()
            dims = dict(kv.split("=") for kv in header.split(","))
            nx, ny = int(dims["nx"]), int(dims["ny"])
            rows = list(csv.reader(fh))[1:]
        data = np.array(rows, dtype=float)
        if data.shape != (nx * ny, 3):
            raise InputError(f"{path}: expected {nx * ny} rows")
        X = data[:, 0].reshape(nx, ny)
        Y = data[:, 1].reshape(nx, ny)
        return cls.from_unnormalized(X[:, 0], Y[0, :], data[:, 2].reshape(nx, ny))


def uniform_grid(lo, hi, n):
    return np.linspace(lo, hi, int(n))


def product_density(m1, m2, x_grid, y_grid):
    """``m1(x) m2(y)`` sampled on the grid and renormalized by the cell rule."""
    return GridDensity2D.from_unnormalized(x_grid, y_grid, np.outer(m1(x_grid), m2(y_grid)))


def catalog_densities(x_grid, y_grid):
    """Named smooth densities used as fixtures for the transformation algebra."""

    def gauss(X, Y):
        return np.exp(-0.5 * (X**2 + Y**2))

    def correlated(X, Y):
        rho = 0.6
        return np.exp(-(X**2 - 2 * rho * X * Y + Y**2) / (2 * (1 - rho**2)))

    def sign_shift(X, Y):
        return np.exp(-(X**2) - (Y - 0.5 * np.sign(X)) ** 2)

    def bimodal(X, Y):
        return np.exp(-((X - 1.5) ** 2 + (Y - 1) ** 2)) + 0.7 * np.exp(-((X + 1.5) ** 2 + 2 * (Y + 1) ** 2))

    def skewed(X, Y):
        return np.exp(-0.5 * X**2 - 0.5 * (Y - 0.4 * X**2 + 0.4) ** 2)

    fns = {"gauss": gauss, "correlated": correlated, "sign-shift": sign_shift, "bimodal": bimodal, "skewed": skewed}
    return {k: GridDensity2D.from_function(v, x_grid, y_grid) for k, v in fns.items()}

