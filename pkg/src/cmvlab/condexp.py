"""Estimators of the conditional-expectation field ``G(x) = 1 / E[psi(V) | U = x]``.

``G`` is written as the ratio ``(int p(x, y) dy) / (int psi(y) p(x, y) dy)``.
Three estimators are provided: bin averages and Nadaraya-Watson regression
over a particle cloud, and exact column quadrature over a grid density. All
outputs are clamped to ``[1 / C_psi, 1 / c_psi]`` when ``c_psi <= psi <= C_psi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import EstimationError, InputError

MASS_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray = None
    time: float = 0.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise InputError("xs and ys must be 1D arrays of equal length")
        if self.weights is None:
            w = np.full(xs.size, 1.0 / max(xs.size, 1))
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != xs.shape:
                raise InputError("weights must match particle count")
            if np.any(w < 0):
                raise InputError("weights must be nonnegative")
            if xs.size and abs(w.sum() - 1.0) > 1e-12:
                raise InputError(f"weights sum to {w.sum()!r}, not 1")
        if self.time < 0:
            raise InputError("time must be nonnegative")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.xs.size

    @property
    def uniform(self):
        return bool(np.all(self.weights == self.weights[0])) if len(self) else True


@dataclass(frozen=True, eq=False)
class CondExpectationField:
    """Values of ``G`` at ``grid`` nodes.

    Binning fields carry their bin ``edges`` and evaluate piecewise constant;
    the others interpolate linearly with flat extrapolation. ``raw`` keeps the
    pre-clamp values.
    """

    grid: np.ndarray
    values: np.ndarray
    psi_bounds: tuple
    method: str
    edges: np.ndarray = None
    raw: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.method not in ("binning", "kernel-regression", "exact-from-grid", "mollified", "constant"):
            raise InputError(f"unknown method {self.method!r}")
        g = np.asarray(self.grid, dtype=float)
        if g.size > 1 and np.any(np.diff(g) <= 0):
            raise InputError("grid must be strictly increasing")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.edges is not None:
            idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.values.size - 1)
            return self.values[idx]
        return np.interp(x, self.grid, self.values)

    @classmethod
    def constant(cls, value, grid=(0.0,), psi_bounds=(1.0, 1.0)):
        g = np.asarray(grid, dtype=float)
        return cls(g, np.full(g.size, float(value)), psi_bounds, "constant")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,G\n")
            for x, v in zip(self.grid, self.values):
                fh.write(f"{float(x)!r},{float(v)!r}\n")


@dataclass(frozen=True)
class MollifierConfig:
    bandwidth: float
    kernel_shape: str = "triangular"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise InputError("bandwidth must be positive")
        if self.kernel_shape not in ("triangular", "bump"):
            raise InputError(f"unknown kernel shape {self.kernel_shape!r}")

    def unit_kernel(self, u):
        """Kernel supported in [-1, 1] with unit integral."""
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) < 1
        if self.kernel_shape == "triangular":
            return np.where(inside, 1.0 - np.abs(u), 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            v = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - u * u, 1.0)), 0.0)
        return v / _bump_mass()

    @property
    def kernel_total_variation(self):
        """``int |kappa'|`` of the unit kernel (twice its peak for unimodal kernels)."""
        return 2.0 * float(self.unit_kernel(0.0))


@lru_cache(maxsize=None)
def _bump_mass():
    return quad(lambda u: np.exp(-1.0 / (1.0 - u * u)), -1, 1, epsabs=1e-14, epsrel=1e-14)[0]


def _resolve_bounds(psi, psi_bounds, sample):
    if psi_bounds is not None:
        lo, hi = float(psi_bounds[0]), float(psi_bounds[1])
    else:
        v = psi(sample)
        lo, hi = float(np.min(v)), float(np.max(v))
    if not 0 < lo <= hi:
        raise InputError(f"invalid psi bounds ({lo}, {hi})")
    return lo, hi


def _clamp(values, bounds):
    lo, hi = bounds
    return np.clip(values, 1.0 / hi, 1.0 / lo)


def _fill_nearest(values, valid):
    """Replace entries where ``valid`` is False by the nearest valid entry (ties go left)."""
    if valid.all():
        return values
    idx = np.flatnonzero(valid)
    pos = np.arange(values.size)
    right = np.clip(np.searchsorted(idx, pos), 0, idx.size - 1)
    left = np.clip(right - 1, 0, idx.size - 1)
    use_left = np.abs(pos - idx[left]) <= np.abs(idx[right] - pos)
    return values[np.where(use_left, idx[left], idx[right])]


def estimate_G_binning(cloud: ParticleCloud, psi, psi_bounds, bins, min_count=1, psi_values=None):
    """Bin-average estimator.

    Bins with effective (Kish) count below ``min_count`` inherit the value of
    the nearest populated bin. ``psi_values`` lets callers pass ``psi(cloud.ys)``
    when it is already available.
    """
    if len(cloud) == 0:
        raise InputError("empty particle cloud")
    if min_count < 1:
        raise InputError("min_count must be at least 1")
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InputError("bins must be a strictly increasing array of edges")
    xs, w = cloud.xs, cloud.weights
    if xs.min() < edges[0] or xs.max() > edges[-1]:
        raise InputError("bins do not cover the particle x-range")
    nb = edges.size - 1
    idx = np.clip(np.searchsorted(edges, xs, side="right") - 1, 0, nb - 1)
    bounds = _resolve_bounds(psi, psi_bounds, cloud.ys)
    centers = 0.5 * (edges[1:] + edges[:-1])
    if getattr(psi, "is_constant", False):
        binned_ratio(idx, nb, w, None, min_count)
        raw = np.full(nb, 1.0 / float(psi(np.zeros(1))[0]))
    else:
        pv = psi(cloud.ys) if psi_values is None else psi_values
        raw = binned_ratio(idx, nb, w, pv, min_count)
    return CondExpectationField(centers, _clamp(raw, bounds), bounds, "binning", edges=edges, raw=raw)


def binned_ratio(idx, nb, weights, psi_values, min_count=1):
    """Per-bin ``sum w / sum w psi`` given precomputed bin indices.

    ``weights=None`` means uniform weights (plain counts). Bins whose
    effective count is below ``min_count`` take the nearest valid bin's value.
    With ``psi_values=None`` only the population check is performed.
    """
    if weights is None:
        s1 = np.bincount(idx, minlength=nb).astype(float)
        neff = s1
    else:
        s1 = np.bincount(idx, weights=weights, minlength=nb)
        s2 = np.bincount(idx, weights=weights * weights, minlength=nb)
        with np.errstate(divide="ignore", invalid="ignore"):
            neff = np.where(s2 > 0, s1 * s1 / s2, 0.0)
    if psi_values is None:
        ratio_from_sums(s1, neff, None, min_count)
        return None
    wp = psi_values if weights is None else weights * psi_values
    return ratio_from_sums(s1, neff, np.bincount(idx, weights=wp, minlength=nb), min_count)


def ratio_from_sums(s1, neff, den, min_count=1):
    """``s1 / den`` on bins with ``neff >= min_count``, nearest-valid fill elsewhere."""
    valid = neff >= min_count - 1e-9
    if not valid.any():
        raise EstimationError(f"no bin reaches min_count={min_count}")
    if den is None:
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(valid, s1 / den, np.nan)
    return _fill_nearest(raw, valid)


def default_bandwidth(xs):
    """Rule-of-thumb bandwidth ``1.06 * std * N**(-1/5)``."""
    xs = np.asarray(xs)
    return 1.06 * float(np.std(xs)) * xs.size ** (-0.2)


def estimate_G_kernel(cloud: ParticleCloud, psi, psi_bounds, grid, bandwidth=None, chunk=32):
    """Nadaraya-Watson estimator with a Gaussian kernel, evaluated at ``grid`` nodes."""
    if len(cloud) == 0:
        raise InputError("empty particle cloud")
    if bandwidth is None:
        bandwidth = default_bandwidth(cloud.xs)
    if not bandwidth > 0:
        raise InputError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    bounds = _resolve_bounds(psi, psi_bounds, cloud.ys)
    if getattr(psi, "is_constant", False):
        raw = np.full(grid.size, 1.0 / float(psi(np.zeros(1))[0]))
        return CondExpectationField(grid, _clamp(raw, bounds), bounds, "kernel-regression", raw=raw)
    raw = 1.0 / kernel_regression(cloud.xs, psi(cloud.ys), grid, bandwidth, cloud.weights, chunk)
    return CondExpectationField(grid, _clamp(raw, bounds), bounds, "kernel-regression", raw=raw)


def kernel_regression(xs, values, grid, bandwidth, weights=None, chunk=32):
    """Nadaraya-Watson average ``sum w v K / sum w K`` with a Gaussian kernel at ``grid`` nodes."""
    xs = np.asarray(xs, dtype=float)
    w = np.full(xs.size, 1.0 / xs.size) if weights is None else np.asarray(weights, dtype=float)
    wv = w * np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    for start in range(0, grid.size, chunk):
        g = grid[start : start + chunk]
        d2 = (g[:, None] - xs[None, :]) ** 2 * inv
        # shift by the per-node minimum so far-away nodes do not underflow to 0/0
        K = np.exp(-(d2 - d2.min(axis=1, keepdims=True)))
        out[start : start + chunk] = (K @ wv) / (K @ w)
    return out


def exact_G_from_grid(p, psi, psi_bounds=None, return_valid=False):
    """Column quadrature of the defining ratio on a grid density.

    Columns whose mass falls below ``MASS_FLOOR`` take the nearest valid
    column's value.
    """
    y = p.y_grid
    bounds = _resolve_bounds(psi, psi_bounds, y)
    num = p.values.sum(axis=1)
    mass = num * p.dy
    valid = mass >= MASS_FLOOR
    if not valid.any():
        raise EstimationError("every column is below the mass floor")
    if getattr(psi, "is_constant", False):
        raw = np.full(p.x_grid.size, 1.0 / float(psi(np.zeros(1))[0]))
    else:
        den = p.values @ psi(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(valid, num / den, np.nan)
        raw = _fill_nearest(raw, valid)
    out = CondExpectationField(p.x_grid.copy(), _clamp(raw, bounds), bounds, "exact-from-grid", raw=raw)
    return (out, valid) if return_valid else out


def mollify_G(fld: CondExpectationField, cfg: MollifierConfig):
    """Convolve a field on a uniform grid with the scaled kernel ``kappa_b``.

    The sampled kernel is renormalized to unit discrete mass; boundaries use
    edge replication, so the output is a convex combination of input values.
    """
    g = np.asarray(fld.grid, dtype=float)
    if g.size < 2:
        raise InputError("mollification needs at least two grid nodes")
    d = np.diff(g)
    h = d[0]
    if np.max(np.abs(d - h)) > 1e-9 * abs(h):
        raise InputError("mollification requires a uniform grid")
    if cfg.bandwidth < h:
        raise InputError(f"bandwidth {cfg.bandwidth} smaller than grid spacing {h}")
    m = int(np.floor(cfg.bandwidth / h + 1e-12))
    offsets = np.arange(-m, m + 1) * h
    k = cfg.unit_kernel(offsets / cfg.bandwidth)
    k = k / k.sum()
    padded = np.concatenate((np.full(m, fld.values[0]), fld.values, np.full(m, fld.values[-1])))
    out = np.convolve(padded, k[::-1], mode="valid")
    return CondExpectationField(g.copy(), _clamp(out, fld.psi_bounds), fld.psi_bounds, "mollified", raw=out)


def weighted_l1(G1: CondExpectationField, G2: CondExpectationField, m, dx):
    """``int |G1 - G2| m dx`` on a common grid."""
    return float(np.sum(np.abs(G1.values - G2.values) * m) * dx)
