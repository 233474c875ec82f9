"""Distances between empirical clouds and reference laws.

Histogram L1 distances use an ``k x k`` partition whose edges are marginal
quantiles of a reference law (equal-probability bins), so every cell carries
enough particles for the distance to sit near its Monte Carlo floor. Outer
edges are infinite.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InputError

DEFAULT_BINS = 8


def pearson(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xc, yc = xs - xs.mean(), ys - ys.mean()
    den = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    return float(np.dot(xc, yc) / den) if den > 0 else float("nan")


def quantile_edges(quantile_fn, k=DEFAULT_BINS):
    """Inner edges at ``i / k`` quantiles, padded with infinite outer edges."""
    inner = np.asarray(quantile_fn(np.arange(1, k) / k), dtype=float)
    return np.concatenate(([-np.inf], inner, [np.inf]))


def empirical_quantile_edges(sample, k=DEFAULT_BINS):
    return quantile_edges(lambda u: np.quantile(np.asarray(sample, dtype=float), u), k)


def cell_probs(xs, ys, xedges, yedges, weights=None):
    """Empirical cell probabilities of a cloud."""
    h, _, _ = np.histogram2d(xs, ys, bins=(xedges, yedges), weights=weights)
    return h / h.sum()


def product_cell_probs(cdf_x, cdf_y, xedges, yedges):
    px = np.diff(np.asarray(cdf_x(np.clip(xedges, -1e300, 1e300)), dtype=float))
    py = np.diff(np.asarray(cdf_y(np.clip(yedges, -1e300, 1e300)), dtype=float))
    return np.outer(px, py)


def grid_cell_probs(p, xedges, yedges):
    """Cell probabilities of a grid density with each node's mass spread over its cell.

    The cumulative mass is exact at cell faces and interpolated bilinearly
    in between.
    """
    fx = np.concatenate(([p.x_grid[0] - 0.5 * p.dx], p.x_grid + 0.5 * p.dx))
    fy = np.concatenate(([p.y_grid[0] - 0.5 * p.dy], p.y_grid + 0.5 * p.dy))
    C = np.zeros((fx.size, fy.size))
    C[1:, 1:] = np.cumsum(np.cumsum(p.values, axis=0), axis=1) * p.dx * p.dy
    interp = RegularGridInterpolator((fx, fy), C)
    ex = np.clip(xedges, fx[0], fx[-1])
    ey = np.clip(yedges, fy[0], fy[-1])
    EX, EY = np.meshgrid(ex, ey, indexing="ij")
    F = interp(np.stack([EX.ravel(), EY.ravel()], axis=1)).reshape(EX.shape)
    probs = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    return np.clip(probs, 0.0, None)


def hist_l1(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InputError("cell-probability tables differ in shape")
    return float(np.abs(a - b).sum())


def independence_l1(xs, ys, k=DEFAULT_BINS):
    """Histogram L1 between a cloud and the product of its empirical marginals.

    With empirical-quantile edges every marginal cell holds ``1 / k`` of the
    mass (up to ties), so the product reference is ``1 / k**2`` per cell.
    """
    xe = empirical_quantile_edges(xs, k)
    ye = empirical_quantile_edges(ys, k)
    joint = cell_probs(xs, ys, xe, ye)
    return hist_l1(joint, np.outer(joint.sum(axis=1), joint.sum(axis=0)))
