"""Density transformations moving the conditional term between coordinates.

``T p = p * f**2(y) * G^{f**2; p}(x)`` moves the conditional factor out of the
X-diffusion; its inverse is ``p = Tp * f**-2(y) * G^{f**-2; Tp}(x)``. With the
column-sum quadrature used by :func:`exact_G_from_grid`, the first marginal
is preserved and the round trip is the identity up to rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .coefficients import PowerProduct
from .condexp import exact_G_from_grid
from .errors import DegenerateDensityError
from .grid import GridDensity2D

log = logging.getLogger(__name__)

MASS_DEFECT_WARN = 1e-6
DEGENERATE_FRACTION = 0.01


@dataclass(frozen=True)
class TransformInfo:
    mass_defect: float
    invalid_columns: int


def _check_support(valid):
    """Reject densities with holes (sub-floor columns strictly inside the support)."""
    idx = np.flatnonzero(valid)
    inner = valid[idx[0] : idx[-1] + 1]
    holes = int(np.count_nonzero(~inner))
    if holes > DEGENERATE_FRACTION * valid.size:
        raise DegenerateDensityError(f"{holes} of {valid.size} columns inside the support carry no mass")
    return int(np.count_nonzero(~valid))


def _reweight(p: GridDensity2D, weight, psi, psi_bounds):
    G, valid = exact_G_from_grid(p, psi, psi_bounds, return_valid=True)
    invalid = _check_support(valid)
    raw = p.values * weight[None, :] * G.values[:, None]
    mass = raw.sum() * p.dx * p.dy
    defect = abs(mass - 1.0)
    if defect > MASS_DEFECT_WARN:
        log.warning("transformation mass defect %.3e exceeds %.0e", defect, MASS_DEFECT_WARN)
    out = GridDensity2D.from_unnormalized(p.x_grid, p.y_grid, raw)
    return out, TransformInfo(float(defect), invalid)


def _bounds_sq(f_bounds, power):
    if f_bounds is None:
        return None
    lo, hi = f_bounds
    return (lo * lo, hi * hi) if power > 0 else (1.0 / (hi * hi), 1.0 / (lo * lo))


def apply_T(p: GridDensity2D, f, f_bounds=None, return_info=False):
    """Forward transformation ``p -> p f**2 G^{f**2; p}``."""
    f2 = PowerProduct([(f, 2)])
    out, info = _reweight(p, f2(p.y_grid), f2, _bounds_sq(f_bounds, 2))
    return (out, info) if return_info else out


def apply_T_inverse(pt: GridDensity2D, f, f_bounds=None, return_info=False):
    """Inverse transformation ``pt -> pt f**-2 G^{f**-2; pt}``."""
    f2inv = PowerProduct([(f, -2)])
    out, info = _reweight(pt, f2inv(pt.y_grid), f2inv, _bounds_sq(f_bounds, -2))
    return (out, info) if return_info else out


def apply_independence_transform(p: GridDensity2D, f):
    """Global reweighting ``p -> f**2 p / int f**2 p``."""
    w = f(p.y_grid) ** 2
    return GridDensity2D.from_unnormalized(p.x_grid, p.y_grid, p.values * w[None, :])
