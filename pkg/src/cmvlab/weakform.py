"""Weak stationary Fokker-Planck residuals over a fixed test-function dictionary.

For a grid density ``q`` and test function ``phi`` the residual is
``sum (L phi) q dx dy`` where ``L`` is the generator of either the original
system (conditional factor in the X-diffusion) or the transformed one
(conditional factor in the Y-coefficients), with the ``G`` fields read off
``q`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condexp import exact_G_from_grid
from .errors import InputError
from .grid import GridDensity2D

EQUATIONS = ("original", "transformed")


@dataclass(frozen=True)
class Bump:
    """Tensor bump ``B((x - cx) / wx) * B((y - cy) / wy)`` with ``B(u) = (1 - u**2)**4`` on ``|u| < 1``."""

    cx: float
    cy: float
    wx: float
    wy: float

    @staticmethod
    def _b(u):
        s = np.clip(1.0 - u * u, 0.0, None)
        return s**4, -8.0 * u * s**3, -8.0 * s**3 + 48.0 * u * u * s**2

    def derivatives(self, X, Y):
        """``(phi, phi_x, phi_y, phi_xx, phi_yy)`` on the mesh."""
        bx, dbx, ddbx = self._b((X - self.cx) / self.wx)
        by, dby, ddby = self._b((Y - self.cy) / self.wy)
        return (
            bx * by,
            dbx * by / self.wx,
            bx * dby / self.wy,
            ddbx * by / self.wx**2,
            bx * ddby / self.wy**2,
        )

    def support(self):
        return (self.cx - self.wx, self.cx + self.wx), (self.cy - self.wy, self.cy + self.wy)


def _dictionary():
    c = (-2.25, -0.75, 0.75, 2.25)
    out = [Bump(x, y, 1.5, 1.5) for x in c for y in c]
    out += [Bump(0.0, 0.0, 3.0, 3.0), Bump(1.0, -1.0, 2.0, 2.5), Bump(-1.0, 1.0, 2.5, 2.0), Bump(0.0, 0.0, 1.0, 1.0)]
    return tuple(out)


TEST_DICTIONARY = _dictionary()


def generator_coefficients(q: GridDensity2D, cs, equation):
    """Coefficients ``(a_xx, a_yy, drift_x, drift_y)`` on the mesh, multiplying
    ``phi_xx, phi_yy, phi_x, phi_y`` respectively."""
    x, y = q.x_grid, q.y_grid
    s1 = 0.5 * cs.sigma1(x) ** 2
    s2 = 0.5 * cs.sigma2(y) ** 2
    b1, b2 = cs.b1(x), cs.b2(y)
    if equation == "original":
        Gf2 = exact_G_from_grid(q, cs.f2).values
        Gh = exact_G_from_grid(q, cs.h).values
        axx = np.outer(s1 * Gf2, cs.f2(y))
        ayy = np.broadcast_to(s2[None, :], q.shape)
        dx_ = np.outer(b1 * Gh, cs.h(y))
        dy_ = np.broadcast_to(b2[None, :], q.shape)
    elif equation == "transformed":
        Ginv = exact_G_from_grid(q, cs.f2inv).values
        Ghf = exact_G_from_grid(q, cs.hf2inv).values
        finv = cs.f2inv(y)
        axx = np.broadcast_to(s1[:, None], q.shape)
        ayy = np.outer(Ginv, s2 * finv)
        dx_ = np.outer(b1 * Ghf, cs.hf2inv(y))
        dy_ = np.outer(Ginv, b2 * finv)
    else:
        raise InputError(f"unknown equation {equation!r}")
    return axx, ayy, dx_, dy_


def weak_residual(q: GridDensity2D, cs, equation="transformed", dictionary=TEST_DICTIONARY):
    """Vector of ``int (L phi) q`` over the dictionary (cell-mass quadrature)."""
    axx, ayy, ddx, ddy = generator_coefficients(q, cs, equation)
    X, Y = q.mesh()
    w = q.values * q.dx * q.dy
    out = np.empty(len(dictionary))
    for k, phi in enumerate(dictionary):
        _, px, py, pxx, pyy = phi.derivatives(X, Y)
        out[k] = np.sum((axx * pxx + ayy * pyy + ddx * px + ddy * py) * w)
    return out


def richardson_estimate(r_fine, r_coarse, h_fine, h_coarse, order=2):
    """Error estimate ``|r_fine - r_coarse| / ((h_coarse / h_fine)**order - 1)`` (max-norm)."""
    ratio = (h_coarse / h_fine) ** order - 1.0
    if not ratio > 0:
        raise InputError("coarse spacing must exceed fine spacing")
    return float(np.max(np.abs(np.asarray(r_fine) - np.asarray(r_coarse))) / ratio)
