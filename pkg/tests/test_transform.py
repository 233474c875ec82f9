import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmvlab.coefficients import catalog, constant, logistic
from cmvlab.condexp import exact_G_from_grid
from cmvlab.errors import DegenerateDensityError
from cmvlab.grid import GridDensity2D, uniform_grid
from cmvlab.transform import apply_independence_transform, apply_T, apply_T_inverse

FS = [catalog(n).f for n in ("independence", "tanh-vol", "cubic")]


@pytest.mark.parametrize("fi", range(3))
def test_roundtrip_and_marginals(densities, fi):
    f = FS[fi]
    for p in densities.values():
        tp = apply_T(p, f)
        assert apply_T_inverse(tp, f).l1_distance(p) < 1e-8
        assert np.max(np.abs(tp.x_marginal - p.x_marginal)) < 1e-8


def test_g_composition_identity(densities):
    f = FS[0]
    f2inv = lambda y: f(y) ** -2
    psi = lambda y: 1.5 + np.sin(y)
    for p in densities.values():
        tp = apply_T(p, f)
        lhs, valid = exact_G_from_grid(p, psi, (0.5, 2.5), return_valid=True)
        num = exact_G_from_grid(tp, lambda y: psi(y) * f2inv(y), (1e-3, 1e3)).raw
        den = exact_G_from_grid(tp, f2inv, (0.25, 1.0)).raw
        assert np.max(np.abs(lhs.raw - num / den)[valid]) < 1e-8


def test_constant_f_is_identity(densities):
    for p in densities.values():
        assert apply_T(p, constant(1.7)).l1_distance(p) < 1e-12


def test_independence_transform_on_product(grid101):
    x, y = grid101
    f = logistic(1.0, 2.0)
    p = GridDensity2D.from_function(lambda X, Y: np.exp(-0.5 * (X**2 + Y**2)), x, y)
    # on a product density T reduces to the global reweighting
    assert apply_T(p, f).l1_distance(apply_independence_transform(p, f)) < 1e-12


def test_mass_defect_reported(densities):
    _, info = apply_T(densities["bimodal"], FS[0], return_info=True)
    assert info.mass_defect < 1e-12
    assert info.invalid_columns == 0


def test_holes_rejected():
    x = uniform_grid(-3, 3, 61)
    v = np.exp(-0.5 * np.add.outer(x**2, x**2))
    v[20:30] = 0.0
    p = GridDensity2D.from_unnormalized(x, x, v)
    with pytest.raises(DegenerateDensityError):
        apply_T(p, FS[0])


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(-0.9, 0.9), shift=st.floats(-1.0, 1.0), lo=st.floats(0.3, 2.0), amp=st.floats(0.1, 3.0))
def test_roundtrip_property(rho, shift, lo, amp):
    x = uniform_grid(-5, 5, 41)
    p = GridDensity2D.from_function(
        lambda X, Y: np.exp(-((X - shift) ** 2 - 2 * rho * (X - shift) * Y + Y**2) / (2 * (1 - rho**2))), x, x)
    f = logistic(lo, lo + amp)
    assert apply_T_inverse(apply_T(p, f), f).l1_distance(p) < 1e-8
