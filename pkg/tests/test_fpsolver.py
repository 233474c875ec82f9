import numpy as np
import pytest
import scipy.sparse as sp

from cmvlab.coefficients import catalog
from cmvlab.condexp import CondExpectationField, MollifierConfig
from cmvlab.errors import InputError, SolverError
from cmvlab.fpsolver import (
    bernoulli,
    build_operator,
    default_initial,
    k_diagnostics,
    null_vector,
    picard_iterate,
    solve_linear_fp,
)
from cmvlab.grid import GridDensity2D, product_density, uniform_grid
from cmvlab.particlesim import stationary_marginals
from cmvlab.transform import apply_T_inverse


def test_bernoulli_limits():
    z = np.array([-1e-12, 0.0, 1e-12, 1.0, -30.0, 30.0])
    b = bernoulli(z)
    assert b[1] == 1.0 and abs(b[0] - 1.0) < 1e-11
    assert b[3] == pytest.approx(1.0 / (np.e - 1.0))
    assert b[4] == pytest.approx(30.0, rel=1e-12)
    assert b[5] == pytest.approx(30.0 * np.exp(-30.0), rel=1e-10)


def test_operator_columns_sum_to_zero_and_m_matrix():
    cs = catalog("general")
    x = uniform_grid(-5, 5, 21)
    M = build_operator(cs, 0.7, 1.3, (x, x))
    assert np.max(np.abs(np.asarray(M.sum(axis=0)))) < 1e-10 * np.max(np.abs(M.diagonal()))
    off = M - sp.diags(M.diagonal())
    assert off.min() >= 0


def test_ou_product_recovered():
    cs = catalog("ou")
    x = uniform_grid(-6, 6, 81)
    p = solve_linear_fp(cs, 1.0, 1.0, (x, x))
    ref = GridDensity2D.from_function(lambda X, Y: np.exp(-0.5 * (X**2 + Y**2)), x, x)
    assert p.l1_distance(ref) < 1e-6


def test_nonuniform_grid_rejected():
    cs = catalog("ou")
    x = np.array([0.0, 1.0, 3.0, 4.0])
    with pytest.raises(InputError):
        build_operator(cs, 1.0, 1.0, (x, x))


def test_nonpositive_field_rejected():
    cs = catalog("ou")
    x = uniform_grid(-3, 3, 11)
    with pytest.raises(InputError):
        build_operator(cs, 0.0, 1.0, (x, x))


def test_inverse_iteration_reports_failure():
    M = sp.csc_matrix(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    v, res, k = null_vector(M)
    assert np.allclose(v, 0.5)
    with pytest.raises(SolverError):
        null_vector(sp.csc_matrix(np.array([[-1.0, 0.0], [0.0, -2.0]])), max_iters=2, tol=1e-30)


def test_picard_constant_f_one_iteration():
    x = uniform_grid(-6, 6, 48)
    _, rep = picard_iterate(catalog("ou-const-f", f0=1.5, h0=0.7), default_initial(x, x))
    assert rep.iterations == 1 and rep.converged


def test_picard_zero_budget():
    x = uniform_grid(-6, 6, 32)
    q, rep = picard_iterate(catalog("independence"), default_initial(x, x), max_iters=0)
    assert rep.iterations == 0 and not rep.converged


def test_picard_independence_matches_product():
    cs = catalog("independence")
    x = uniform_grid(-6, 6, 96)
    q, rep = picard_iterate(cs, default_initial(x, x))
    assert rep.converged and rep.iterations <= 200
    m1, m2 = stationary_marginals(cs)
    assert apply_T_inverse(q, cs.f).l1_distance(product_density(m1, m2, x, x)) < 1e-2


def test_picard_general_converges_with_mollifier():
    cs = catalog("general")
    x = uniform_grid(-6, 6, 64)
    q, rep = picard_iterate(cs, default_initial(x, x), mollify=MollifierConfig(0.5))
    assert rep.converged
    assert len(rep.fisher_history) == len(rep.l1_deltas)
    assert np.isfinite(rep.bkr_bound)


def test_picard_report_json(tmp_path):
    x = uniform_grid(-6, 6, 32)
    _, rep = picard_iterate(catalog("independence"), default_initial(x, x))
    rep.to_json(tmp_path / "r.json")
    import json

    assert json.loads((tmp_path / "r.json").read_text())["iterations"] == rep.iterations


def test_k_diagnostics_standard_normal():
    x = uniform_grid(-8, 8, 321)
    q = default_initial(x, x)
    kd = k_diagnostics(q)
    # Fisher information of N(0, I_2) is 2 and the second moment is 2
    assert kd.fisher_information == pytest.approx(2.0, rel=1e-3)
    assert kd.second_moment == pytest.approx(2.0, rel=1e-6)
    assert kd.marginal_floor[1.0] == pytest.approx(np.exp(-0.5) / np.sqrt(2 * np.pi), rel=1e-3)
