import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import pinned_models
from oracles import mp_iout_of_rho
from wptconvex import DomainError, ParamCurve, ValidationError, certify_convexity, diout_drho, dpdc_dd, p_dc, rho
from wptconvex.calculus import Verdict, dpdc_dq, second_differences


def test_diout_at_zero_power(model):
    p = model.params
    assert diout_drho(model, 0.0) == pytest.approx(1.0 / (p.load_slope * p.i_s + 1.0), rel=1e-15)


def test_diout_positive(model):
    assert np.all(diout_drho(model, np.logspace(-9, 2, 50)) > 0)


def test_diout_matches_finite_difference(model):
    r0 = rho(model, 0.01)
    h = r0 * 1e-6
    fd = float((mp_iout_of_rho(model.params, r0 + h) - mp_iout_of_rho(model.params, r0 - h)) / (2 * h))
    assert diout_drho(model, 0.01) == pytest.approx(fd, rel=1e-6)


def test_dpdc_dd_sign(model):
    d = np.logspace(-4, 3, 40)
    assert np.all(dpdc_dd(model, 0.01, d) < 0)


def _fd_pathloss(model, q0, d):
    h = d * 1e-6
    return (p_dc(model, q0 / (d + h)) - p_dc(model, q0 / (d - h))) / (2 * h)


def test_dpdc_dd_matches_finite_difference(model):
    assert dpdc_dd(model, 0.01, 4.0) == pytest.approx(_fd_pathloss(model, 0.01, 4.0), rel=1e-6)


def test_dpdc_dd_scaling_at_equal_power(model):
    # same received power q0/d; the chain-rule factor -q0/d^2 doubles when both halve
    full = dpdc_dd(model, 0.01, 4.0)
    half = dpdc_dd(model, 0.005, 2.0)
    assert half == pytest.approx(2.0 * full, rel=1e-14)
    assert half == pytest.approx(_fd_pathloss(model, 0.005, 2.0), rel=1e-6)


def test_dpdc_dq_finite_difference(model):
    q = np.logspace(-8, 0, 30)
    h = q * 1e-6
    fd = (p_dc(model, q + h) - p_dc(model, q - h)) / (2 * h)
    assert np.allclose(dpdc_dq(model, q), fd, rtol=1e-6, atol=0)


@pytest.mark.parametrize("d", [0.0, -1.0, np.inf])
def test_dpdc_dd_domain(model, d):
    with pytest.raises(DomainError):
        dpdc_dd(model, 0.01, d)
    with pytest.raises(DomainError):
        dpdc_dd(model, 0.0, 1.0)


def test_gradient_sweep(model):
    d = np.logspace(-2, 2, 100)
    assert np.allclose(dpdc_dd(model, 0.01, d), _fd_pathloss(model, 0.01, d), rtol=1e-6, atol=0)


def test_second_differences_uniform():
    v = np.array([1.0, 4.0, 2.0, 8.0, 3.0])
    sd = second_differences(np.arange(5.0), v)
    assert np.isnan(sd[0]) and np.isnan(sd[-1])
    assert np.allclose(sd[1:-1], np.diff(v, 2))


def test_second_differences_nonuniform_linear_is_zero():
    u = np.array([0.1, 0.3, 1.0, 1.1, 4.0])
    assert np.allclose(second_differences(u, 3 * u - 2)[1:-1], 0.0, atol=1e-14)


def test_reciprocal_certificate(model):
    report = certify_convexity(model, ParamCurve.reciprocal(2.0), np.logspace(0, 6, 200))
    assert report.condition14_min > 0
    assert report.condition9_min >= 0
    assert report.verdict["numerically_convex"]
    assert report.verdict["i_out_numerically_convex"]
    assert report.status is Verdict.CERTIFIED
    # closed form Q''Q - Q'^2 = a^2 / u^4
    assert np.allclose(report.cond14, 4.0 / report.grid**4, rtol=1e-14)


def test_linear_curve_fails_sufficient_condition_only(model):
    a = 1e-3
    u = np.linspace(1e-3, 0.1, 50)  # small-signal range: P ~ Q^2 is convex in u
    report = certify_convexity(model, ParamCurve.custom(lambda x: a * x), u)
    assert np.allclose(report.cond14, -(a**2), rtol=1e-5)
    assert not report.verdict["power_condition"]
    assert report.verdict["numerically_convex"]
    assert report.status is Verdict.CONDITION_FAILED


def test_linear_curve_over_saturation_is_flagged(model):
    report = certify_convexity(model, ParamCurve.custom(lambda x: x), np.linspace(0.1, 10.0, 100))
    assert report.status is Verdict.SECOND_DIFF_VIOLATION


@pytest.mark.parametrize(
    "grid",
    [[1, 2, 3, 4], [1, 2, 2, 3, 4], [0, 1, 2, 3, 4], [5, 4, 3, 2, 1], [1, 2, np.nan, 4, 5]],
)
def test_grid_validation(model, grid):
    with pytest.raises(ValidationError):
        certify_convexity(model, ParamCurve.reciprocal(), grid)


def test_curve_validation():
    with pytest.raises(ValidationError):
        ParamCurve.reciprocal(0.0)
    with pytest.raises(ValidationError):
        ParamCurve.custom(None)


def test_report_rows(model):
    report = certify_convexity(model, ParamCurve.reciprocal(), np.logspace(0, 2, 6))
    rows = list(report.rows())
    assert len(rows) == 6
    assert set(rows[0]) == {"u", "q_rf_w", "i_out_a", "p_dc_w", "second_diff", "cond9", "cond14"}
    assert report.summary()["status"] == "certified convex"


@pytest.mark.parametrize("name, m", list(pinned_models()))
def test_pdc_convex_in_reciprocal_power(name, m):
    report = certify_convexity(m, ParamCurve.reciprocal(1.0), np.logspace(0, 6, 200))
    assert report.second_diff_min >= -1e-12 * np.max(np.abs(report.p_dc)), name


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.2, 3.0), a=st.floats(1e-4, 1.0), lo=st.floats(0.1, 10.0))
def test_power_condition_implies_rho_condition(model, k, a, lo):
    # Q = a u^-k has Q''Q - Q'^2 = k a^2 u^(-2k-2) > 0
    u = np.geomspace(lo, lo * 100, 60)
    report = certify_convexity(model, ParamCurve.custom(lambda x: a * x**-k), u)
    assert report.condition14_min >= 0
    scale = np.max(np.abs(report.cond9))
    assert report.condition9_min >= -1e-6 * scale
    assert report.verdict["numerically_convex"]


@settings(max_examples=30, deadline=None)
@given(k=st.floats(-3.0, 3.0), a=st.floats(1e-4, 1.0), lo=st.floats(0.1, 10.0))
def test_rho_condition_certifies_current_convexity(model, k, a, lo):
    u = np.geomspace(lo, lo * 20, 60)
    report = certify_convexity(model, ParamCurve.custom(lambda x: a * x**k), u)
    ok = report.cond9[1:-1] >= 0
    tol = 1e-12 * np.max(report.i_out)
    assert np.all(report.i_out_second_diff[1:-1][ok] >= -tol)
