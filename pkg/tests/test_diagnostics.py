import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from gevrey_kinetic.diagnostics import (
    FitError, RadiusCurve, gevrey_fit, radius_estimate, radius_fit, scaling_exponent,
)
from gevrey_kinetic.experiments import gevrey_index, radius_scaling


# -- gevrey_fit -----------------------------------------------------------------

def test_gevrey_fit_synthetic_exact():
    ms = np.arange(1, 13)
    N = 2.0 ** ms * np.exp(0.5 * gammaln(ms + 1))
    fit = gevrey_fit(N, ms)
    assert fit.tau_hat == pytest.approx(0.5, abs=1e-12)
    assert fit.logC_hat == pytest.approx(math.log(2), abs=1e-12)
    assert fit.n_points == 12 and fit.window == (1, 12)


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("C", [0.5, 2.0, 10.0])
def test_gevrey_fit_recovers_model_class(tau, C):
    ms = np.arange(1, 17)
    N = np.exp(ms * math.log(C) + tau * gammaln(ms + 1))
    fit = gevrey_fit(N, ms)
    assert abs(fit.tau_hat - tau) <= 1e-9 and abs(fit.logC_hat - math.log(C)) <= 1e-9


def test_gevrey_fit_with_intercept():
    ms = np.arange(1, 13)
    N = 7.0 * 3.0 ** ms * np.exp(1.5 * gammaln(ms + 1))
    fit = gevrey_fit(N, ms, intercept=True)
    assert fit.tau_hat == pytest.approx(1.5, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(7.0), abs=1e-8)


def test_gevrey_fit_needs_four_points():
    with pytest.raises(FitError):
        gevrey_fit([1.0, 2.0, 3.0], [1, 2, 3])
    with pytest.raises(FitError):
        gevrey_fit(np.ones(8), np.arange(1, 9), flagged=[False] * 3 + [True] * 5)


def test_gevrey_fit_window_cut_at_flag():
    ms = np.arange(1, 11)
    N = np.exp(gammaln(ms + 1))
    fit = gevrey_fit(N, ms, flagged=[m >= 7 for m in ms])
    assert fit.window == (1, 6)


def test_kolmogorov_gevrey_index_s_half():
    res = gevrey_index(0.5)
    assert res.summary["tau_hat"] == pytest.approx(1.0, abs=0.1)


@pytest.mark.slow
def test_kolmogorov_gevrey_index_s_quarter():
    res = gevrey_index(0.25)
    assert res.summary["tau_hat"] == pytest.approx(2.0, abs=0.2)


# -- radius ------------------------------------------------------------------------

def test_radius_estimate_exponential():
    ks = np.arange(1, 40)
    assert radius_estimate(ks, np.exp(-0.3 * ks), 1.0) == pytest.approx(0.3, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(1e-6, 1e6), st.sampled_from([0.5, 1.0, 2.0]))
def test_radius_estimate_scale_invariant(c, a, tau):
    ks = np.arange(1, 13, dtype=float)
    amps = np.exp(-c * ks ** (1 / tau)) * (1 + 0.01 * np.sin(ks))
    base = radius_fit(ks, amps, tau, floor=0.0)
    scaled = radius_fit(ks, a * amps, tau, floor=0.0)
    assert scaled.c == pytest.approx(base.c, rel=1e-9)
    assert scaled.intercept == pytest.approx(base.intercept + math.log(a), abs=1e-8)


def test_radius_needs_modes_above_floor():
    ks = np.arange(1, 40)
    with pytest.raises(FitError):
        radius_fit(ks, np.exp(-10.0 * ks), 1.0)


def test_radius_curve_validation():
    with pytest.raises(ValueError):
        RadiusCurve([1.0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        RadiusCurve([1.0, 2.0], [1.0, -2.0])


@pytest.mark.slow
def test_kolmogorov_radius_slopes_s_half():
    res = radius_scaling(0.5)
    assert res.summary["slope_x"] == pytest.approx(2.0, rel=0.1)
    assert res.summary["slope_v"] == pytest.approx(1.0, rel=0.1)


# -- scaling exponent --------------------------------------------------------------

def test_scaling_exponent_power_law():
    t = np.logspace(-1, 1, 9)
    fit = scaling_exponent(RadiusCurve(t, 0.7 * t ** 2))
    assert abs(fit.slope - 2.0) <= 1e-6
    assert fit.ci[0] == pytest.approx(2.0, abs=1e-6) and fit.ci[1] == pytest.approx(2.0, abs=1e-6)
    assert fit.n_boot == 200


def test_scaling_exponent_is_reproducible():
    t = np.logspace(0, 1.2, 8)
    r = t ** 1.3 * (1 + 0.05 * np.cos(3 * t))
    a, b = scaling_exponent(t, r, seed=4), scaling_exponent(t, r, seed=4)
    assert a.ci == b.ci and a.slope == b.slope


def test_scaling_exponent_errors():
    with pytest.raises(FitError):
        scaling_exponent(np.arange(1, 5), np.arange(1, 5))
    with pytest.raises(FitError):
        scaling_exponent(np.linspace(1, 2, 8), np.linspace(1, 2, 8))


def test_scaling_exponent_flags_noise():
    t = np.logspace(0, 2, 12)
    r = np.where(np.arange(12) % 2, 1e3, 1e-3)
    with pytest.warns(RuntimeWarning):
        fit = scaling_exponent(t, r)
    assert fit.noisy

