import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_kinetic.fields import AnalyticState, PhaseGrid
from gevrey_kinetic.kolmogorov import (
    BracketViolation, ExponentCache, SeparableInit, bracket_bounds_scan, derivative_norm_exact,
    derivative_norms_exact, evolve_exact, exponent_integral, exponent_integral_1d, l2_eta_norm,
)


def _brute(t, k, eta, s):
    # tanh-sinh quadrature in extended precision, split at the kink of |eta + r k|
    k, eta = np.atleast_1d(np.asarray(k, float)), np.atleast_1d(np.asarray(eta, float))
    kk = float(k @ k)
    with mpmath.workdps(30):
        ks, es = [mpmath.mpf(float(x)) for x in k], [mpmath.mpf(float(x)) for x in eta]
        f = lambda r: mpmath.sqrt(sum((e + r * q) ** 2 for e, q in zip(es, ks))) ** (2 * mpmath.mpf(s))
        nodes = [mpmath.mpf(0), mpmath.mpf(t)]
        if kk > 0:
            rs = -float(eta @ k) / kk
            if 0 < rs < t:
                nodes.insert(1, mpmath.mpf(rs))
        return float(mpmath.quad(f, nodes))


# -- exponent integral -----------------------------------------------------------

@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_exponent_k0_eta1(s):
    assert exponent_integral(1.0, [0, 0, 0], [1, 0, 0], s) == pytest.approx(1.0, rel=1e-14)


def test_exponent_eta0_s_half():
    assert exponent_integral(2.0, [1.0], [0.0], 0.5) == pytest.approx(2.0, rel=1e-14)


def test_exponent_parallel_s_half():
    assert exponent_integral(1.0, [1.0], [1.0], 0.5) == pytest.approx(1.5, rel=1e-14)


def test_exponent_negative_time():
    with pytest.raises(ValueError):
        exponent_integral(-1.0, [1.0], [0.0], 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 10), st.lists(st.integers(-8, 8), min_size=3, max_size=3),
       st.lists(st.floats(-32, 32), min_size=3, max_size=3), st.floats(0.05, 0.95))
def test_exponent_matches_independent_quadrature(t, k, eta, s):
    val = exponent_integral(t, k, eta, s)
    ref = _brute(t, k, eta, s)
    assert val == pytest.approx(ref, rel=1e-8, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 10), st.floats(-8, 8), st.floats(-40, 40), st.floats(0.05, 0.95))
def test_exponent_1d_closed_form(t, k, eta, s):
    assert float(exponent_integral_1d(t, k, eta, s)) == pytest.approx(_brute(t, [k], [eta], s), rel=1e-9, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.lists(st.integers(-4, 4), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.sampled_from([0.25, 0.5, 0.75]))
def test_exponent_cache_invariants(t1, dt, k, eta, s):
    cache = ExponentCache(s)
    a, b = cache(t1, k, eta), cache(t1 + dt, k, eta)
    assert a >= 0 and b >= a * (1 - 1e-12)
    assert cache(0.0, k, eta) == 0.0


def test_exponent_cache_memoises():
    cache = ExponentCache(0.5)
    cache(1.0, [1, 0, 0], [0.3, 0.2, 0])
    assert len(cache.values) == 1
    cache(1.0, [1, 0, 0], [0.3, 0.2, 0])
    assert len(cache.values) == 1


def test_exponent_cache_bracket_assertion():
    cache = ExponentCache(0.5, slack=-2.0)  # impossible bracket
    with pytest.raises(BracketViolation):
        cache(1.0, [1, 0, 0], [0.5, 0, 0])


# -- bracket scan -------------------------------------------------------------------

def test_bracket_eta_zero_family_s_half():
    scan = bracket_bounds_scan(0.5, 400)
    assert scan.eta_zero_ratio == pytest.approx(0.5, abs=1e-12)


def test_bracket_cancellation_point_s_half():
    t = 1.3
    # hand integral: int_0^t |rho - t/2| d rho = t^2/4
    assert _brute(t, [1.0], [-t / 2], 0.5) == pytest.approx(t * t / 4, rel=1e-12)
    val = exponent_integral(t, [1.0, 0, 0], [-t / 2, 0, 0], 0.5)
    assert val == pytest.approx(t * t / 4, rel=1e-13)
    den = t * (t / 2) + t ** 2 * 1.0
    assert val / den == pytest.approx(1 / 6, rel=1e-13)
    assert bracket_bounds_scan(0.5, 400).cancellation_ratio == pytest.approx(1 / 6, abs=1e-12)


def test_bracket_s_quarter_stable():
    a = bracket_bounds_scan(0.25, 2000)
    b = bracket_bounds_scan(0.25, 4000)
    assert 0 < a.c_lower <= a.c_upper < math.inf
    assert abs(b.c_lower / a.c_lower - 1) <= 0.02
    assert abs(b.c_upper / a.c_upper - 1) <= 0.02


def test_bracket_rejects_bad_s():
    with pytest.raises(ValueError):
        bracket_bounds_scan(1.0)


# -- exact evolution ------------------------------------------------------------------

GAUSS = AnalyticState.gaussian(1, 1, width=1.0)


def test_evolve_t0_is_identity():
    g = PhaseGrid(K=2, N_v=32)
    init = AnalyticState.gaussian(1, 1, k=1, center=0.4) + GAUSS
    out = evolve_exact(init, 0.0, 0.5, g)
    for i, k in enumerate(g.ks):
        assert np.allclose(out.values[i], init.fourier_v((int(k),), g.eta1d), atol=1e-15)


def test_evolve_k0_gaussian():
    eta = np.linspace(-6, 6, 41)
    out = evolve_exact(GAUSS, 1.0, 0.5)
    expect = math.sqrt(2 * math.pi) * np.exp(-np.abs(eta)) * np.exp(-eta ** 2 / 2)
    assert np.allclose(out(0, eta), expect, rtol=1e-13, atol=0)


def test_evolve_negative_time():
    with pytest.raises(ValueError):
        evolve_exact(GAUSS, -0.1, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 5), st.integers(-3, 3), st.sampled_from([0.25, 0.5, 0.75]))
def test_evolve_l2_non_increasing(t, k, s):
    init = AnalyticState.gaussian(1, 1, k=k, center=0.2, width=0.9)
    n0 = l2_eta_norm(init, 0.0, float(k), s)
    assert l2_eta_norm(init, t, float(k), s) <= n0 * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 2), st.floats(0.01, 2), st.integers(-3, 3), st.sampled_from([0.25, 0.5, 0.75]))
def test_evolve_semigroup(t1, t2, k, s):
    init = AnalyticState.gaussian(1, 1, k=k, width=1.0)
    eta = np.linspace(-5, 5, 21)
    once = evolve_exact(init, t1 + t2, s)(k, eta)
    twice = evolve_exact(evolve_exact(init, t1, s), t2, s)(k, eta)
    scale = np.max(np.abs(once)) + 1e-300
    assert np.max(np.abs(once - twice)) <= 1e-10 * scale


# -- derivative norms ----------------------------------------------------------------

def test_derivative_norm_order_zero_is_plain_norm():
    init = AnalyticState.gaussian(1, 1, k=1) + AnalyticState.gaussian(1, 1, k=2, coef=0.5)
    d = derivative_norm_exact(2.0, 0, 0, init, 0.5, ks=[1, 2])
    # the solution norm is non-increasing in t, so the time sup is the initial norm
    plain = l2_eta_norm(init, 0.0, 1.0, 0.5) + l2_eta_norm(init, 0.0, 2.0, 0.5)
    assert d.value == pytest.approx(plain, rel=1e-3)
    assert d.value <= plain * (1 + 1e-12)


def test_derivative_norm_first_order_bounded():
    init = AnalyticState.gaussian(1, 1, k=1) + AnalyticState.gaussian(1, 1, k=-1)
    g0 = sum(l2_eta_norm(init, 0.0, float(k), 0.5) for k in (-1, 1))
    d = derivative_norm_exact(4.0, 1, 0, init, 0.5)
    assert 0 < d.value < 10 * g0


def test_derivative_norm_factorial_envelope():
    init = SeparableInit(lambda k: 1.0 / (1.0 + np.asarray(k, float) ** 2), GAUSS)
    ms = list(range(1, 17))
    res = derivative_norms_exact(40.0, ms, "x", init, 0.5, ks=np.arange(1, 33), n_t=120)
    ratios = [r.value / math.factorial(m) ** (1 / (2 * 0.5)) for m, r in zip(ms, res)]
    # N_m / (m!)^{1/(2s)} <= C^m for a single finite C
    C = max(r ** (1 / m) for m, r in zip(ms, ratios))
    assert math.isfinite(C)
    tail = [r ** (1 / m) for m, r in zip(ms, ratios)][8:]
    assert max(tail) / min(tail) < 1.5


def test_derivative_norm_mixed_and_velocity():
    init = AnalyticState.gaussian(1, 1, k=1)
    v = derivative_norm_exact(1.0, 0, 2, init, 0.5)
    xv = derivative_norm_exact(1.0, 1, 1, init, 0.5)
    assert v.value > 0 and xv.value > 0 and v.direction == "v" and xv.direction == "xv"


def test_derivative_norm_rejects_high_order():
    with pytest.raises(ValueError):
        derivative_norms_exact(1.0, [30], "x", GAUSS, 0.5)
    with pytest.raises(ValueError):
        derivative_norms_exact(1.0, [1], "y", GAUSS, 0.5)


def test_derivative_norm_noise_floor_flag():
    init = SeparableInit(lambda k: np.ones_like(np.asarray(k, float)), GAUSS)
    res = derivative_norms_exact(1e4, [1, 24], "x", init, 0.5, ks=np.arange(1, 65), n_t=60)
    assert res[-1].floor_ratio < 1e-13
    assert res[-1].flagged


def test_exponent_subnormal_inputs():
    # for t |k| << |eta| the integrand is constant: I = t |eta|^{2s}
    assert float(exponent_integral_1d(1.0, 2.225073858507e-311, 2.220446049250313e-16, 0.5)) == pytest.approx(
        2.220446049250313e-16, rel=1e-12)
    assert ExponentCache(0.25)(5e-324, [0, 1, 0], [0.0, 0.0, 1.0]) == 5e-324
