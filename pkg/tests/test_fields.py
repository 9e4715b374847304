import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_kinetic.fields import (
    AnalyticState, KvField, ModelParams, PhaseGrid, inverse_transform_x, load_field, maxwellian,
    physical_x_grid, sample_analytic, save_field, transform_x, velocity_derivative, l2_norm_state,
    gauss_hermite_rule,
)
from gevrey_kinetic.inequalities import check_mu_bound


# -- maxwellian ------------------------------------------------------------

def test_maxwellian_at_origin_3d():
    assert maxwellian(np.zeros(3)) == pytest.approx((2 * np.pi) ** -1.5, rel=1e-15)
    assert maxwellian(np.zeros(3)) == pytest.approx(0.0634936, abs=1e-7)


def test_maxwellian_unit_mass_on_box():
    g = PhaseGrid(d_x=1, d_v=3, K=1, V=8.0, N_v=32)
    total = maxwellian(g.v_points()).sum() * g.h ** 3
    assert abs(total - 1.0) < 1e-10


def test_maxwellian_moments_3d():
    g = PhaseGrid(d_x=1, d_v=3, K=1, V=8.0, N_v=32)
    v = g.v_points()
    w = maxwellian(v) * g.h ** 3
    assert np.max(np.abs(v.T @ w)) < 1e-12
    second = (v.T * w) @ v
    assert np.allclose(second, np.eye(3), atol=1e-10)
    assert abs(np.sum(np.sum(v ** 2, axis=1) ** 2 * w) - 15.0) < 1e-9


def test_maxwellian_moment_error_shrinks_with_resolution():
    errs = []
    for n in (8, 12, 16):
        g = PhaseGrid(d_x=1, d_v=1, K=1, V=8.0, N_v=n)
        v = g.v1d
        errs.append(abs(np.sum(v ** 4 * maxwellian(v, d_v=1)) * g.h - 3.0))
    assert errs[0] > errs[1] > errs[2]


def test_sqrt_mu_derivative_bound():
    rep = check_mu_bound(p_max=10, v_max=6.0)
    assert rep.ok


def test_maxwellian_reduced_dimension():
    assert maxwellian(0.0) == pytest.approx((2 * np.pi) ** -0.5)


# -- ModelParams -------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(s=0.0), dict(s=1.0), dict(gamma=1.5), dict(K=0), dict(N_v=7),
                                dict(N_v=6), dict(theta_min=1.0), dict(dt=0.0), dict(d_v=2)])
def test_model_params_rejects_invalid(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_model_params_grid():
    g = ModelParams(K=4, N_v=16).grid()
    assert g.shape == (9, 16)


# -- transforms --------------------------------------------------------------

def test_single_mode_supported_on_k1():
    x = physical_x_grid(16)
    c = transform_x(np.exp(1j * x), d_x=1, K=5)
    assert abs(c[5 + 1] - 1.0) < 1e-14
    c[6] = 0.0
    assert np.max(np.abs(c)) < 1e-14


def test_constant_supported_on_k0():
    c = transform_x(np.full(16, 3.0), d_x=1, K=5)
    assert abs(c[5] - 3.0) < 1e-14
    c[5] = 0.0
    assert np.max(np.abs(c)) < 1e-14


def test_random_real_field_reality_symmetry():
    rng = np.random.default_rng(0)
    phys = rng.standard_normal((15, 15, 8))
    c = transform_x(phys, d_x=2)
    flipped = c[::-1, ::-1]
    assert np.max(np.abs(flipped - np.conj(c))) < 1e-12


def test_transform_dimension_mismatch():
    with pytest.raises(ValueError):
        transform_x(np.zeros((4, 5)), d_x=2)
    with pytest.raises(ValueError):
        transform_x(np.zeros(4), d_x=2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]), st.sampled_from([9, 15, 21]))
def test_roundtrip_and_parseval(seed, d_x, n):
    rng = np.random.default_rng(seed)
    shape = (n,) * d_x + (6,)
    phys = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c = transform_x(phys, d_x=d_x)
    back = inverse_transform_x(c, d_x=d_x)
    assert np.linalg.norm(back - phys) <= 1e-12 * np.linalg.norm(phys)
    phys_l2 = np.sum(np.abs(phys) ** 2) / n ** d_x
    assert abs(np.sum(np.abs(c) ** 2) - phys_l2) <= 1e-10 * phys_l2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_operations_preserve_reality(seed, a, b):
    rng = np.random.default_rng(seed)
    g = PhaseGrid(K=4, N_v=16)
    f1 = KvField(transform_x(rng.standard_normal((9, 16)), 1), g)
    f2 = KvField(transform_x(rng.standard_normal((9, 16)), 1), g)
    comb = f1.copy(a * f1.values + b * f2.values)
    assert comb.reality_defect() < 1e-12
    assert velocity_derivative(comb).reality_defect() < 1e-12


def test_velocity_transform_roundtrip():
    g = PhaseGrid(K=2, N_v=32)
    rng = np.random.default_rng(3)
    f = KvField(rng.standard_normal(g.shape) + 0j, g)
    back = KvField.from_v_transform(f.v_transform(), g)
    assert np.max(np.abs(back.values - f.values)) < 1e-13


def test_velocity_transform_matches_closed_form():
    g = PhaseGrid(K=1, N_v=64, V=10.0)
    st_ = AnalyticState.gaussian(d_x=1, d_v=1, k=1, poly={(1,): 1.0}, width=2 ** 0.5)
    f = sample_analytic(st_, g)
    exact = st_.fourier_v((1,), g.eta1d)
    assert np.max(np.abs(f.v_transform()[g.k_index((1,))] - exact)) < 1e-10


# -- analytic states ---------------------------------------------------------

def test_sample_sqrt_mu_equals_grid_values():
    g = PhaseGrid(d_x=1, d_v=1, K=2, N_v=32)
    f = sample_analytic(AnalyticState.sqrt_maxwellian(d_x=1, d_v=1), g)
    assert np.max(np.abs(f.column((0,)) - np.sqrt(maxwellian(g.v1d, d_v=1)))) < 1e-15
    assert np.max(np.abs(np.delete(f.values, 2, axis=0))) == 0.0


def test_sample_single_mode_profile():
    g = PhaseGrid(d_x=1, d_v=3, K=1, N_v=8)
    st_ = AnalyticState.gaussian(d_x=1, d_v=3, k=1, poly={(1, 0, 0): 1.0}, width=2 ** 0.5)
    f = sample_analytic(st_, g)
    v = g.v_points()
    expect = (v[:, 0] * np.exp(-np.sum(v ** 2, axis=1) / 4)).reshape(8, 8, 8)
    assert np.max(np.abs(f.column((1,)) - expect)) < 1e-15
    assert np.max(np.abs(f.column((0,)))) == 0 and np.max(np.abs(f.column((-1,)))) == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(-3, 3), st.integers(-3, 3))
def test_sampling_is_linear(a, b, k1, k2):
    g = PhaseGrid(K=3, N_v=16)
    s1 = AnalyticState.gaussian(k=k1, poly={(2,): 1.0}, center=0.5)
    s2 = AnalyticState.gaussian(k=k2, width=0.7)
    lhs = sample_analytic(s1 * a + s2 * b, g).values
    rhs = a * sample_analytic(s1, g).values + b * sample_analytic(s2, g).values
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_sampling_wavenumber_overflow():
    with pytest.raises(ValueError):
        sample_analytic(AnalyticState.gaussian(k=5), PhaseGrid(K=3, N_v=16))


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 2.0), st.floats(-1, 1))
def test_analytic_derivatives_match_finite_differences(x0, v0, w, c):
    st_ = AnalyticState.gaussian(k=2, center=c, width=w, poly={(3,): 1.0, (0,): 2.0})
    h = 1e-5
    x = np.array([[x0]])
    v = np.array([[v0]])
    fd_v = (st_.evaluate(x, v + h) - st_.evaluate(x, v - h)) / (2 * h)
    fd_x = (st_.evaluate(x + h, v) - st_.evaluate(x - h, v)) / (2 * h)
    scale = 1 + np.abs(st_.evaluate(x, v))
    assert np.abs(st_.dv().evaluate(x, v) - fd_v) < 1e-6 * scale * 10
    assert np.abs(st_.dx().evaluate(x, v) - fd_x) < 1e-6 * scale * 10


def test_mul_poly_and_simplify():
    st_ = AnalyticState.gaussian(poly={(1,): 1.0})
    prod = st_.mul_v(0) + st_.mul_v(0)
    v = np.linspace(-2, 2, 7).reshape(-1, 1)
    assert np.allclose(prod.simplify().profile((0,), v), 2 * v[:, 0] ** 2 * np.exp(-v[:, 0] ** 2 / 2))
    assert len(prod.simplify().terms) == 1


def test_l2_norm_state_exact():
    # ||sqrt(mu)||^2 = 1 in any dimension; x-measure normalised
    assert l2_norm_state(AnalyticState.sqrt_maxwellian(d_x=1, d_v=3)) == pytest.approx(1.0, rel=1e-13)
    two = AnalyticState.sqrt_maxwellian(d_x=1, d_v=1) + AnalyticState.sqrt_maxwellian(d_x=1, d_v=1, k=1)
    assert l2_norm_state(two) == pytest.approx(math.sqrt(2), rel=1e-13)


def test_gauss_hermite_rule_mass():
    nodes, w = gauss_hermite_rule(8, 3)
    assert np.sum(w) == pytest.approx((2 * np.pi) ** 1.5, rel=1e-13)


# -- fields ------------------------------------------------------------------

def test_kvfield_rejects_bad_input():
    g = PhaseGrid(K=1, N_v=8)
    with pytest.raises(ValueError):
        KvField(np.zeros((2, 8)), g)
    bad = np.zeros(g.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        KvField(bad, g)


def test_parseval_physical_vs_spectral():
    g = PhaseGrid(K=7, N_v=16)
    rng = np.random.default_rng(1)
    phys = rng.standard_normal((15, 16))
    f = KvField(transform_x(phys, 1), g)
    phys_l2 = math.sqrt(np.sum(phys ** 2) / 15 * g.h)
    assert abs(f.l2() - phys_l2) <= 1e-10 * phys_l2


def test_snapshot_roundtrip(tmp_path):
    g = PhaseGrid(d_x=2, d_v=1, K=2, N_v=8, V=6.0)
    rng = np.random.default_rng(2)
    f = KvField(rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape), g, time_tag=0.75)
    p = tmp_path / "snap.bin"
    save_field(p, f)
    raw = p.read_bytes()
    assert len(raw) == 48 + 16 * f.values.size
    back = load_field(p)
    assert back.grid == g and back.time_tag == 0.75
    assert np.array_equal(back.values, f.values)


def test_snapshot_bad_payload(tmp_path):
    g = PhaseGrid(K=1, N_v=8)
    p = tmp_path / "snap.bin"
    save_field(p, KvField(np.zeros(g.shape), g))
    p.write_bytes(p.read_bytes()[:-16])
    with pytest.raises(ValueError):
        load_field(p)
