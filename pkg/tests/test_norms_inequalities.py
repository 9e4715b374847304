import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_kinetic.fields import KvField, PhaseGrid, PhaseSpectrum
from gevrey_kinetic.inequalities import (
    LinearSymbol, check_binomial_lattice, check_interpolation, check_minkowski, check_split_lemma,
    interpolation_minimizer,
)
from gevrey_kinetic.norms import NormSpec, gevrey_weight, mixed_norm, mixed_norm_table


def _field_with_norms(norms, t=0.0):
    """Field whose k-columns are constants with the given L2_v norms."""
    g = PhaseGrid(K=2, N_v=16, V=8.0)
    vals = np.zeros(g.shape, dtype=complex)
    length = 2 * g.V
    for j, n in enumerate(norms):
        vals[j] = n / math.sqrt(length)
    return KvField(vals, g, t)


# -- mixed_norm --------------------------------------------------------------

def test_single_mode_norm_three():
    f = _field_with_norms([0, 0, 3.0, 0, 0])
    assert mixed_norm([f], NormSpec(p=1, q=math.inf)) == pytest.approx(3.0, rel=1e-14)


def test_two_modes_l1_vs_l2():
    f = _field_with_norms([0, 3.0, 0, 4.0, 0])
    assert mixed_norm([f], NormSpec(p=1)) == pytest.approx(7.0, rel=1e-14)
    assert mixed_norm([f], NormSpec(p=2)) == pytest.approx(5.0, rel=1e-14)


def test_constant_trajectory_q2_equals_sup():
    traj = [_field_with_norms([0, 3.0, 0, 4.0, 0], t) for t in np.linspace(0, 1, 11)]
    assert mixed_norm(traj, NormSpec(p=1, q=2)) == pytest.approx(mixed_norm(traj, NormSpec(p=1)), rel=1e-13)


def test_mixed_norm_errors():
    with pytest.raises(ValueError):
        mixed_norm([], NormSpec())
    with pytest.raises(ValueError):
        NormSpec(p=0.5)
    with pytest.raises(ValueError):
        NormSpec(r=1)
    with pytest.raises(ValueError):
        mixed_norm_table(np.ones((3, 2)), [0.0, 0.1, 0.5], NormSpec(q=2))


def test_weights():
    tab = np.array([[1.0, 2.0]])
    kv = np.array([[0.0], [1.0]])
    assert mixed_norm_table(tab, [0.5], NormSpec(k_weight=2.0), kv) == pytest.approx(1 + 2 * 2)
    assert mixed_norm_table(tab, [0.5], NormSpec(t_weight=1.0), kv) == pytest.approx(1.5)


def _random_traj(seed, n_t=5):
    rng = np.random.default_rng(seed)
    g = PhaseGrid(K=2, N_v=8)
    return [KvField(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g, t)
            for t in np.linspace(0, 1, n_t)]


specs = st.builds(NormSpec, p=st.sampled_from([1.0, 2.0, 3.0, math.inf]), q=st.sampled_from([1.0, 2.0, math.inf]),
                  k_weight=st.sampled_from([0.0, 1.0]), t_weight=st.sampled_from([0.0, 0.5]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), specs, st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_mixed_norm_homogeneous(seed, spec, a):
    traj = _random_traj(seed)
    scaled = [f.copy(a * f.values) for f in traj]
    assert mixed_norm(scaled, spec) == pytest.approx(abs(a) * mixed_norm(traj, spec), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), specs)
def test_mixed_norm_triangle(seed, spec):
    f, g = _random_traj(seed), _random_traj(seed + 1)
    fg = [a.copy(a.values + b.values) for a, b in zip(f, g)]
    assert mixed_norm(fg, spec) <= (mixed_norm(f, spec) + mixed_norm(g, spec)) * (1 + 1e-12)


# -- gevrey_weight -------------------------------------------------------------

def test_gevrey_weight_identity():
    sp = PhaseSpectrum(values=np.ones((3, 4)), ks=np.array([-1, 0, 1]), etas=np.linspace(-1, 1, 4))
    out, flag = gevrey_weight(sp, 0.0, 1.0)
    assert not flag and np.array_equal(out.values, sp.values)


def test_gevrey_weight_single_mode():
    sp = PhaseSpectrum(values=np.array([[2.0]]), ks=np.array([1]), etas=np.array([0.0]))
    out, flag = gevrey_weight(sp, 0.5, 1.0)
    assert out.values[0, 0] == pytest.approx(2 * math.exp(0.5), rel=1e-15)
    fn_out, _ = gevrey_weight(PhaseSpectrum(fn=lambda k, e: np.ones_like(e)), 0.5, 1.0)
    assert fn_out(np.array([1.0]), np.array([0.0]))[0] == pytest.approx(math.exp(0.5))


def test_gevrey_weight_rejects_negative():
    with pytest.raises(ValueError):
        gevrey_weight(PhaseSpectrum(fn=lambda k, e: e), -1.0, 1.0)


def _gaussian_spectrum(eta_max=40.0, n=4001):
    etas = np.linspace(-eta_max, eta_max, n)
    return PhaseSpectrum(values=np.exp(-etas ** 2)[None, :], ks=np.array([0]), etas=etas)


def test_gevrey_weight_gaussian_finite_norm_small_c():
    sp = _gaussian_spectrum()
    c = 0.3
    out, flag = gevrey_weight(sp, c, 0.5)
    assert not flag
    d = sp.etas[1] - sp.etas[0]
    num = np.sum(np.abs(out.values[0]) ** 2) * d
    # int exp(-2 (1 - c) eta^2) d eta
    assert num == pytest.approx(math.sqrt(math.pi / (2 * (1 - c))), rel=1e-10)


def test_gevrey_weight_gaussian_overflow_threshold():
    # eta_max small enough that exp(-eta_max^2) stays representable
    eta_max = 20.0
    sp = _gaussian_spectrum(eta_max, 2001)
    # closed-form integrand: log amplitude at the edge is (c - 1) eta_max^2
    c_star = 1.0 + math.log(1e300) / eta_max ** 2
    lo, hi = 0.0, 10.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if gevrey_weight(sp, mid, 0.5)[1]:
            hi = mid
        else:
            lo = mid
    assert hi == pytest.approx(c_star, rel=1e-9)
    assert gevrey_weight(sp, 5.0, 0.5)[1]


# -- binomial lattice ------------------------------------------------------------

def test_binomial_m1_origin():
    # <0>^1 = 1 and the outer right-hand side at k = l = 0 is 2 (1 + 1) = 4
    lhs, rhs = 1.0, 2 * (1.0 + 1.0)
    assert lhs <= rhs
    rep = check_binomial_lattice(m_max=1, rng=0)
    assert rep.ok
    row = [r for r in rep.rows if r[0] == "binomial_outer"][0]
    assert row[2] == pytest.approx(lhs) and row[3] == pytest.approx(rhs)


def test_binomial_full_sweep():
    rep = check_binomial_lattice(m_max=8, rng=4)
    assert rep.ok and rep.n_violations == 0
    assert rep.worst_slack <= 1.0
    assert rep.n_checked == 8 * 2 * 729 ** 2


def test_binomial_preconditions():
    with pytest.raises(ValueError):
        check_binomial_lattice(m_max=13)


# -- interpolation ----------------------------------------------------------------

def test_interpolation_eps1_eta0():
    # 1 <= 1 * 1 + 1 * 1
    rep = check_interpolation(0.5, n_samples=3, eps_range=(1.0, 1.0), eta_max=1.0)
    assert rep.ok


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_interpolation_sweep(s):
    rep = check_interpolation(s)
    assert rep.ok and rep.worst_slack <= 1.0
    assert rep.extra["minimizer_rel_error"] < 0.01


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0, 1e3))
def test_interpolation_minimizer_is_stationary(s, eta):
    x = 1 + eta * eta
    f = lambda e: e * x ** s + e ** (-(1 - s) / s) * x ** (s - 1)
    e0 = interpolation_minimizer(s, eta)
    assert f(e0) <= f(e0 * 1.01) and f(e0) <= f(e0 / 1.01)
    assert f(e0) >= 1.0 * (1 - 1e-12)


# -- split lemma ------------------------------------------------------------------

def test_split_lemma_a2_zero():
    zero = LinearSymbol(lambda t: 0.0, lambda t: 0.0)
    a1 = LinearSymbol(lambda t: 0.7, lambda t: -0.4)
    rep = check_split_lemma(m_max=3, n_fields=2, pairs=[("z", a1, zero)], r_values=(0.0,))
    assert rep.ok
    for r in rep.rows:
        if r[0] == "split_sup":
            m = int(r[1].split("m=")[1])
            assert r[4] == pytest.approx(2.0 ** -m, rel=1e-12)


def test_split_lemma_dx_dv_m1():
    a1 = LinearSymbol(lambda t: 1.0, lambda t: 0.0)
    a2 = LinearSymbol(lambda t: 0.0, lambda t: 1.0)
    rep = check_split_lemma(m_max=1, n_fields=4, pairs=[("dx_dv", a1, a2)])
    assert rep.ok


def test_split_lemma_fmn_gaussian_slack():
    rep = check_split_lemma(m_max=4, n_fields=1, seed=3)
    fmn22 = [r for r in rep.rows if r[0] == "fmn" and ";m=2;n=2;" in r[1]]
    assert fmn22 and all(r[4] <= 1.0 for r in fmn22)
    assert rep.ok


def test_split_lemma_default_pairs():
    assert check_split_lemma().ok


# -- Minkowski ----------------------------------------------------------------------

def test_minkowski():
    rep = check_minkowski()
    assert rep.ok and rep.worst_slack <= 1.0


def test_report_csv(tmp_path):
    rep = check_binomial_lattice(m_max=2, rng=1)
    p = tmp_path / "r.csv"
    rep.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "inequality,parameter_point,lhs,rhs,slack"
    assert len(lines) == 1 + len(rep.rows)
