import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_kinetic.fields import AnalyticState, PhaseGrid, PhaseSpectrum, l2_norm_state, sample_analytic
from gevrey_kinetic.inequalities import LinearSymbol, check_split_lemma
from gevrey_kinetic.vector_fields import (
    FieldOp, TimeState, apply_op, closed_form_rhs, commutator, commutator_residual, commutator_table,
    dx_from_p1, probe_functions,
)

GAUSS = AnalyticState.gaussian(1, 1, k=1, center=0.3, width=0.9, poly={(1,): 1.0, (0,): 0.5})


def _dist(a, b):
    return l2_norm_state((a - b).simplify())


# -- FieldOp -------------------------------------------------------------------

@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_coefficients(s):
    t = 1.7
    p1, p2 = FieldOp("P1", s), FieldOp("P2", s)
    assert p1.xi(t) == pytest.approx(2 * s / (1 + 2 * s) * t ** ((1 + 2 * s) / (2 * s)), rel=1e-15)
    assert p1.theta(t) == pytest.approx(t ** (1 / (2 * s)), rel=1e-15)
    assert p2.xi(t) == 0.0 and p2.theta(t) == p1.theta(t)
    assert FieldOp("H", s).xi(t) == t and FieldOp("H", s).theta(t) == 1.0
    hd = FieldOp("Hdelta", s, delta=2.0)
    assert hd.xi(t) == pytest.approx(t ** 3 / 3) and hd.theta(t) == pytest.approx(t ** 2)


def test_fieldop_validation():
    with pytest.raises(ValueError):
        FieldOp("Q")
    with pytest.raises(ValueError):
        FieldOp("Hdelta")
    with pytest.raises(ValueError):
        FieldOp("P1", s=1.0)
    with pytest.raises(ValueError):
        apply_op(FieldOp("H"), GAUSS, -0.1)


# -- apply_op ------------------------------------------------------------------

def test_h_at_t0_is_dv():
    out = apply_op(FieldOp("H"), GAUSS, 0.0)
    assert _dist(out, GAUSS.dv(0)) < 1e-15


def test_p1_minus_p2_is_dx_multiple():
    s, t = 0.5, 1.3
    diff = apply_op(FieldOp("P1", s), GAUSS, t) - apply_op(FieldOp("P2", s), GAUSS, t)
    expect = GAUSS.dx(0).scale(2 * s / (1 + 2 * s) * t ** ((1 + 2 * s) / (2 * s)))
    assert _dist(diff, expect) < 1e-13


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_dx_reconstruction_from_p1(s, t):
    st_ = AnalyticState.gaussian(1, 1, k=2, width=1.0)
    out = dx_from_p1(st_, t, s)
    assert _dist(out, st_.dx(0)) <= 1e-12 * l2_norm_state(st_.dx(0))


def test_dx_reconstruction_on_grid():
    g = PhaseGrid(K=2, N_v=64, V=12.0)
    st_ = AnalyticState.gaussian(1, 1, k=2, width=1.0)
    f = sample_analytic(st_, g)
    out = dx_from_p1(f, 0.8, 0.5)
    expect = sample_analytic(st_.dx(0), g)
    assert np.max(np.abs(out.values - expect.values)) < 1e-12


def test_kvfield_matches_analytic_action():
    # spectral accuracy needs h well below the Gaussian width
    g = PhaseGrid(K=2, N_v=128, V=12.0)
    op = FieldOp("P1", 0.5, m=2)
    got = apply_op(op, sample_analytic(GAUSS, g), 0.9)
    expect = sample_analytic(apply_op(op, GAUSS, 0.9), g)
    assert np.max(np.abs(got.values - expect.values)) < 1e-11


def test_phase_spectrum_multiplier():
    ks = np.array([-1, 0, 1])
    etas = np.linspace(-3, 3, 7)
    sp = PhaseSpectrum(values=np.ones((3, 7), complex), ks=ks, etas=etas)
    out = apply_op(FieldOp("H", m=2), sp, 0.5)
    expect = (1j * (0.5 * ks[:, None] + etas[None, :])) ** 2
    assert np.allclose(out.values, expect, atol=1e-15)


def test_apply_rejects_unknown_type():
    with pytest.raises(TypeError):
        apply_op(FieldOp("H"), np.zeros(3), 0.1)


kinds = st.sampled_from([FieldOp("P1", 0.5), FieldOp("P2", 0.25), FieldOp("H"), FieldOp("Hdelta", 0.5, 1.5)])


@settings(max_examples=30, deadline=None)
@given(kinds, st.integers(0, 3), st.integers(0, 3), st.floats(0.0, 2.0))
def test_powers_compose(op, m, n, t):
    g = PhaseGrid(K=2, N_v=32, V=10.0)
    f = sample_analytic(GAUSS, g)
    a = apply_op(op.power(m), apply_op(op.power(n), f, t), t)
    b = apply_op(op.power(m + n), f, t)
    assert np.max(np.abs(a.values - b.values)) <= 1e-12 * (1 + np.max(np.abs(b.values)))


@settings(max_examples=30, deadline=None)
@given(kinds, st.floats(-2, 2), st.floats(-2, 2), st.floats(0.0, 2.0))
def test_linearity(op, a, b, t):
    g = PhaseGrid(K=3, N_v=32, V=10.0)
    f1 = sample_analytic(GAUSS, g)
    f2 = sample_analytic(AnalyticState.gaussian(1, 1, k=-2, width=0.7), g)
    lhs = apply_op(op, f1.copy(a * f1.values + b * f2.values), t)
    rhs = a * apply_op(op, f1, t).values + b * apply_op(op, f2, t).values
    assert np.max(np.abs(lhs.values - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


# -- commutators ------------------------------------------------------------------

def test_time_state_derivative_is_exact():
    F = TimeState.monomial(GAUSS, 2.5) + TimeState.monomial(GAUSS, 0.0)
    dF = F.dt()
    assert _dist(dF.at(2.0), GAUSS.scale(2.5 * 2.0 ** 1.5)) < 1e-13


@pytest.mark.parametrize("m", range(1, 7))
def test_h_commutes_with_transport(m):
    F = probe_functions()[0]
    rep = commutator_residual(FieldOp("H"), m, F)
    assert rep.residual <= 1e-10


def test_p1_m1_s_half():
    F = probe_functions()[0]
    rhs, order = closed_form_rhs(FieldOp("P1", 0.5), 1, F)
    # at s = 1/2 the right-hand side reduces to -d_v F
    assert order == "op_first"
    assert _dist(rhs.at(0.7), F.dv1().at(0.7).scale(-1.0)) < 1e-15
    assert commutator_residual(FieldOp("P1", 0.5), 1, F).residual <= 1e-10


def test_p2_m2_against_hand_expansion():
    s = 0.5
    F = probe_functions()[1]
    lhs = commutator(FieldOp("P2", s), 2, F, "T_first")
    # [T, P2^2] at s = 1/2: P2 = t d_v, so T P2^2 - P2^2 T = 2 t d_v^2 - 2 t^2 d_x d_v
    hand = F.dv1().dv1().mul_t(2.0, 1.0) - F.dv1().dx1().mul_t(2.0, 2.0)
    for t in (0.3, 1.1):
        assert _dist(lhs.at(t), hand.at(t)) < 1e-10
    assert commutator_residual(FieldOp("P2", s), 2, F).residual <= 1e-10


def test_commutator_needs_time_oracle():
    with pytest.raises(TypeError):
        commutator_residual(FieldOp("H"), 1, GAUSS)


def test_probe_functions_vanish_at_box_edge():
    V = 12.0
    v = np.array([[-V], [V]])
    x = np.zeros((2, 1))
    for F in probe_functions():
        if F.d_v != 1:
            continue
        for t in (0.25, 1.3):
            assert np.max(np.abs(F.at(t).evaluate(x, v))) < 1e-13


@pytest.mark.slow
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_commutator_table_all_kinds(s):
    rows = commutator_table(s=s, m_max=6)
    assert len(rows) == 5 * 6 * 6
    for _, rep in rows:
        assert rep.residual <= 1e-9 * max(rep.scale, 1.0), (rep.kind, rep.m)
        assert rep.generic_relative <= 1e-9


def test_split_lemma_with_p1_minus_p2_and_p2():
    s = 0.5
    p1, p2 = FieldOp("P1", s), FieldOp("P2", s)
    A1 = LinearSymbol(lambda t: p1.xi(t) - p2.xi(t), lambda t: p1.theta(t) - p2.theta(t))
    A2 = LinearSymbol(p2.xi, p2.theta)
    rep = check_split_lemma(m_max=6, n_fields=4, pairs=[("P1mP2_P2", A1, A2)])
    assert rep.ok and rep.n_violations == 0
