import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_kinetic.experiments import ffp1_probe_state, ffp1_radius_probe, ffp1_temporal_order
from gevrey_kinetic.ffp1 import (
    SolverState, StabilityError, energy, exact_on_grid, run_ffp1, stability_limit, step_diffusion,
    step_transport, weighted_l2,
)
from gevrey_kinetic.fields import AnalyticState, KvField, ModelParams, PhaseGrid, sample_analytic


def _random_field(seed, grid):
    rng = np.random.default_rng(seed)
    return KvField(rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape), grid)


# -- transport ----------------------------------------------------------------------

def test_transport_k0_unchanged():
    g = PhaseGrid(K=3, N_v=32)
    f = _random_field(0, g)
    out = step_transport(SolverState(f), 0.37).field
    assert np.array_equal(out.column((0,)), f.column((0,)))


def test_transport_single_mode_phase():
    g = PhaseGrid(K=2, N_v=32)
    vals = np.zeros(g.shape, complex)
    vals[g.k_index((1,))] = 1.0
    dt = 0.21
    out = step_transport(SolverState(KvField(vals, g)), dt).field
    assert np.allclose(np.angle(out.column((1,))), np.angle(np.exp(-1j * g.v1d * dt)), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 5.0))
def test_transport_preserves_l2_per_k(seed, dt):
    g = PhaseGrid(K=3, N_v=16)
    f = _random_field(seed, g)
    out = step_transport(SolverState(f), dt).field
    assert np.allclose(out.l2v_per_k(), f.l2v_per_k(), rtol=1e-14)


def test_transport_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_transport(SolverState(_random_field(0, PhaseGrid(K=1, N_v=8))), 0.0)


# -- diffusion ---------------------------------------------------------------------

def test_diffusion_gamma0_matches_exact_k0():
    p = ModelParams(s=0.5, K=1, V=16.0, N_v=256, dt=0.05)
    init = AnalyticState.gaussian(1, 1, width=1.0)
    st_ = SolverState(sample_analytic(init, p.grid()))
    for _ in range(20):
        st_ = step_diffusion(st_, 0.05, 0.5, 0.0)
    ex = exact_on_grid(init, 1.0, p)
    err = np.linalg.norm(st_.field.column((0,)) - ex.column((0,))) / np.linalg.norm(ex.column((0,)))
    # gamma = 0 diffusion is an exact multiplier: only the periodic box separates the two
    assert err < 1e-3


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_diffusion_annihilates_constants(gamma):
    g = PhaseGrid(K=1, N_v=32)
    vals = np.zeros(g.shape, complex)
    vals[g.k_index((0,))] = 1.0
    dt = 0.5 * stability_limit(g, 0.5, gamma) if gamma else 0.1
    out = step_diffusion(SolverState(KvField(vals, g)), dt, 0.5, gamma).field
    assert np.allclose(out.values, vals, atol=1e-14)


def test_diffusion_refuses_unstable_step():
    g = PhaseGrid(K=1, N_v=32)
    lim = stability_limit(g, 0.5, 1.0)
    with pytest.raises(StabilityError):
        step_diffusion(SolverState(_random_field(0, g)), 1.5 * lim, 0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 0.75]), st.floats(0.0, 1.0))
def test_energy_nonnegative_random(seed, s, gamma):
    g = PhaseGrid(K=1, N_v=64)
    assert energy(_random_field(seed, g), s, gamma) >= 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=3, max_size=3), st.lists(st.floats(0.3, 2.0), min_size=3, max_size=3),
       st.floats(0.0, 1.0))
def test_energy_nonnegative_smooth(centers, widths, gamma):
    g = PhaseGrid(K=0, N_v=128, V=12.0)
    st_ = AnalyticState.zero()
    for c, w in zip(centers, widths):
        st_ = st_ + AnalyticState.gaussian(1, 1, center=c, width=w)
    assert energy(sample_analytic(st_, g), 0.5, gamma) >= 0


# -- full runs ------------------------------------------------------------------------

def test_zero_initial_data_stays_zero():
    p = ModelParams(s=0.5, gamma=1.0, K=2, N_v=32, dt=1e-3, t_max=0.05)
    tr = run_ffp1(p, AnalyticState.zero(), m_max=2)
    assert all(np.max(np.abs(f.values)) == 0 for f in tr.snapshots)


def _exact_gap(V, N):
    p = ModelParams(s=0.5, gamma=0.0, K=4, V=V, N_v=N, dt=0.01, t_max=1.0)
    init = ffp1_probe_state()
    tr = run_ffp1(p, init, snapshot_times=[0.5, 1.0], m_max=0)
    return max(np.linalg.norm(f.values - exact_on_grid(init, t, p).values) / np.linalg.norm(f.values)
               for f, t in zip(tr.snapshots, tr.times))


def test_gamma0_run_matches_exact():
    # the gap is the periodic-box error of the nonlocal operator: O(V^-2) at s = 1/2
    g16, g32 = _exact_gap(16.0, 256), _exact_gap(32.0, 512)
    assert g16 < 1e-2
    assert g16 / g32 > 3.0


def test_gamma0_temporal_order():
    res = ffp1_temporal_order(0.5)
    assert all(1.8 <= o <= 2.2 for o in res.summary["orders"])


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_dissipativity(gamma):
    g = PhaseGrid(1, 1, 4, 8.0, 64)
    dt = 0.9 * stability_limit(g, 0.5, gamma) if gamma else 0.01
    p = ModelParams(s=0.5, gamma=gamma, K=4, V=8.0, N_v=64, dt=dt, t_max=0.5)
    tr = run_ffp1(p, ffp1_probe_state(), m_max=0)
    # gamma > 0 is dissipative in the <v>^{-gamma}-weighted norm
    growth = tr.state.max_l2_growth if gamma == 0 else tr.state.max_wl2_growth
    assert growth <= 1e-8
    series = [f.l2() if gamma == 0 else weighted_l2(f, gamma) for f in tr.snapshots]
    assert all(b <= a * (1 + 1e-8) for a, b in zip(series, series[1:]))


def test_run_rejects_bad_inputs():
    with pytest.raises(ValueError):
        run_ffp1(ModelParams(d_x=2), AnalyticState.zero(2, 1))
    with pytest.raises(ValueError):
        run_ffp1(ModelParams(V=3.0, N_v=16), AnalyticState.gaussian(1, 1, width=1.0))
    with pytest.raises(StabilityError):
        run_ffp1(ModelParams(gamma=1.0, dt=1.0, N_v=16), AnalyticState.gaussian(1, 1, width=0.5))


def _norms(V, N, m_max=8):
    p = ModelParams(s=0.5, gamma=0.0, K=4, V=V, N_v=N, dt=0.01, t_max=1.0)
    tr = run_ffp1(p, ffp1_probe_state(), snapshot_times=[0.5, 1.0], m_max=m_max)
    return {r[:3]: r[3] for r in tr.norms}


def _max_change(a, b, select):
    return max(abs(b[key] / a[key] - 1) for key in a if select(key))


def test_resolution_independence_resolved_norms():
    base, finer_v, wider = _norms(16.0, 128), _norms(16.0, 256), _norms(32.0, 256)
    resolved = lambda key: key[2] == "x" or key[1] <= 2
    assert _max_change(base, finer_v, resolved) < 5e-3
    assert _max_change(base, wider, resolved) < 5e-3


@pytest.mark.xfail(strict=True, reason="fractional heat-kernel tails reach the periodic velocity box; "
                                       "v-derivative norms of order >= 3 do not converge (see decision log)")
def test_resolution_independence_high_velocity_derivatives():
    base, finer_v = _norms(16.0, 128), _norms(16.0, 256)
    assert _max_change(base, finer_v, lambda key: key[2] == "v" and key[1] >= 3) < 5e-3


def test_k1_mode_decays():
    g = PhaseGrid(1, 1, 1, 8.0, 64)
    dt = 0.9 * stability_limit(g, 0.5, 1.0)
    p = ModelParams(s=0.5, gamma=1.0, K=1, V=8.0, N_v=64, dt=dt, t_max=4.0)
    init = AnalyticState.gaussian(1, 1, k=1) + AnalyticState.gaussian(1, 1, k=-1)
    times = np.linspace(0.5, 4.0, 8)
    tr = run_ffp1(p, init, snapshot_times=times, m_max=0)
    amp = np.array([f.l2v_per_k()[2] for f in tr.snapshots])
    rate = -np.polyfit(times, np.log(amp), 1)[0]
    assert rate > 0 and np.all(np.diff(amp) < 0)


@pytest.mark.slow
def test_gamma1_radius_probe_reports_ci():
    res = ffp1_radius_probe()
    assert res.checks["ci_produced"] and res.checks["manifest_complete"]
    lo, hi = res.summary["ci"]
    assert lo <= res.summary["slope"] <= hi
