"""Closed-form Fourier solution of the fractional Kolmogorov equation.

``d_t g + v.d_x g + (-Delta_v)^s g = 0`` has the exact full-Fourier solution

    Fg(t, k, eta) = exp(-I(t, k, eta)) Fg_0(k, eta + t k),
    I(t, k, eta) = int_0^t |eta + rho k|^{2s} d rho.

This module evaluates ``I``, scans its two-sided bracket by
``t|eta|^{2s} + t^{2s+1}|k|^{2s}``, and computes time-weighted derivative norms
of the exact solution by quadrature in ``eta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.stats import qmc

from .fields import AnalyticState, PhaseGrid, PhaseSpectrum

NOISE_FLOOR = 1e-13


# ---------------------------------------------------------------------------
# exponent I(t, k, eta)
# ---------------------------------------------------------------------------

def _F(u, p):
    return np.sign(u) * np.abs(u) ** p / p


def exponent_integral_1d(t, k, eta, s):
    """Vectorised closed form of ``I`` for scalar (or parallel) ``k`` and ``eta``.

    Uses ``I = [F(a + t kappa) - F(a)] / kappa`` with ``F(u) = sign(u)|u|^p / p``,
    ``p = 2s + 1``, ``kappa = |k|`` and ``a = eta sign(k)``, arranged to avoid
    cancellation when ``t kappa << |a|``.
    """
    t, k, eta = np.broadcast_arrays(np.asarray(t, float), np.asarray(k, float), np.asarray(eta, float))
    p = 2.0 * s + 1.0
    kap = np.abs(k)
    a = np.where(k < 0, -eta, eta)
    out = np.empty(t.shape)
    zero_k = kap == 0
    out[zero_k] = t[zero_k] * np.abs(eta[zero_k]) ** (2 * s)
    nz = ~zero_k
    a_, kap_, t_ = a[nz], kap[nz], t[nz]
    u = a_ + t_ * kap_
    res = np.empty(a_.shape)
    straddle = (a_ < 0) & (u > 0)
    res[straddle] = (u[straddle] ** p + (-a_[straddle]) ** p) / (p * kap_[straddle])
    # same sign: |hi|^p - |lo|^p with |hi| = |lo| + t kappa
    same = ~straddle
    lo = np.where(a_[same] >= 0, a_[same], -u[same])
    d = t_[same] * kap_[same]
    hi = lo + d
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        # where d/lo is small, use lo^(p-1) t expm1(p log1p(x)) / (p x) with x = d/lo; dividing by kappa
        # before multiplying keeps denormal kappa from underflowing the product
        small = (lo > 0) & (d < lo)
        x = d / np.where(small, lo, 1.0)
        ratio = np.where(x > 0, np.expm1(p * np.log1p(x)) / np.where(x > 0, p * x, 1.0), 1.0)
        val = np.where(small, lo ** (p - 1) * t_[same] * ratio, (hi ** p - lo ** p) / (p * kap_[same]))
    res[same] = val
    out[nz] = res
    return out


def exponent_integral(t: float, k, eta, s: float, rtol: float = 1e-10) -> float:
    """``int_0^t |eta + rho k|^{2s} d rho`` for vectors ``k``, ``eta`` (any dimension).

    Closed forms are used when ``k = 0`` or ``eta`` is parallel to ``k``;
    otherwise adaptive Gauss-Kronrod quadrature split at the interior minimiser
    ``rho* = -(eta.k)/|k|^2``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = np.atleast_1d(np.asarray(k, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if t == 0:
        return 0.0
    kk = float(k @ k)
    if kk == 0.0:
        return float(t * float(eta @ eta) ** s)
    kap = math.sqrt(kk)
    a = float(eta @ k) / kap
    perp2 = max(float(eta @ eta) - a * a, 0.0)
    if len(k) == 1 or perp2 <= 1e-28 * max(float(eta @ eta), 1e-300):
        return float(exponent_integral_1d(t, kap, a, s))
    rho_star = -a / kap
    # integrate over u = rho / t on [0, 1] so that tiny t does not give quad a subnormal interval
    f = lambda u: (perp2 + (a + u * t * kap) ** 2) ** s
    pts = [rho_star / t] if 0.0 < rho_star < t else None
    val, _ = quad(f, 0.0, 1.0, points=pts, epsabs=0.0, epsrel=rtol, limit=200)
    return float(t * val)


def bracket_denominator(t, k, eta, s):
    k = np.atleast_1d(np.asarray(k, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    return t * float(eta @ eta) ** s + t ** (2 * s + 1) * float(k @ k) ** s


def parallel_ratio(lam, s):
    """Bracket ratio on the parallel family ``eta = -lam t k``; depends on ``lam`` only."""
    lam = np.asarray(lam, dtype=float)
    p = 2 * s + 1
    num = (np.sign(1 - lam) * np.abs(1 - lam) ** p + np.sign(lam) * np.abs(lam) ** p) / p
    return num / (np.abs(lam) ** (2 * s) + 1.0)


@lru_cache(maxsize=None)
def _certified_bracket(s: float) -> Tuple[float, float]:
    """Extremes of the bracket ratio on a dense deterministic parallel-family sweep."""
    lam = np.concatenate([np.linspace(0.0, 1.0, 20001), -np.logspace(-4, 4, 4001), 1 + np.logspace(-4, 4, 4001)])
    r = parallel_ratio(lam, s)
    return float(r.min()), float(max(r.max(), 1.0))


class BracketViolation(AssertionError):
    pass


@dataclass
class ExponentCache:
    """Memoised ``I(t, k, eta)`` with a runtime bracket assertion.

    ``slack`` widens the certified bracket to absorb quadrature error and the
    fact that off-parallel configurations are not in the certifying family.
    """

    s: float
    rtol: float = 1e-10
    slack: float = 1e-8
    values: Dict[tuple, float] = field(default_factory=dict)

    def __call__(self, t: float, k, eta) -> float:
        key = (float(t), tuple(np.atleast_1d(k).astype(float)), tuple(np.atleast_1d(eta).astype(float)))
        if key in self.values:
            return self.values[key]
        val = exponent_integral(t, k, eta, self.s, self.rtol)
        if val < 0:
            raise BracketViolation("negative exponent")
        den = bracket_denominator(t, k, eta, self.s)
        if den > 0:
            lo, hi = _certified_bracket(self.s)
            r = val / den
            if r < lo * (1 - self.slack) or r > hi * (1 + self.slack):
                raise BracketViolation(f"I/den={r} outside [{lo}, {hi}] at {key}")
        self.values[key] = val
        return val


# ---------------------------------------------------------------------------
# bracket scan
# ---------------------------------------------------------------------------

@dataclass
class BracketScan:
    c_lower: float
    c_upper: float
    n_samples: int
    argmin: tuple
    argmax: tuple
    eta_zero_ratio: float
    cancellation_ratio: Optional[float]

    def __iter__(self):
        yield self.c_lower
        yield self.c_upper


def bracket_bounds_scan(s: float, n_samples: int = 4000, seed: int = 0, d: int = 3) -> BracketScan:
    """Empirical extremes of ``I / (t|eta|^{2s} + t^{2s+1}|k|^{2s})``.

    The sample mixes deterministic parallel families (the cancellation family
    ``eta = -lam t k`` with ``lam`` in [0, 1], co- and counter-directed
    extensions, and ``eta = 0``) with scrambled Sobol points in
    ``t in [1e-3, 10]``, integer ``|k| <= 8`` and ``|eta| <= 32`` evaluated by
    adaptive quadrature.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    n_fam = n_samples // 2
    n_rand = n_samples - n_fam
    ratios, points = [], []

    kdirs = [np.array(v, float) for v in ((1, 0, 0), (1, 1, 0), (2, -1, 1), (0, 3, -2), (4, 4, 4), (8, 0, 0))]
    if d == 1:
        kdirs = [np.array([q], float) for q in (1, 2, 3, 5, 8)]
    elif d != 3:
        raise ValueError("d must be 1 or 3")
    ts = np.logspace(-3, 1, 7)
    # cancellation family lam in [0,1]
    lam = np.linspace(0.0, 1.0, n_fam // 2)
    for i, l in enumerate(lam):
        k = kdirs[i % len(kdirs)]
        t = ts[i % len(ts)]
        t = min(t, 32.0 / float(np.linalg.norm(k)))
        eta = -l * t * k
        if not np.any(k) and not np.any(eta):
            continue
        val = exponent_integral_1d(t, np.linalg.norm(k), -l * t * np.linalg.norm(k), s)
        ratios.append(float(val) / bracket_denominator(t, k, eta, s))
        points.append(("cancel", t, tuple(k), tuple(eta)))
    # co/counter directed extensions, lam outside [0,1]
    mu = np.logspace(-3, 3, n_fam // 2 - n_fam // 4)
    ext = np.concatenate([-mu, 1 + mu])
    for i, l in enumerate(ext):
        k = kdirs[i % len(kdirs)]
        nk = float(np.linalg.norm(k))
        t = min(ts[i % len(ts)], 32.0 / (abs(l) * nk + 1e-300), 10.0)
        eta = -l * t * k
        val = exponent_integral_1d(t, nk, -l * t * nk, s)
        ratios.append(float(val) / bracket_denominator(t, k, eta, s))
        points.append(("parallel", t, tuple(k), tuple(eta)))
    # eta = 0 family and k = 0 family
    eta0 = []
    for i in range(n_fam // 4):
        k = kdirs[i % len(kdirs)]
        t = ts[i % len(ts)]
        eta = np.zeros_like(k)
        val = exponent_integral(t, k, eta, s)
        r = val / bracket_denominator(t, k, eta, s)
        eta0.append(r)
        ratios.append(r)
        points.append(("eta0", t, tuple(k), tuple(eta)))
        e = np.zeros_like(k)
        e[0] = 1.0 + 31.0 * i / max(n_fam // 4 - 1, 1)
        val = exponent_integral(t, np.zeros_like(k), e, s)
        ratios.append(val / bracket_denominator(t, np.zeros_like(k), e, s))
        points.append(("k0", t, tuple(np.zeros_like(k)), tuple(e)))
    # quasi-random general configurations
    sob = qmc.Sobol(d=1 + 2 * d, scramble=True, seed=seed)
    u = sob.random_base2(max(1, math.ceil(math.log2(max(n_rand, 2)))))[:n_rand]
    for row in u:
        t = 10 ** (-3 + 4 * row[0])
        k = np.round(-8 + 16 * row[1:1 + d])
        if np.linalg.norm(k) > 8:
            k = np.round(k * 8 / np.linalg.norm(k) - 0.5 * np.sign(k))
        g = -1 + 2 * row[1 + d:]
        eta = 32.0 * g / math.sqrt(d)
        if not np.any(k) and not np.any(eta):
            continue
        val = exponent_integral(t, k, eta, s)
        ratios.append(val / bracket_denominator(t, k, eta, s))
        points.append(("sobol", t, tuple(k), tuple(eta)))
    ratios = np.asarray(ratios)
    i_lo, i_hi = int(np.argmin(ratios)), int(np.argmax(ratios))
    canc = None
    if abs(s - 0.5) < 1e-15:
        t = 1.7
        k = np.zeros(d)
        k[0] = 1.0
        if d > 1:
            k[1] = 0.0
        eta = -k * t / 2
        canc = exponent_integral(t, k, eta, s) / bracket_denominator(t, k, eta, s)
    return BracketScan(float(ratios.min()), float(ratios.max()), len(ratios), points[i_lo], points[i_hi],
                       float(np.mean(eta0)), canc)


# ---------------------------------------------------------------------------
# initial data and exact evolution
# ---------------------------------------------------------------------------

@dataclass
class SeparableInit:
    """Initial spectrum ``a(k) * phi_hat(eta)`` with a 1-D velocity profile ``phi``.

    ``amp`` maps an array of real wavenumbers to amplitudes. ``profile`` is a
    k = 0 AnalyticState in one velocity dimension.
    """

    amp: Callable[[np.ndarray], np.ndarray]
    profile: AnalyticState

    def __call__(self, k, eta):
        k = np.asarray(k, dtype=float)
        return np.asarray(self.amp(k)) * self.profile.fourier_v((0,), np.asarray(eta, float).reshape(-1, 1)).reshape(np.shape(eta))

    def eta_halfwidth(self) -> float:
        return _profile_halfwidth(self.profile)


def _profile_halfwidth(state: AnalyticState, n_sigma: float = 12.0) -> float:
    w = min(t.width for t in state.terms)
    deg = max(sum(e) for t in state.terms for e in t.p)
    return (n_sigma + math.sqrt(2 * deg + 1)) / w


def _as_callable(init) -> Tuple[Callable, float]:
    if isinstance(init, AnalyticState):
        if init.d_x != 1 or init.d_v != 1:
            def fn(k, eta):
                return init.fourier_v(np.atleast_1d(k).astype(int), np.asarray(eta, float))
            return fn, _profile_halfwidth(init)

        def fn(k, eta):
            eta = np.asarray(eta, float)
            return init.fourier_v((int(round(float(k))),), eta.reshape(-1, 1)).reshape(eta.shape)
        return fn, _profile_halfwidth(init)
    if isinstance(init, SeparableInit):
        return init, init.eta_halfwidth()
    if isinstance(init, PhaseSpectrum):
        return init.fn, getattr(init, "halfwidth", 40.0)
    raise TypeError("init must be an AnalyticState, SeparableInit or analytic PhaseSpectrum")


def evolve_exact(init, t: float, s: float, grid: Optional[PhaseGrid] = None) -> PhaseSpectrum:
    """Exact spectrum at time ``t``; analytic callable plus optional grid samples.

    For ``d_x = d_v = 1`` the sampled values are laid out as ``(k, eta)`` with
    ``eta`` in FFT order of ``grid``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    fn0, hw = _as_callable(init)
    d = init.d_v if isinstance(init, AnalyticState) else 1

    if d == 1:
        def fn(k, eta):
            eta = np.asarray(eta, float)
            kf = float(np.asarray(k).reshape(-1)[0])
            return np.exp(-exponent_integral_1d(t, kf, eta, s)) * fn0(kf, eta + t * kf)
    else:
        def fn(k, eta):
            k = np.atleast_1d(np.asarray(k, float))
            eta = np.atleast_2d(np.asarray(eta, float))
            Ivals = np.array([exponent_integral(t, k, e, s) for e in eta])
            return np.exp(-Ivals) * fn0(k, eta + t * k)
    out = PhaseSpectrum(fn=fn, time_tag=t)
    out.halfwidth = hw
    if grid is not None:
        if d != 1:
            raise ValueError("gridded sampling implemented for d = 1")
        vals = np.stack([fn(k, grid.eta1d) for k in grid.ks])
        out.values, out.ks, out.etas = vals, grid.ks, grid.eta1d
    return out


# ---------------------------------------------------------------------------
# per-k norms by quadrature in the shifted variable zeta = eta + t k
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _zeta_rule(hw: float, breaks: Sequence[float], panel: float = 1.0):
    """Composite Gauss-Legendre rule on [-hw, hw] with the given breakpoints."""
    pts = sorted({-hw, hw, *[b for b in breaks if -hw < b < hw]})
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, math.ceil((b - a) / panel))
        edges = np.linspace(a, b, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        nodes.append((mid + half * _GL_X[None, :]).ravel())
        weights.append((half * _GL_W[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def l2_eta_norm(init, t: float, k: float, s: float, beta: int = 0) -> float:
    """``||(i eta)^beta Fg(t, k, .)||_{L2_eta} (2pi)^{-1/2}``, i.e. the L2_v norm (d = 1).

    Integrates in ``zeta = eta + t k`` over the support window of the initial
    spectrum, with breakpoints at the two kinks of the exponent.
    """
    fn0, hw = _as_callable(init)
    return _l2_eta_norm(fn0, hw, t, k, s, beta)


def _l2_eta_norm(fn0, hw, t, k, s, beta):
    z, w = _zeta_rule(hw, (0.0, t * k))
    eta = z - t * k
    integ = np.exp(-2 * exponent_integral_1d(t, k, eta, s)) * np.abs(fn0(k, z)) ** 2
    if beta:
        integ = integ * np.abs(eta) ** (2 * beta)
    return math.sqrt(float(np.sum(w * integ)) / (2 * math.pi))


def l2_norms_table(init, times: Sequence[float], ks: Sequence[float], s: float, beta: int = 0) -> np.ndarray:
    """Table ``[i_t, i_k]`` of L2_v norms of ``(i eta)^beta`` times the exact solution."""
    fn0, hw = _as_callable(init)
    out = np.empty((len(times), len(ks)))
    for j, k in enumerate(ks):
        for i, t in enumerate(times):
            out[i, j] = _l2_eta_norm(fn0, hw, float(t), float(k), s, beta)
    return out


def weight_exponents(s: float) -> Tuple[float, float]:
    """Time-weight exponents per x- and v-derivative: ``(1+2s)/(2s)`` and ``1/(2s)``."""
    return (1 + 2 * s) / (2 * s), 1 / (2 * s)


@dataclass
class DerivativeNorm:
    order: int
    direction: str
    value: float
    flagged: bool
    per_k: np.ndarray
    t_argmax: np.ndarray
    floor_ratio: float


def derivative_norms_exact(t_max: float, orders: Sequence[int], direction: str, init, s: float,
                           ks: Optional[Sequence[float]] = None, n_t: int = 400, t_min_frac: float = 1e-4,
                           m_max: int = 24, floor: float = NOISE_FLOOR) -> list:
    """Time-weighted ``L1_k Linf_T L2_v`` derivative norms of the exact solution (d = 1).

    For ``direction == "x"`` the order-``m`` norm is
    ``sum_k sup_t t^{m(1+2s)/(2s)} |k|^m ||Fg(t,k)||``; for ``"v"`` it is
    ``sum_k sup_t t^{m/(2s)} ||eta^m Fg(t,k)||``. The supremum is taken on a
    log-spaced grid over ``[t_min_frac t_max, t_max]`` and refined by a parabola
    through the three grid values bracketing the maximum (in log variables).
    A norm is flagged when the unweighted amplitude at a maximiser falls below
    ``floor`` times the largest amplitude of the solution.
    """
    if direction not in ("x", "v"):
        raise ValueError("direction must be 'x' or 'v'")
    if max(orders) > m_max:
        raise ValueError(f"order {max(orders)} exceeds m_max={m_max}")
    fn0, hw = _as_callable(init)
    if ks is None:
        if isinstance(init, AnalyticState):
            ks = sorted({t.k[0] for t in init.terms})
        else:
            raise ValueError("ks required for non-AnalyticState init")
    ks = np.asarray(ks, dtype=float)
    a, b = weight_exponents(s)
    times = np.logspace(math.log10(t_min_frac), 0, n_t) * t_max
    lt = np.log(times)
    base = l2_norms_table(init, times, ks, s, 0)
    amp_max = max(float(np.max(base)), float(np.max(l2_norms_table(init, [0.0], ks, s, 0))))
    out = []
    vtabs = {}
    for m in orders:
        if direction == "x":
            tab = base
            w_exp = a * m
            kfac = np.abs(ks) ** m
        else:
            if m not in vtabs:
                vtabs[m] = l2_norms_table(init, times, ks, s, m) if m else base
            tab = vtabs[m]
            w_exp = b * m
            kfac = np.ones_like(ks)
        per_k = np.zeros(len(ks))
        targ = np.zeros(len(ks))
        worst = math.inf
        for j in range(len(ks)):
            if kfac[j] == 0 or not np.any(tab[:, j] > 0):
                continue
            with np.errstate(divide="ignore"):
                logF = w_exp * lt + np.log(kfac[j]) + np.log(tab[:, j])
            i = int(np.argmax(logF))
            best, tb, amp = logF[i], times[i], base[i, j]
            if 0 < i < n_t - 1:
                y0, y1, y2 = logF[i - 1], logF[i], logF[i + 1]
                h = lt[i + 1] - lt[i]
                den = y0 - 2 * y1 + y2
                if den < 0:
                    dx = 0.5 * h * (y0 - y2) / den
                    tb = math.exp(lt[i] + dx)
                    n_m = _l2_eta_norm(fn0, hw, tb, float(ks[j]), s, m if direction == "v" else 0)
                    cand = w_exp * math.log(tb) + math.log(kfac[j]) + math.log(n_m) if n_m > 0 else -math.inf
                    if cand > best:
                        best = cand
                        amp = _l2_eta_norm(fn0, hw, tb, float(ks[j]), s, 0)
                    else:
                        tb = times[i]
            per_k[j] = math.exp(best)
            targ[j] = tb
            worst = min(worst, amp / amp_max)
        out.append(DerivativeNorm(int(m), direction, float(per_k.sum()), bool(worst < floor), per_k, targ,
                                  float(worst)))
    return out


def derivative_norm_exact(t_max: float, alpha: int, beta: int, init, s: float,
                          ks: Optional[Sequence[float]] = None, **kw) -> DerivativeNorm:
    """Single mixed derivative norm ``||t^{a alpha + b beta} d_x^alpha d_v^beta g||`` (d = 1)."""
    if alpha and beta:
        fn0, hw = _as_callable(init)
        a, b = weight_exponents(s)
        if ks is None:
            ks = sorted({t.k[0] for t in init.terms})
        times = np.logspace(-4, 0, kw.get("n_t", 400)) * t_max
        tab = l2_norms_table(init, times, ks, s, beta)
        vals = (times[:, None] ** (a * alpha + b * beta)) * np.abs(np.asarray(ks, float))[None, :] ** alpha * tab
        per_k = vals.max(axis=0)
        return DerivativeNorm(alpha + beta, "xv", float(per_k.sum()), False, per_k,
                              times[vals.argmax(axis=0)], math.nan)
    if beta:
        return derivative_norms_exact(t_max, [beta], "v", init, s, ks, **kw)[0]
    return derivative_norms_exact(t_max, [alpha], "x", init, s, ks, **kw)[0]


# ---------------------------------------------------------------------------
# spectra at fixed time for radius estimation
# ---------------------------------------------------------------------------

def spatial_spectrum(init: SeparableInit, t: float, s: float, ks: Sequence[float]) -> np.ndarray:
    """``||Fg(t, k, .)||_{L2_v}`` for each k."""
    return l2_norms_table(init, [t], ks, s, 0)[0]


def velocity_marginal(init: SeparableInit, t: float, s: float, etas: Sequence[float], dk: float,
                      k_max: float) -> np.ndarray:
    """``(sum_k |Fg(t, k, eta)|^2)^{1/2}`` over the lattice ``k in dk * Z``, ``|k| <= k_max``."""
    hw = init.eta_halfwidth()
    out = np.empty(len(etas))
    for i, eta in enumerate(etas):
        lo = max(math.ceil((-eta - hw) / (t * dk)), -math.floor(k_max / dk))
        hi = min(math.floor((-eta + hw) / (t * dk)), math.floor(k_max / dk))
        if hi < lo:
            out[i] = 0.0
            continue
        k = dk * np.arange(lo, hi + 1)
        vals = np.exp(-exponent_integral_1d(t, k, eta, s)) * np.abs(init(k, eta + t * k))
        out[i] = math.sqrt(float(np.sum(vals ** 2)))
    return out
