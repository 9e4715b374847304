"""Sampled verification of standalone inequalities used by the regularity analysis.

Every check returns an :class:`InequalityReport`. Slack is ``lhs / rhs``; a slack
above one is a violation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import comb, eval_hermitenorm, gammaln

from .norms import NormSpec, mixed_norm_table

POINTS_PER_DECADE = 64


@dataclass
class InequalityReport:
    name: str
    rows: List[Tuple[str, str, float, float, float]] = field(default_factory=list)
    n_checked: int = 0
    n_violations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def worst_slack(self) -> float:
        return max((r[4] for r in self.rows), default=0.0)

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def add(self, inequality: str, point: str, lhs: float, rhs: float):
        slack = 0.0 if lhs == 0 else (lhs / rhs if rhs > 0 else math.inf)
        self.rows.append((inequality, point, float(lhs), float(rhs), float(slack)))

    def merge(self, other: "InequalityReport") -> "InequalityReport":
        self.rows.extend(other.rows)
        self.n_checked += other.n_checked
        self.n_violations += other.n_violations
        self.extra.update({f"{other.name}.{k}": v for k, v in other.extra.items()})
        return self

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["inequality", "parameter_point", "lhs", "rhs", "slack"])
            for r in self.rows:
                w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])


def _log_lattice(lo: float, hi: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _bracket(x):
    return np.sqrt(1.0 + np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# Lemma: <k>^m bounded by binomial sums over splittings k = (k - l) + l
# ---------------------------------------------------------------------------

def check_binomial_lattice(m_max: int = 8, rng: int = 4, rel_tol: float = 1e-12) -> InequalityReport:
    """Exhaustive check over k, l in {-rng..rng}^3 and 1 <= m <= m_max.

    Both the refined middle expression and the outer ``2 sum_j C(m,j) ...`` bound
    are checked.
    """
    if m_max > 12 or rng > 8:
        raise ValueError("m_max <= 12 and range <= 8 required")
    pts = np.array(list(product(range(-rng, rng + 1), repeat=3)), dtype=float)
    bk = _bracket(pts)
    a = _bracket(pts[:, None, :] - pts[None, :, :])  # <k - l>
    b = np.broadcast_to(bk[None, :], a.shape)         # <l>
    lhs_base = np.broadcast_to(bk[:, None], a.shape)
    rep = InequalityReport("binomial_lattice")
    for m in range(1, m_max + 1):
        lhs = lhs_base ** m
        middle = 2 * a ** m + 2 * b ** m
        for j in range(1, m):
            middle = middle + comb(m, j, exact=True) * a ** j * b ** (m - j)
        outer = np.zeros_like(a)
        for j in range(0, m + 1):
            outer = outer + comb(m, j, exact=True) * a ** j * b ** (m - j)
        outer *= 2
        for tag, rhs in (("middle", middle), ("outer", outer)):
            ratio = lhs / rhs
            idx = np.unravel_index(np.argmax(ratio), ratio.shape)
            rep.add(f"binomial_{tag}", f"m={m};k={tuple(int(q) for q in pts[idx[0]])};"
                    f"l={tuple(int(q) for q in pts[idx[1]])}", lhs[idx], rhs[idx])
            rep.n_checked += ratio.size
            rep.n_violations += int(np.sum(lhs > rhs * (1 + rel_tol)))
        # ordering of the two right-hand sides
        rep.n_violations += int(np.sum(middle > outer * (1 + rel_tol)))
    return rep


# ---------------------------------------------------------------------------
# Interpolation inequalities, checked pointwise in frequency
# ---------------------------------------------------------------------------

def interpolation_minimizer(s: float, eta: float) -> float:
    """Analytic minimiser in eps of ``eps <eta>^{2s} + eps^{-(1-s)/s} <eta>^{2(s-1)}``."""
    x = 1.0 + eta * eta
    return ((1.0 - s) / (s * x)) ** s


def check_interpolation(s: float, n_samples: Optional[int] = None,
                        eps_range=(1e-6, 1e6), eta_max: float = 1e4,
                        rel_tol: float = 1e-12) -> InequalityReport:
    """Pointwise-in-frequency form of the L2 and H^{-s} interpolation inequalities.

    Checked on a log lattice in ``(eps, |eta|)`` (64 points per decade unless
    ``n_samples`` overrides the per-axis count):

    * ``1 <= eps <eta>^{2s} + eps^{-(1-s)/s} <eta>^{2(s-1)}``
    * for ``s <= 1/2``: ``<eta>^{-2s} <= eps <eta>^{2s} + eps^{-(1-2s)/(2s)} <eta>^{2(s-1)}``
    * for ``s > 1/2``: ``<eta>^{-2s} <= eps <eta>^{2(s-1)} + eps^{-(1-s)/(2s-1)} <eta>^{-2}``

    The report also locates the numerical minimiser of the first right-hand side
    at a few frequencies and compares it with :func:`interpolation_minimizer`.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    if n_samples is None:
        eps = _log_lattice(*eps_range)
        eta = np.concatenate([[0.0], _log_lattice(1e-3, eta_max)])
    else:
        eps = np.logspace(math.log10(eps_range[0]), math.log10(eps_range[1]), n_samples)
        eta = np.concatenate([[0.0], np.logspace(-3, math.log10(eta_max), n_samples)])
    E, H = np.meshgrid(eps, eta, indexing="ij")
    x = 1.0 + H * H  # <eta>^2
    rep = InequalityReport("interpolation", extra={"s": s})

    def record(tag, lhs, rhs):
        ratio = lhs / rhs
        i = np.unravel_index(np.argmax(ratio), ratio.shape)
        rep.add(tag, f"s={s};eps={E[i]:.6g};eta={H[i]:.6g}", lhs[i], rhs[i])
        rep.n_checked += ratio.size
        rep.n_violations += int(np.sum(lhs > rhs * (1 + rel_tol)))

    lhs = np.ones_like(x)
    rhs = E * x ** s + E ** (-(1 - s) / s) * x ** (s - 1)
    record("L2_interp", lhs, rhs)
    lhs = x ** (-s)
    if s <= 0.5:
        rhs = E * x ** s + E ** (-(1 - 2 * s) / (2 * s)) * x ** (s - 1)
        record("Hminus_s_interp_small_s", lhs, rhs)
    else:
        rhs = E * x ** (s - 1) + E ** (-(1 - s) / (2 * s - 1)) * x ** (-1.0)
        record("Hminus_s_interp_large_s", lhs, rhs)

    # minimiser location: lattice argmin refined by a bounded scalar search
    worst = 0.0
    for et in (0.0, 1.0, 10.0, 1e3):
        xx = 1.0 + et * et

        def f(le, xx=xx):
            e = math.exp(le)
            return e * xx ** s + e ** (-(1 - s) / s) * xx ** (s - 1)
        vals = np.array([f(math.log(e)) for e in eps])
        j = int(np.argmin(vals))
        lo = math.log(eps[max(j - 1, 0)])
        hi = math.log(eps[min(j + 1, len(eps) - 1)])
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        num = math.exp(res.x)
        ana = interpolation_minimizer(s, et)
        worst = max(worst, abs(num / ana - 1.0))
    rep.extra["minimizer_rel_error"] = worst
    return rep


# ---------------------------------------------------------------------------
# Split lemma for multipliers with linear symbols p(t) k + q(t) eta
# ---------------------------------------------------------------------------

@dataclass
class LinearSymbol:
    """Multiplier with symbol ``p(t) k + q(t) eta`` (first components)."""

    p: Callable[[float], float]
    q: Callable[[float], float]

    def __call__(self, t, k, eta):
        return self.p(t) * k + self.q(t) * eta


def _random_spectrum(rng: np.random.Generator, ks, etas):
    amp = rng.normal(size=(len(ks), len(etas))) + 1j * rng.normal(size=(len(ks), len(etas)))
    decay = np.exp(-0.5 * (etas[None, :] / 2.0) ** 2 - 0.3 * np.abs(ks)[:, None])
    return amp * decay


def check_split_lemma(m_max: int = 6, n_fields: int = 8, seed: int = 0,
                      pairs: Optional[Sequence[Tuple[str, LinearSymbol, LinearSymbol]]] = None,
                      r_values=(-1.0, 0.0, 0.5, 1.0), rel_tol: float = 1e-12) -> InequalityReport:
    """Check the (A1+A2)^m split and the A1^m A2^n bound on random spectra.

    Fields are random spectra on a (k, eta) lattice evolving in time through a
    random phase; the time sup and the time-L2 norm variants are both checked.
    """
    rng = np.random.default_rng(seed)
    ks = np.arange(-6, 7, dtype=float)
    etas = np.linspace(-12, 12, 241)
    deta = etas[1] - etas[0]
    times = np.linspace(0.05, 1.0, 12)
    if pairs is None:
        s = 0.5
        pairs = [
            ("Dx_Dv", LinearSymbol(lambda t: 1.0, lambda t: 0.0), LinearSymbol(lambda t: 0.0, lambda t: 1.0)),
            ("P1mP2_P2", LinearSymbol(lambda t: (2 * s / (1 + 2 * s)) * t ** ((1 + 2 * s) / (2 * s)),
                                      lambda t: 0.0),
             LinearSymbol(lambda t: 0.0, lambda t: t ** (1 / (2 * s)))),
            ("A2_zero", LinearSymbol(lambda t: 0.7, lambda t: -0.4), LinearSymbol(lambda t: 0.0, lambda t: 0.0)),
            ("H_Dx", LinearSymbol(lambda t: t, lambda t: 1.0), LinearSymbol(lambda t: -1.0, lambda t: 0.0)),
        ]
    rep = InequalityReport("split_lemma")
    sup_spec = NormSpec(p=1, q=math.inf)
    l2_spec = NormSpec(p=1, q=2)
    for name, A1, A2 in pairs:
        for n_f in range(n_fields):
            h0 = _random_spectrum(rng, ks, etas)
            omega = rng.normal(size=h0.shape)
            hs = [h0 * np.exp(1j * omega * t) for t in times]
            for m in range(1, m_max + 1):
                tabs = {"sum": [], "a1": [], "a2": []}
                for t, h in zip(times, hs):
                    s1 = A1(t, ks[:, None], etas[None, :])
                    s2 = A2(t, ks[:, None], etas[None, :])
                    for key, sym in (("sum", (s1 + s2) ** m), ("a1", s1 ** m), ("a2", s2 ** m)):
                        tabs[key].append(np.sqrt(np.sum(np.abs(sym * h) ** 2, axis=1) * deta))
                tabs = {k: np.array(v) for k, v in tabs.items()}
                for tag, spec in (("sup", sup_spec), ("L2T", l2_spec)):
                    lhs = mixed_norm_table(tabs["sum"], times, spec)
                    rhs = 2 ** m * (mixed_norm_table(tabs["a1"], times, spec)
                                    + mixed_norm_table(tabs["a2"], times, spec))
                    rep.add(f"split_{tag}", f"{name};field={n_f};m={m}", lhs, rhs)
                    rep.n_checked += 1
                    rep.n_violations += int(lhs > rhs * (1 + rel_tol))
            # A1^m A2^n in H^r_v at a fixed time
            t = times[len(times) // 2]
            h = hs[len(times) // 2]
            s1 = A1(t, ks[:, None], etas[None, :])
            s2 = A2(t, ks[:, None], etas[None, :])
            for r in r_values:
                wr = (1 + etas[None, :] ** 2) ** (r / 2)
                for m in range(0, m_max + 1):
                    for n in range(0, m_max + 1 - m):
                        if m + n == 0:
                            continue
                        nrm = lambda sym: np.sqrt(np.sum(np.abs(sym * wr * h) ** 2, axis=1) * deta)
                        lhs = nrm(s1 ** m * s2 ** n)
                        rhs = nrm(s1 ** (m + n)) + nrm(s2 ** (m + n))
                        ratio = np.where(lhs > 0, lhs / np.maximum(rhs, 1e-300), 0.0)
                        i = int(np.argmax(ratio))
                        rep.add("fmn", f"{name};field={n_f};m={m};n={n};r={r};k={ks[i]:g}", lhs[i], rhs[i])
                        rep.n_checked += len(ks)
                        rep.n_violations += int(np.sum(lhs > rhs * (1 + rel_tol) + 1e-300))
    return rep


# ---------------------------------------------------------------------------
# Minkowski/Fubini estimate for convolution-type sums
# ---------------------------------------------------------------------------

def check_minkowski(n_trials: int = 50, j0: int = 2, seed: int = 0, rel_tol: float = 1e-12) -> InequalityReport:
    """Nested-norm bound for ``sum_l ||f_j(k-l)|| |||g_j(l)|||`` on random nonnegative data.

    Integrands are factorizable in the sense that every factor is a
    nonnegative table over (t, k); the k lattice is {-R..R} and the convolution
    is taken over the full integer line (data vanish outside the box).
    """
    rng = np.random.default_rng(seed)
    rep = InequalityReport("minkowski")
    times = np.linspace(0.0, 1.0, 17)
    for trial in range(n_trials):
        R = int(rng.integers(2, 7))
        nk = 2 * R + 1
        F = rng.exponential(size=(j0, len(times), nk)) * np.exp(-rng.uniform(0, 1) * np.abs(np.arange(-R, R + 1)))
        G = rng.exponential(size=(j0, len(times), nk))
        conv = np.zeros((len(times), 2 * nk - 1))
        for j in range(j0):
            for it in range(len(times)):
                conv[it] += np.convolve(F[j, it], G[j, it])
        lhs = mixed_norm_table(conv, times, NormSpec(p=1, q=2))
        rhs = sum(mixed_norm_table(F[j], times, NormSpec(p=1, q=math.inf))
                  * mixed_norm_table(G[j], times, NormSpec(p=1, q=2)) for j in range(j0))
        rep.add("MF", f"trial={trial};R={R}", lhs, rhs)
        rep.n_checked += 1
        rep.n_violations += int(lhs > rhs * (1 + rel_tol))
    return rep


# ---------------------------------------------------------------------------
# Gaussian derivative bound |d^p mu^{1/2}| <= 2^p p! mu^{1/4}
# ---------------------------------------------------------------------------

def sqrt_maxwellian_derivative(p: int, v: np.ndarray) -> np.ndarray:
    """``d^p/dv_1^p mu^{1/2}`` for the 3-D Maxwellian at points ``v`` (n, 3)."""
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    # d^p/dx^p e^{-x^2/4} = (-1)^p 2^{-p/2} He_p(x / sqrt 2) e^{-x^2/4}
    x = v[:, 0]
    d1 = (-1) ** p * 2.0 ** (-p / 2) * eval_hermitenorm(p, x / math.sqrt(2)) * np.exp(-x * x / 4)
    return (2 * math.pi) ** (-0.75) * np.exp(-(v[:, 1] ** 2 + v[:, 2] ** 2) / 4) * d1


def check_mu_bound(p_max: int = 10, v_max: float = 6.0, n: int = 41, rel_tol: float = 1e-12) -> InequalityReport:
    g = np.linspace(-v_max, v_max, n)
    pts = np.array(list(product(g, g[::4], g[::4])))
    pts = pts[np.linalg.norm(pts, axis=1) <= v_max]
    mu14 = ((2 * math.pi) ** -1.5 * np.exp(-0.5 * np.sum(pts ** 2, axis=1))) ** 0.25
    rep = InequalityReport("mu_bound")
    for p in range(0, p_max + 1):
        lhs = np.abs(sqrt_maxwellian_derivative(p, pts))
        rhs = 2.0 ** p * math.exp(gammaln(p + 1)) * mu14
        i = int(np.argmax(lhs / rhs))
        rep.add("mu_derivative", f"p={p};v={tuple(np.round(pts[i], 3))}", lhs[i], rhs[i])
        rep.n_checked += len(pts)
        rep.n_violations += int(np.sum(lhs > rhs * (1 + rel_tol)))
    return rep


def run_inequality_suite(s_values=(0.25, 0.5, 0.75), m_max: int = 8, rng: int = 4, seed: int = 0) -> InequalityReport:
    rep = InequalityReport("inequality_suite")
    rep.merge(check_binomial_lattice(m_max, rng))
    for s in s_values:
        rep.merge(check_interpolation(s))
    rep.merge(check_split_lemma(seed=seed))
    rep.merge(check_minkowski(seed=seed))
    rep.merge(check_mu_bound())
    return rep
