"""Hypoelliptic symbol ``lambda_k(eta)``, the multiplier ``M = 1 + c0 lambda_k(D_v)`` and symbol inequalities.

Sign convention: velocity transforms in this package are ``int e^{-i eta v} g dv``.
With that convention ``Re(i (v.k) h, lambda(D) h)`` equals
``(1/2)(2 pi)^{-d} int (k . grad lambda) |F h|^2``, so the lower bound
``D(k, eta) = -k . grad_eta lambda_k(eta) >= <k>^{2s/(1+2s)} - C <eta>^{2s}``
is produced by the reflected symbol ``lambda_k(-eta)``. :func:`apply_M` and the
energy bookkeeping use the reflected symbol; the symbol scan uses ``D`` itself,
which is even in ``eta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fields import PhaseGrid


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------

def _psi(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dpsi(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def chi(r):
    """Smooth cutoff: 1 on ``[-1, 1]``, 0 outside ``(-2, 2)``, monotone on ``[1, 2]``.

    ``chi(r) = psi(2 - |r|) / (psi(2 - |r|) + psi(|r| - 1))`` with ``psi(x) = e^{-1/x}`` for ``x > 0``.
    """
    a = np.abs(np.asarray(r, float))
    p, q = _psi(2.0 - a), _psi(a - 1.0)
    return p / (p + q)


def chi_prime(r):
    """``d chi / d|r|`` (nonpositive)."""
    a = np.abs(np.asarray(r, float))
    p, q = _psi(2.0 - a), _psi(a - 1.0)
    dp, dq = -_dpsi(2.0 - a), _dpsi(a - 1.0)
    den = (p + q) ** 2
    return (dp * q - p * dq) / den


def chi_reference(n: int = 11) -> np.ndarray:
    """Reference table ``(r, chi(r))`` on ``[0.8, 2.2]``; committed values are checked in the tests."""
    r = np.linspace(0.8, 2.2, n)
    return np.stack([r, chi(r)], axis=1)


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolSpec:
    s: float = 0.5
    c0: float = 0.25

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0,1)")
        if not 0 <= self.c0 < 1:
            raise ValueError("c0 must lie in [0,1)")

    @property
    def amp_exponent(self) -> float:
        return (2 + 2 * self.s) / (1 + 2 * self.s)

    @property
    def radius_exponent(self) -> float:
        return 1 / (1 + 2 * self.s)

    @property
    def gain_exponent(self) -> float:
        return 2 * self.s / (1 + 2 * self.s)


def _bracket(x):
    return np.sqrt(1.0 + x)


def _prep(k, eta):
    k = np.asarray(k, float)
    eta = np.asarray(eta, float)
    if k.ndim == 0:
        k = k[None]
    if eta.ndim == 0 or (eta.ndim == 1 and k.shape[-1] != 1 and eta.shape[-1] != k.shape[-1]):
        eta = np.asarray(eta, float)[..., None]
    if eta.ndim == 1 and k.shape[-1] == 1:
        eta = eta[:, None]
    return k, eta


def lambda_symbol(k, eta, s: float):
    """``lambda_k(eta) = -(k.eta) / <k>^{(2+2s)/(1+2s)} chi(|eta| / <k>^{1/(1+2s)})``.

    ``k`` has shape ``(d,)``; ``eta`` has shape ``(..., d)`` (scalars allowed for ``d = 1``).
    """
    k, eta = _prep(k, eta)
    sp = SymbolSpec(s)
    kb = _bracket(float(k @ k))
    kdot = eta @ k
    r = np.linalg.norm(eta, axis=-1) / kb ** sp.radius_exponent
    return -kdot / kb ** sp.amp_exponent * chi(r)


def lambda_gradient(k, eta, s: float):
    """Closed-form ``grad_eta lambda_k(eta)``, shape ``(..., d)``."""
    k, eta = _prep(k, eta)
    sp = SymbolSpec(s)
    kb = _bracket(float(k @ k))
    A = kb ** -sp.amp_exponent
    R = kb ** sp.radius_exponent
    ne = np.linalg.norm(eta, axis=-1)
    r = ne / R
    kdot = eta @ k
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(ne[..., None] > 0, eta / np.where(ne > 0, ne, 1.0)[..., None], 0.0)
    return -A * (k * chi(r)[..., None] + (kdot * chi_prime(r) / R)[..., None] * unit)


def D_symbol(k, eta, s: float):
    """``D = -k . grad_eta lambda_k(eta) = A [|k|^2 chi + (k.eta)^2 chi'(r) / (|eta| R)]``."""
    k, eta = _prep(k, eta)
    return -(lambda_gradient(k, eta, s) @ k)


def _reduced(kn: float, r: np.ndarray, c: np.ndarray, s: float):
    """``(lambda, D, <eta>^{2s})`` in terms of ``|k|``, ``r = |eta|/R`` and ``c = cos(k, eta)``."""
    sp = SymbolSpec(s)
    kb = math.sqrt(1 + kn * kn)
    A = kb ** -sp.amp_exponent
    R = kb ** sp.radius_exponent
    ne = r * R
    lam = -A * kn * ne * c * chi(r)
    D = A * kn * kn * (chi(r) + c * c * r * chi_prime(r))
    eb = (1 + ne * ne) ** s
    return lam, D, eb


@dataclass
class SymbolScan:
    s: float
    C_min: float                 # smallest admissible C in D >= <k>^{2s/(1+2s)} - C <eta>^{2s}
    argmax: Tuple[float, float, float]
    max_abs_lambda: float
    lambda_argmax: Tuple[float, float, float]
    plateau_margin: float        # min over plateau samples of D - (<k>^{2s/(1+2s)} - 1)
    per_k: List[Tuple[float, float, float, float]]  # (|k|, C needed, plateau margin, max |lambda|)
    violations: int              # samples violating the inequality with C_min (zero by construction)
    lambda_violations: int       # samples with |lambda| > 1
    n_samples: int
    deriv_bounds: Dict[int, float] = field(default_factory=dict)


def _k_norms(k_range: int, d: int) -> np.ndarray:
    ax = np.arange(-k_range, k_range + 1)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    sq = sum(m ** 2 for m in mesh).ravel()
    return np.sqrt(np.unique(sq))


def symbol_bound_scan(s: float, k_range: int = 8, n_r: int = 400, n_c: int = 41, r_max: float = 4.0,
                      d: int = 3, tail: Sequence[float] = (8.0, 16.0, 64.0, 256.0)) -> SymbolScan:
    """Scan ``D(k, eta)`` against ``<k>^{2s/(1+2s)} - C <eta>^{2s}`` over ``k in Z^d``, ``|k_i| <= k_range``.

    The symbol depends only on ``|k|``, ``r = |eta| / <k>^{1/(1+2s)}`` and the cosine
    between ``k`` and ``eta``; those are sampled on a structured grid (``n_r`` radii on
    ``[0, r_max]`` plus ``tail`` radii, ``n_c`` cosines on ``[0, 1]``).
    """
    sp = SymbolSpec(s)
    r = np.concatenate([np.linspace(0.0, r_max, n_r), np.asarray(tail, float)])
    c = np.linspace(0.0, 1.0, n_c)
    Rg, Cg = np.meshgrid(r, c, indexing="ij")
    best, arg = -math.inf, (0.0, 0.0, 0.0)
    lmax, larg = 0.0, (0.0, 0.0, 0.0)
    margin = math.inf
    per_k = []
    lam_viol = 0
    store = []
    for kn in _k_norms(k_range, d):
        lam, D, eb = _reduced(kn, Rg, Cg, s)
        gain = (1 + kn * kn) ** (sp.gain_exponent / 2)
        need = (gain - D) / eb
        i = np.unravel_index(np.argmax(need), need.shape)
        if need[i] > best:
            best, arg = float(need[i]), (float(kn), float(Rg[i]), float(Cg[i]))
        j = np.unravel_index(np.argmax(np.abs(lam)), lam.shape)
        if abs(lam[j]) > lmax:
            lmax, larg = float(abs(lam[j])), (float(kn), float(Rg[j]), float(Cg[j]))
        lam_viol += int(np.sum(np.abs(lam) > 1.0))
        plateau = Rg <= 1.0
        mk = float(np.min(D[plateau] - (gain - 1.0)))
        if kn > 0:
            margin = min(margin, mk)
        per_k.append((float(kn), float(need.max()), mk, float(np.abs(lam).max())))
        store.append((kn, D, eb, gain))
    viol = sum(int(np.sum(D < g - best * eb - 1e-12 * max(g, 1.0))) for _, D, eb, g in store)
    scan = SymbolScan(s, best, arg, lmax, larg, margin, per_k, viol, lam_viol, len(store) * Rg.size)
    scan.deriv_bounds = derivative_bounds(s, k_range=k_range, d=d)
    return scan


def derivative_bounds(s: float, k_range: int = 8, d: int = 3, n: int = 2000, seed: int = 0, h: float = 1e-5):
    """Max ``|d^alpha lambda_k|`` for ``|alpha| = 0, 1, 2`` over random ``eta`` in the support, all ``k``.

    First derivatives are closed form; second derivatives are central differences of the gradient.
    """
    rng = np.random.default_rng(seed)
    out = {0: 0.0, 1: 0.0, 2: 0.0}
    ax = np.arange(-k_range, k_range + 1)
    ks = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    ks = ks[rng.choice(len(ks), size=min(len(ks), 64), replace=False)]
    for k in ks.astype(float):
        R = (1 + k @ k) ** (1 / (2 * (1 + 2 * s)))
        dirs = rng.normal(size=(n // 16, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        eta = dirs * rng.uniform(0, 2.2 * R, size=(len(dirs), 1))
        out[0] = max(out[0], float(np.max(np.abs(lambda_symbol(k, eta, s)))))
        g = lambda_gradient(k, eta, s)
        out[1] = max(out[1], float(np.max(np.abs(g))))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            hess = (lambda_gradient(k, eta + e, s) - lambda_gradient(k, eta - e, s)) / (2 * h)
            out[2] = max(out[2], float(np.max(np.abs(hess))))
    return out


# ---------------------------------------------------------------------------
# multiplier
# ---------------------------------------------------------------------------

def _eta_mesh(grid: PhaseGrid) -> np.ndarray:
    e = grid.eta1d
    mesh = np.meshgrid(*([e] * grid.d_v), indexing="ij")
    return np.stack(mesh, axis=-1)


def M_symbol(k, grid: PhaseGrid, s: float, c0: float) -> np.ndarray:
    """``1 + c0 lambda_k(-eta)`` on the FFT-ordered dual grid (see the module note on signs)."""
    eta = _eta_mesh(grid)
    k = np.atleast_1d(np.asarray(k, float))
    if k.size != grid.d_v:
        if grid.d_v == 1 and k.size == 1:
            pass
        else:
            kk = np.zeros(grid.d_v)
            kk[: min(k.size, grid.d_v)] = k[: grid.d_v]
            k = kk
    return 1.0 + c0 * lambda_symbol(k, -eta, s)


def apply_M(column: np.ndarray, k, grid: PhaseGrid, s: float = 0.5, c0: float = 0.25) -> np.ndarray:
    """``M h = F^{-1}[(1 + c0 lambda_k(-eta)) F h]`` for one wavenumber column on the velocity grid."""
    if not 0 <= c0 < 1:
        raise ValueError("c0 must lie in [0,1)")
    col = np.asarray(column, complex)
    if c0 == 0:
        return col.copy()
    axes = tuple(range(grid.d_v))
    hat = np.fft.fftn(col, axes=axes)
    return np.fft.ifftn(hat * M_symbol(k, grid, s, c0), axes=axes)


def M_operator_norm(k, grid: PhaseGrid, s: float = 0.5, c0: float = 0.25) -> float:
    """Exact L2 operator norm of the discrete multiplier (its sup on the dual grid)."""
    return float(np.max(np.abs(M_symbol(k, grid, s, c0))))


def c0_admissible(C1: float, C: float, c0: float, sobolev_const: float = 1.0) -> bool:
    """Smallness condition ``C1 - C' c0 > 0`` with ``C' = C / sobolev_const^2``.

    ``C`` is the symbol constant in front of ``||h||_{H^s}^2``; the lower bound
    ``|||h||| >= sobolev_const ||h||_{H^s}`` moves it in front of ``|||h|||^2``.
    """
    return C1 - C / sobolev_const ** 2 * c0 > 0


# ---------------------------------------------------------------------------
# energy bookkeeping on closed-form Kolmogorov spectra (d_x = d_v = 1)
# ---------------------------------------------------------------------------

@dataclass
class Bookkeeping:
    k: float
    t1: float
    t2: float
    lhs: float            # Q(t2) - Q(t1),  Q = (h, lambda~ h)
    rhs: float            # -int (2pi)^{-1} int [D + 2 |eta|^{2s} lambda~] |F h|^2
    identity_residual: float  # |lhs - rhs| relative to the absolute size of the rate integral
    gain_term: float      # <k>^{2s/(1+2s)} int ||h||^2 dt
    bound_rhs: float      # -(Q(t2) - Q(t1)) - 2 int (|eta|^{2s} lambda~ h, h) + C int ||h||_{H^s}^2
    C: float

    @property
    def bound_holds(self) -> bool:
        return self.gain_term <= self.bound_rhs * (1 + 1e-12)


def bookkeeping_check(init, k: float, s: float, t1: float = 0.0, t2: float = 1.0, C: Optional[float] = None,
                      n_t: int = 24, n_graded: int = 6, panel: float = 0.25) -> Bookkeeping:
    """Integrated energy identity for ``(h, lambda~(D) h)`` along the exact Kolmogorov solution at fixed ``k``.

    ``d/dt Q = -(2 pi)^{-1} int [D(eta) + 2 |eta|^{2s} lambda~(eta)] |F h(t, k, eta)|^2 d eta``,
    with ``lambda~(eta) = lambda_k(-eta)``. The left and right sides are compared after
    integrating over ``[t1, t2]`` (Gauss-Legendre in ``t``), and the resulting
    lower bound on ``<k>^{2s/(1+2s)} int ||h||^2`` is evaluated with constant ``C``.
    """
    from .kolmogorov import _as_callable, _zeta_rule, exponent_integral_1d

    fn0, hw = _as_callable(init)
    sp = SymbolSpec(s)
    if C is None:
        C = symbol_bound_scan(s, k_range=max(1, int(abs(k)) + 1), d=1).C_min
    kk = np.array([float(k)])
    R = (1 + k * k) ** (sp.radius_exponent / 2)

    def spectra(t):
        cuts = [t * k + c for c in (-2 * R, -R, R, 2 * R)]
        z, w = _zeta_rule(hw, (0.0, t * k, *cuts), panel)
        eta = z - t * k
        Fh = np.exp(-exponent_integral_1d(t, k, eta, s)) * fn0(k, z)
        return eta, w, np.abs(Fh) ** 2

    def Q(t):
        eta, w, p = spectra(t)
        lt = lambda_symbol(kk, -eta[:, None], s)
        return float(np.sum(w * lt * p)) / (2 * math.pi)

    # panels graded towards t1, where the damped spectrum changes fastest
    x, wl = np.polynomial.legendre.leggauss(n_t)
    edges = t1 + (t2 - t1) * np.concatenate([[0.0], 2.0 ** -np.arange(n_graded, -1, -1)])
    ts = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([0.5 * (b - a) * wl for a, b in zip(edges[:-1], edges[1:])])
    rate, l2, hs, lam_term, mag = 0.0, 0.0, 0.0, 0.0, 0.0
    for t, w_t in zip(ts, wt):
        eta, w, p = spectra(t)
        lt = lambda_symbol(kk, -eta[:, None], s)
        D = D_symbol(kk, eta[:, None], s)
        ae = np.abs(eta) ** (2 * s)
        rate += w_t * float(np.sum(w * (D + 2 * ae * lt) * p)) / (2 * math.pi)
        mag += w_t * float(np.sum(w * np.abs(D + 2 * ae * lt) * p)) / (2 * math.pi)
        lam_term += w_t * float(np.sum(w * ae * lt * p)) / (2 * math.pi)
        l2 += w_t * float(np.sum(w * p)) / (2 * math.pi)
        hs += w_t * float(np.sum(w * (1 + eta ** 2) ** s * p)) / (2 * math.pi)
    lhs = Q(t2) - Q(t1)
    rhs = -rate
    gain = (1 + k * k) ** (sp.gain_exponent / 2) * l2
    bound = -lhs - 2 * lam_term + C * hs
    scale = max(abs(lhs), mag, 1e-300)
    return Bookkeeping(float(k), t1, t2, lhs, rhs, abs(lhs - rhs) / scale, gain, bound, float(C))
