"""Grids, field containers, Fourier transforms and analytic test functions.

Conventions
-----------
* Spatial Fourier coefficients are normalised so that ``f(x) = sum_k fhat_k e^{ik.x}``
  on the torus ``[0, 2pi)^d``; equivalently ``fhat_k = (2pi)^{-d} int e^{-ik.x} f dx``.
  Physical L2 norms in ``x`` use the normalised measure ``dx / (2pi)^d`` so that
  Parseval reads ``||f||_{L2_x} = ||fhat||_{l2_k}``.
* The velocity transform is ``F_v g(eta) = int e^{-i eta.v} g(v) dv``. On the
  periodised grid over ``[-V, V)`` it is realised as ``h * sum_j g(v_j) e^{-i eta v_j}``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import eval_hermitenorm

Poly = Dict[Tuple[int, ...], complex]


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical configuration shared by every module."""

    s: float = 0.5
    gamma: float = 0.0
    d_x: int = 1
    d_v: int = 1
    K: int = 16
    V: float = 8.0
    N_v: int = 64
    theta_min: float = math.pi / 128
    n_sphere: int = 16
    dt: float = 0.01
    t_max: float = 1.0
    tol: Dict[str, float] = field(default_factory=lambda: {
        "roundtrip": 1e-12,
        "parseval": 1e-10,
        "noise_floor": 1e-13,
        "dissipation": 1e-8,
    })

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0,1), got {self.s}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0,1], got {self.gamma}")
        if self.d_x not in (1, 2, 3):
            raise ValueError("d_x must be 1, 2 or 3")
        if self.d_v not in (1, 3):
            raise ValueError("d_v must be 1 or 3")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.N_v < 8 or self.N_v % 2:
            raise ValueError("N_v must be even and >= 8")
        if not 0.0 < self.theta_min < math.pi / 4:
            raise ValueError("theta_min must lie in (0, pi/4)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def grid(self) -> "PhaseGrid":
        return PhaseGrid(d_x=self.d_x, d_v=self.d_v, K=self.K, V=self.V, N_v=self.N_v)


@dataclass(frozen=True)
class PhaseGrid:
    """Wavenumber lattice {-K..K}^d_x times a periodised uniform velocity grid."""

    d_x: int = 1
    d_v: int = 1
    K: int = 16
    V: float = 8.0
    N_v: int = 64

    def __post_init__(self):
        if self.N_v % 2:
            raise ValueError("N_v must be even")

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def h(self) -> float:
        return 2.0 * self.V / self.N_v

    @property
    def v1d(self) -> np.ndarray:
        return -self.V + self.h * np.arange(self.N_v)

    @property
    def eta1d(self) -> np.ndarray:
        """Dual grid in FFT order (matches ``np.fft.fft`` output)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N_v, d=self.h)

    @property
    def eta_max(self) -> float:
        return np.pi / self.h

    @property
    def shape(self) -> Tuple[int, ...]:
        return (2 * self.K + 1,) * self.d_x + (self.N_v,) * self.d_v

    def k_mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.ks] * self.d_x), indexing="ij"))

    def v_points(self) -> np.ndarray:
        """All velocity grid points, shape (N_v**d_v, d_v), row-major."""
        mesh = np.meshgrid(*([self.v1d] * self.d_v), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def eta_points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.eta1d] * self.d_v), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def k_index(self, k: Sequence[int]) -> Tuple[int, ...]:
        k = tuple(int(q) for q in k)
        if any(abs(q) > self.K for q in k):
            raise ValueError(f"wavenumber {k} exceeds K={self.K}")
        return tuple(q + self.K for q in k)


@dataclass
class KvField:
    """Partial Fourier state fhat(t, k, v) on a :class:`PhaseGrid`."""

    values: np.ndarray
    grid: PhaseGrid
    time_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("KvField entries must be finite")

    def column(self, k: Sequence[int]) -> np.ndarray:
        return self.values[self.grid.k_index(k)]

    def copy(self, values=None, time_tag=None) -> "KvField":
        return KvField(self.values.copy() if values is None else values, self.grid,
                       self.time_tag if time_tag is None else time_tag)

    def l2v_per_k(self) -> np.ndarray:
        """L2_v norm of every k column; shape (2K+1,)*d_x."""
        axes = tuple(range(self.grid.d_x, self.grid.d_x + self.grid.d_v))
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=axes) * self.grid.h ** self.grid.d_v)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.l2v_per_k() ** 2)))

    def reality_defect(self) -> float:
        """max |fhat(-k, v) - conj fhat(k, v)|; zero for real physical fields."""
        flipped = self.values[(slice(None, None, -1),) * self.grid.d_x]
        return float(np.max(np.abs(flipped - np.conj(self.values))))

    def v_transform(self) -> np.ndarray:
        """Velocity transform of every column (FFT order in eta)."""
        g = self.grid
        axes = tuple(range(g.d_x, g.d_x + g.d_v))
        # shift so that sum_j g(v_j) e^{-i eta v_j} with v_j = -V + j h
        phase = np.exp(1j * g.eta1d * g.V)
        out = np.fft.fftn(self.values, axes=axes) * g.h ** g.d_v
        for ax in axes:
            shp = [1] * out.ndim
            shp[ax] = g.N_v
            out = out * phase.reshape(shp)
        return out

    @staticmethod
    def from_v_transform(fhat_eta: np.ndarray, grid: PhaseGrid, time_tag: float = 0.0) -> "KvField":
        axes = tuple(range(grid.d_x, grid.d_x + grid.d_v))
        phase = np.exp(-1j * grid.eta1d * grid.V)
        tmp = np.array(fhat_eta, dtype=complex)
        for ax in axes:
            shp = [1] * tmp.ndim
            shp[ax] = grid.N_v
            tmp = tmp * phase.reshape(shp)
        vals = np.fft.ifftn(tmp, axes=axes) / grid.h ** grid.d_v
        return KvField(vals, grid, time_tag)


@dataclass
class PhaseSpectrum:
    """Full Fourier state F_{x,v} g(k, eta).

    Either gridded (``values`` on ``ks`` x ``etas``) or analytic (``fn(k, eta)``
    callable, vectorised over eta) or both.
    """

    values: Optional[np.ndarray] = None
    ks: Optional[np.ndarray] = None
    etas: Optional[np.ndarray] = None
    fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    time_tag: float = 0.0

    def __call__(self, k, eta):
        if self.fn is None:
            raise ValueError("PhaseSpectrum has no analytic callable")
        return self.fn(k, eta)

    def sample(self, ks: np.ndarray, etas: np.ndarray) -> "PhaseSpectrum":
        """Sample the analytic callable on a (k, eta) lattice (d_x = d_v = 1 layout)."""
        ks = np.asarray(ks)
        etas = np.asarray(etas, dtype=float)
        vals = np.stack([np.asarray(self.fn(np.atleast_1d(k), etas)) for k in ks])
        return PhaseSpectrum(vals, ks, etas, self.fn, self.time_tag)


def maxwellian(v, d_v: Optional[int] = None) -> np.ndarray:
    """Normalised Maxwellian ``(2pi)^{-d/2} exp(-|v|^2/2)``.

    Parameters
    ----------
    v : array_like
        Velocity points. The last axis holds the components unless ``d_v == 1``
        is passed, in which case every entry is a 1-D velocity. A scalar is a
        1-D velocity.
    d_v : int, optional
        Velocity dimension; inferred from the last axis when omitted.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or d_v == 1:
        return (2 * np.pi) ** -0.5 * np.exp(-0.5 * v ** 2)
    d = v.shape[-1]
    if d_v is not None and d != d_v:
        raise ValueError("last axis does not match d_v")
    return (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(v ** 2, axis=-1))


def transform_x(phys: np.ndarray, d_x: int, K: Optional[int] = None) -> np.ndarray:
    """Normalised spatial Fourier coefficients of a field sampled on [0, 2pi)^d_x.

    The leading ``d_x`` axes of ``phys`` are spatial. Returns an array whose
    leading axes index k in -K..K (centred ordering).
    """
    phys = np.asarray(phys)
    if phys.ndim < d_x:
        raise ValueError("dimension mismatch: fewer axes than d_x")
    N = phys.shape[:d_x]
    if len(set(N)) != 1:
        raise ValueError("spatial grid must be cubic")
    N = N[0]
    if K is None:
        K = (N - 1) // 2
    if 2 * K + 1 > N:
        raise ValueError(f"K={K} not representable on N_x={N}")
    axes = tuple(range(d_x))
    c = np.fft.fftn(phys, axes=axes) / N ** d_x
    c = np.fft.fftshift(c, axes=axes)
    lo = N // 2 - K
    sl = (slice(lo, lo + 2 * K + 1),) * d_x
    return c[sl]


def inverse_transform_x(coef: np.ndarray, d_x: int, N_x: Optional[int] = None) -> np.ndarray:
    coef = np.asarray(coef, dtype=complex)
    n = coef.shape[0]
    if any(coef.shape[a] != n for a in range(d_x)):
        raise ValueError("dimension mismatch in wavenumber axes")
    K = (n - 1) // 2
    N = n if N_x is None else N_x
    if N < n:
        raise ValueError("N_x too small for the stored wavenumbers")
    full = np.zeros((N,) * d_x + coef.shape[d_x:], dtype=complex)
    lo = N // 2 - K
    full[(slice(lo, lo + n),) * d_x] = coef
    full = np.fft.ifftshift(full, axes=tuple(range(d_x)))
    return np.fft.ifftn(full, axes=tuple(range(d_x))) * N ** d_x


def physical_x_grid(N_x: int) -> np.ndarray:
    return 2 * np.pi * np.arange(N_x) / N_x


# ---------------------------------------------------------------------------
# Analytic states
# ---------------------------------------------------------------------------

def _poly_add(a: Poly, b: Poly, scale: complex = 1.0) -> Poly:
    out = dict(a)
    for e, c in b.items():
        out[e] = out.get(e, 0.0) + scale * c
    return {e: c for e, c in out.items() if c != 0}


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


def _poly_diff(a: Poly, j: int) -> Poly:
    out: Poly = {}
    for e, c in a.items():
        if e[j] > 0:
            e2 = list(e)
            e2[j] -= 1
            out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * e[j]
    return out


def _poly_eval(a: Poly, v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[0], dtype=complex)
    for e, c in a.items():
        term = np.full(v.shape[0], c, dtype=complex)
        for j, p in enumerate(e):
            if p:
                term = term * v[:, j] ** p
        out += term
    return out


def _poly_shift(a: Poly, v0: Sequence[float]) -> Poly:
    """Re-expand p(v) in powers of u = v - v0."""
    out: Poly = {}
    for e, c in a.items():
        # prod_j (u_j + v0_j)^{e_j}
        parts = []
        for j, p in enumerate(e):
            parts.append([(q, math.comb(p, q) * v0[j] ** (p - q)) for q in range(p + 1)])
        for combo in product(*parts):
            exps = tuple(q for q, _ in combo)
            w = c
            for _, f in combo:
                w = w * f
            out[exps] = out.get(exps, 0.0) + w
    return {e: c for e, c in out.items() if c != 0}


@dataclass(frozen=True)
class Term:
    """``coef * e^{ik.x} * p(v) * exp(-|v - center|^2 / (2 width^2))``."""

    coef: complex
    k: Tuple[int, ...]
    poly: Tuple[Tuple[Tuple[int, ...], complex], ...]
    center: Tuple[float, ...]
    width: float

    @property
    def p(self) -> Poly:
        return dict(self.poly)


def _term(coef, k, poly: Poly, center, width) -> Term:
    return Term(complex(coef), tuple(int(q) for q in k),
                tuple(sorted(poly.items())), tuple(float(c) for c in center), float(width))


@dataclass(frozen=True)
class AnalyticState:
    """Finite sum of Gaussian-times-polynomial velocity profiles with single x-modes.

    Closed under ``d/dx_j``, ``d/dv_j`` and multiplication by polynomials in v, and
    evaluable exactly anywhere. Coefficients are stored per term; like terms are
    merged only by :meth:`simplify`.
    """

    terms: Tuple[Term, ...]
    d_x: int = 1
    d_v: int = 1

    # -- constructors ---------------------------------------------------
    @staticmethod
    def gaussian(d_x: int = 1, d_v: int = 1, coef: complex = 1.0, k=None, center=None,
                 width: float = 1.0, poly: Optional[Poly] = None) -> "AnalyticState":
        k = (0,) * d_x if k is None else tuple(np.atleast_1d(k))
        center = (0.0,) * d_v if center is None else tuple(np.atleast_1d(center))
        poly = {(0,) * d_v: 1.0} if poly is None else poly
        if len(k) != d_x or len(center) != d_v:
            raise ValueError("dimension mismatch")
        return AnalyticState((_term(coef, k, poly, center, width),), d_x, d_v)

    @staticmethod
    def sqrt_maxwellian(d_x: int = 1, d_v: int = 3, poly: Optional[Poly] = None, k=None,
                        coef: complex = 1.0) -> "AnalyticState":
        """``coef * p(v) * mu^{1/2}`` with ``mu`` the normalised Maxwellian."""
        c = coef * (2 * np.pi) ** (-d_v / 4)
        return AnalyticState.gaussian(d_x, d_v, c, k, None, math.sqrt(2.0), poly)

    @staticmethod
    def maxwellian_state(d_x: int = 1, d_v: int = 3, poly: Optional[Poly] = None,
                         coef: complex = 1.0) -> "AnalyticState":
        c = coef * (2 * np.pi) ** (-d_v / 2)
        return AnalyticState.gaussian(d_x, d_v, c, None, None, 1.0, poly)

    @staticmethod
    def zero(d_x: int = 1, d_v: int = 1) -> "AnalyticState":
        return AnalyticState((), d_x, d_v)

    # -- algebra ----------------------------------------------------------
    def _check(self, other: "AnalyticState"):
        if (self.d_x, self.d_v) != (other.d_x, other.d_v):
            raise ValueError("dimension mismatch")

    def __add__(self, other: "AnalyticState") -> "AnalyticState":
        self._check(other)
        return AnalyticState(self.terms + other.terms, self.d_x, self.d_v)

    def __sub__(self, other: "AnalyticState") -> "AnalyticState":
        return self + other.scale(-1.0)

    def __mul__(self, c: complex) -> "AnalyticState":
        return self.scale(c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c: complex) -> "AnalyticState":
        return AnalyticState(tuple(_term(t.coef * c, t.k, t.p, t.center, t.width) for t in self.terms
                                   if t.coef * c != 0), self.d_x, self.d_v)

    def simplify(self) -> "AnalyticState":
        """Merge terms sharing wavenumber, centre and width into one polynomial each."""
        groups: dict = {}
        for t in self.terms:
            key = (t.k, t.center, t.width)
            groups[key] = _poly_add(groups.get(key, {}), t.p, t.coef)
        return AnalyticState(tuple(_term(1.0, k, p, c, w) for (k, c, w), p in groups.items() if p),
                             self.d_x, self.d_v)

    def dx(self, j: int = 0, n: int = 1) -> "AnalyticState":
        return AnalyticState(tuple(_term(t.coef * (1j * t.k[j]) ** n, t.k, t.p, t.center, t.width)
                                   for t in self.terms if n == 0 or t.k[j] != 0), self.d_x, self.d_v)

    def dv(self, j: int = 0, n: int = 1) -> "AnalyticState":
        out = self
        for _ in range(n):
            new = []
            for t in out.terms:
                # d/dv_j [p e^{-|v-c|^2/2w^2}] = (dp - p (v_j - c_j)/w^2) e^{...}
                lin: Poly = {}
                e1 = tuple(1 if i == j else 0 for i in range(self.d_v))
                lin[e1] = -1.0 / t.width ** 2
                lin[(0,) * self.d_v] = t.center[j] / t.width ** 2
                p = _poly_add(_poly_diff(t.p, j), _poly_mul(t.p, lin))
                if p:
                    new.append(_term(t.coef, t.k, p, t.center, t.width))
            out = AnalyticState(tuple(new), self.d_x, self.d_v)
        return out

    def mul_poly(self, poly: Poly) -> "AnalyticState":
        return AnalyticState(tuple(_term(t.coef, t.k, _poly_mul(t.p, poly), t.center, t.width)
                                   for t in self.terms), self.d_x, self.d_v)

    def mul_v(self, j: int) -> "AnalyticState":
        return self.mul_poly({tuple(1 if i == j else 0 for i in range(self.d_v)): 1.0})

    # -- evaluation -------------------------------------------------------
    @property
    def wavenumbers(self) -> set:
        return {t.k for t in self.terms}

    @property
    def max_wavenumber(self) -> int:
        return max((max(abs(q) for q in t.k) for t in self.terms), default=0)

    def profile(self, k: Sequence[int], v: np.ndarray) -> np.ndarray:
        """Velocity profile multiplying ``e^{ik.x}`` evaluated at points ``v`` (n, d_v)."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.shape[-1] != self.d_v:
            v = v.reshape(-1, self.d_v)
        k = tuple(int(q) for q in np.atleast_1d(k))
        out = np.zeros(v.shape[0], dtype=complex)
        for t in self.terms:
            if t.k != k:
                continue
            r2 = np.sum((v - np.asarray(t.center)) ** 2, axis=1)
            out += t.coef * _poly_eval(t.p, v) * np.exp(-0.5 * r2 / t.width ** 2)
        return out

    def evaluate(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Physical values at paired points x (n, d_x) and v (n, d_v)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d_x)
        v = np.asarray(v, dtype=float).reshape(-1, self.d_v)
        out = np.zeros(x.shape[0], dtype=complex)
        for t in self.terms:
            r2 = np.sum((v - np.asarray(t.center)) ** 2, axis=1)
            out += (t.coef * np.exp(1j * x @ np.asarray(t.k, dtype=float)) * _poly_eval(t.p, v)
                    * np.exp(-0.5 * r2 / t.width ** 2))
        return out

    def fourier_v(self, k: Sequence[int], eta: np.ndarray) -> np.ndarray:
        """Closed-form ``int e^{-i eta.v} profile_k(v) dv`` at points eta (n, d_v)."""
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if eta.shape[-1] != self.d_v:
            eta = eta.reshape(-1, self.d_v)
        k = tuple(int(q) for q in np.atleast_1d(k))
        out = np.zeros(eta.shape[0], dtype=complex)
        for t in self.terms:
            if t.k != k:
                continue
            w = t.width
            base = (2 * np.pi * w * w) ** (self.d_v / 2) * np.exp(
                -0.5 * w * w * np.sum(eta ** 2, axis=1) - 1j * eta @ np.asarray(t.center))
            acc = np.zeros(eta.shape[0], dtype=complex)
            for e, c in _poly_shift(t.p, t.center).items():
                # FT[u^n e^{-u^2/2w^2}] / FT[e^{-u^2/2w^2}] = (i)^n (-w)^n He_n(w eta)
                f = np.full(eta.shape[0], c, dtype=complex)
                for j, n in enumerate(e):
                    if n:
                        f = f * (1j) ** n * (-w) ** n * eval_hermitenorm(n, w * eta[:, j])
                acc += f
            out += t.coef * base * acc
        return out

    def spectrum(self) -> PhaseSpectrum:
        """Analytic-mode PhaseSpectrum of this state."""
        def fn(k, eta):
            return self.fourier_v(k, np.asarray(eta).reshape(-1, self.d_v))
        return PhaseSpectrum(fn=fn)

    def is_real_k0(self) -> bool:
        return all(t.k == (0,) * self.d_x and abs(np.imag(t.coef)) == 0
                   and all(np.imag(c) == 0 for c in t.p.values()) for t in self.terms)


def sample_analytic(state: AnalyticState, grid: PhaseGrid, time_tag: float = 0.0) -> KvField:
    """Exact sampling of an analytic state on a phase-space grid."""
    if (state.d_x, state.d_v) != (grid.d_x, grid.d_v):
        raise ValueError("dimension mismatch between state and grid")
    if state.max_wavenumber > grid.K:
        raise ValueError(f"state wavenumber {state.max_wavenumber} exceeds K={grid.K}")
    vals = np.zeros(grid.shape, dtype=complex)
    vp = grid.v_points()
    vshape = (grid.N_v,) * grid.d_v
    for k in state.wavenumbers:
        vals[grid.k_index(k)] += state.profile(k, vp).reshape(vshape)
    return KvField(vals, grid, time_tag)


def l2_norm_state(state: AnalyticState, order: int = 48) -> float:
    """Exact-to-roundoff L2_{x,v} norm (normalised x-measure) via Gauss-Hermite per term width."""
    if not state.terms:
        return 0.0
    total = 0.0
    widths = [t.width for t in state.terms]
    centers = np.array([t.center for t in state.terms])
    c0 = centers.mean(axis=0)
    w = max(widths)
    x, wt = np.polynomial.hermite_e.hermegauss(order)
    mesh = np.meshgrid(*([x] * state.d_v), indexing="ij")
    wmesh = np.meshgrid(*([wt] * state.d_v), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1) * w + c0
    wts = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=1) * w ** state.d_v
    gauss = np.exp(-0.5 * np.sum((pts - c0) ** 2, axis=1) / w ** 2)
    for k in state.wavenumbers:
        prof = state.profile(k, pts)
        total += float(np.sum(wts * np.abs(prof) ** 2 / gauss))
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# Binary snapshots
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<qqqqdd")


def save_field(path, fld: KvField) -> None:
    """Write ``d_x, d_v, K, N_v`` (int64), ``V, time_tag`` (float64), then complex128 values."""
    g = fld.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.d_x, g.d_v, g.K, g.N_v, float(g.V), float(fld.time_tag)))
        fh.write(np.ascontiguousarray(fld.values, dtype="<c16").tobytes())


def load_field(path) -> KvField:
    data = Path(path).read_bytes()
    d_x, d_v, K, N_v, V, tt = _HEADER.unpack_from(data, 0)
    grid = PhaseGrid(d_x=d_x, d_v=d_v, K=K, V=V, N_v=N_v)
    vals = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if vals.size != int(np.prod(grid.shape)):
        raise ValueError("snapshot payload size does not match header")
    return KvField(vals.reshape(grid.shape).copy(), grid, tt)


def velocity_derivative(fld: KvField, j: int = 0, n: int = 1) -> KvField:
    """Spectral ``d^n/dv_j^n`` on the periodised velocity grid (Nyquist zeroed for odd n)."""
    g = fld.grid
    axis = g.d_x + j
    eta = g.eta1d.copy()
    mult = (1j * eta) ** n
    if n % 2:
        mult[g.N_v // 2] = 0.0
    shp = [1] * fld.values.ndim
    shp[axis] = g.N_v
    hat = np.fft.fft(fld.values, axis=axis)
    return fld.copy(np.fft.ifft(hat * mult.reshape(shp), axis=axis))


def spatial_derivative(fld: KvField, j: int = 0, n: int = 1) -> KvField:
    g = fld.grid
    shp = [1] * fld.values.ndim
    shp[j] = 2 * g.K + 1
    return fld.copy(fld.values * ((1j * g.ks) ** n).reshape(shp))


def gauss_hermite_rule(order: int, d: int, scale: float = 1.0):
    """Tensor Gauss-Hermite nodes/weights for weight exp(-|v|^2/(2 scale^2)).

    Returns ``(nodes (n,d), weights (n,))`` such that
    ``sum w_i f(v_i) ~= int f(v) exp(-|v|^2/(2 scale^2)) dv``.
    """
    x, w = np.polynomial.hermite_e.hermegauss(order)
    mesh = np.meshgrid(*([x * scale] * d), indexing="ij")
    wm = np.meshgrid(*([w * scale] * d), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod(np.stack([m.ravel() for m in wm], axis=-1), axis=1)
    return nodes, weights
