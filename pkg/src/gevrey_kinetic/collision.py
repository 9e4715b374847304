"""Non-cutoff collision operator on analytic test functions (d_v = 3).

Kernel: ``B = |v - v*|^gamma b(cos theta)`` with ``sin(theta) b(cos theta) = theta^{-1-2s}``
on ``[theta_min, pi/2]``. Angular integrals use ``d sigma = sin(theta) d theta d phi``,
so the theta weight is exactly ``theta^{-1-2s}``.

The theta range is split into an outer panel ``[pi/8, pi/2]`` and dyadic panels
``[pi/8 2^{-j-1}, pi/8 2^{-j}]``; each panel is a Gauss-Legendre rule in
``log(theta)``. Integrals are accumulated per panel, which yields the truncated
values for the whole ``theta_min`` sequence at once; these are extrapolated to
``theta_min -> 0`` by a Richardson combination with exponents ``2i - 2s``
(the azimuthal average of every cancellation integrand is ``O(theta^2)`` and
even in ``theta``).

Velocity integrals use tensor Gauss-Hermite rules. Six-dimensional integrals are
written in centre-of-mass coordinates ``V = (v + v*)/2``, ``u = v - v*``, where
``mu mu* = (2 pi)^{-3} exp(-|V|^2 - |u|^2/4)`` is exactly a Gauss-Hermite weight.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .fields import AnalyticState, _term, gauss_hermite_rule

SQRT_MU_C = (2 * math.pi) ** -0.75  # sqrt(mu) = SQRT_MU_C exp(-|v|^2/4)
MU_C = (2 * math.pi) ** -1.5


class ExtrapolationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    gamma: float = 0.0
    s: float = 0.5
    theta_min: float = math.pi / 128
    extrapolation_order: int = 4

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0,1)")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0,1]")
        if not 0 < self.theta_min < math.pi / 4:
            raise ValueError("theta_min must lie in (0, pi/4)")

    def angular_density(self, theta):
        """``sin(theta) b(cos theta)`` on the support."""
        theta = np.asarray(theta, float)
        return np.where((theta >= self.theta_min) & (theta <= math.pi / 2), theta ** (-1 - 2 * self.s), 0.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite orders and the sphere rule.

    ``gh_order`` is the per-axis order for the ``v*`` (or relative velocity)
    integral and ``gh_outer`` for the outer ``v`` (or centre-of-mass) integral.
    The theta rule has ``n_theta_outer`` nodes on ``[pi/8, pi/2]`` plus
    ``n_theta_panel`` nodes on each of ``n_panels`` dyadic panels, so the
    smallest cutoff is ``pi/8 2^{-n_panels}``.
    """

    gh_order: int = 16
    gh_outer: int = 16
    n_theta_outer: int = 16
    n_theta_panel: int = 4
    n_panels: int = 4
    n_phi: int = 16
    theta_top: float = math.pi / 8

    def __post_init__(self):
        if self.gh_order < 2 or self.gh_outer < 2:
            raise ValueError("Gauss-Hermite orders must be >= 2")
        if self.n_panels < 1 or self.n_phi < 2:
            raise ValueError("need at least one dyadic panel and two azimuthal nodes")

    @property
    def n_theta(self) -> int:
        return self.n_theta_outer + self.n_panels * self.n_theta_panel

    @property
    def theta_mins(self) -> np.ndarray:
        """Cutoff sequence (strictly decreasing) matching the accumulated panels."""
        return self.theta_top * 2.0 ** -np.arange(self.n_panels + 1)

    def with_orders(self, gh_order=None, gh_outer=None) -> "QuadratureSpec":
        from dataclasses import replace
        return replace(self, gh_order=gh_order or self.gh_order, gh_outer=gh_outer or self.gh_outer)


def theta_rule(kernel: KernelSpec, quad: QuadratureSpec):
    """Nodes, weights (including ``theta^{-1-2s}``) and panel ids of the theta rule."""
    nodes, weights, pid = [], [], []
    segs = [(quad.theta_top, math.pi / 2, quad.n_theta_outer)]
    for j in range(quad.n_panels):
        segs.append((quad.theta_top * 2.0 ** -(j + 1), quad.theta_top * 2.0 ** -j, quad.n_theta_panel))
    for p, (a, b, n) in enumerate(segs):
        x, w = np.polynomial.legendre.leggauss(n)
        la, lb = math.log(a), math.log(b)
        u = 0.5 * (lb - la) * x + 0.5 * (lb + la)
        th = np.exp(u)
        nodes.append(th)
        # d theta = theta du;  theta^{-1-2s} * theta = theta^{-2s}
        weights.append(0.5 * (lb - la) * w * th ** (-2 * kernel.s))
        pid.append(np.full(n, p, dtype=np.int64))
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(pid)


def richardson_weights(theta_mins: Sequence[float], s: float, n_terms: Optional[int] = None) -> np.ndarray:
    """Weights ``w`` with ``sum w_j I(h_j) = I(0)`` for ``I(h) = I0 + sum_i a_i h^{2i - 2s}``."""
    h = np.asarray(theta_mins, float)
    n = len(h)
    n_terms = n - 1 if n_terms is None else n_terms
    A = np.ones((n_terms + 1, n))
    for i in range(1, n_terms + 1):
        A[i] = h ** (2 * i - 2 * s)
    rhs = np.zeros(n_terms + 1)
    rhs[0] = 1.0
    w, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return w


@dataclass
class Extrapolated:
    value: complex
    raw: np.ndarray            # truncated values for each theta_min (decreasing)
    theta_mins: np.ndarray
    delta: float               # |extrapolation with all levels - with one level fewer|
    converged: bool


def extrapolate(panel_sums: np.ndarray, quad: QuadratureSpec, kernel: KernelSpec,
                rtol: float = 1e-6, atol: float = 0.0, warn: bool = True) -> Extrapolated:
    """Combine per-panel sums (last axis) into the ``theta_min -> 0`` limit."""
    raw = np.cumsum(panel_sums, axis=-1)
    hs = quad.theta_mins
    w_full = richardson_weights(hs, kernel.s, min(kernel.extrapolation_order, len(hs) - 1))
    val = raw @ w_full
    if len(hs) > 2:
        w_less = richardson_weights(hs[1:], kernel.s, min(kernel.extrapolation_order, len(hs) - 2))
        alt = raw[..., 1:] @ w_less
        delta = float(np.max(np.abs(val - alt)))
    else:
        delta = math.inf
    scale = float(np.max(np.abs(val))) if np.size(val) else 0.0
    ok = delta <= rtol * scale + atol
    if not ok and warn:
        warnings.warn(f"theta_min extrapolation not converged: delta={delta:.2e}, scale={scale:.2e}",
                      ExtrapolationWarning)
    return Extrapolated(val, raw, hs, delta, ok)


# ---------------------------------------------------------------------------
# post-collision velocities
# ---------------------------------------------------------------------------

def post_collision(v, v_star, sigma) -> Tuple[np.ndarray, np.ndarray]:
    """sigma-representation ``v' = (v+v*)/2 + |v-v*| sigma/2``, ``v*' = (v+v*)/2 - |v-v*| sigma/2``."""
    v = np.asarray(v, float)
    vs = np.asarray(v_star, float)
    sg = np.asarray(sigma, float)
    if np.any(np.abs(np.linalg.norm(sg, axis=-1) - 1.0) > 1e-12):
        raise ValueError("sigma must be a unit vector")
    mid = 0.5 * (v + vs)
    r = np.linalg.norm(v - vs, axis=-1)[..., None]
    return mid + 0.5 * r * sg, mid - 0.5 * r * sg


# ---------------------------------------------------------------------------
# compiled analytic states
# ---------------------------------------------------------------------------

def compile_state(state: AnalyticState, k: Optional[Sequence[int]] = None, tilde: bool = False):
    """Arrays describing the velocity profile of ``state`` at wavenumber ``k`` (default 0).

    Each term is stored as ``coef * p(v) * exp(-A |v|^2 + L.v)``. With ``tilde`` the
    profile is divided by ``sqrt(mu)`` (folded into ``A``, ``L`` and ``coef``).
    """
    if state.d_v != 3:
        raise ValueError("collision operators need d_v = 3")
    k = tuple([0] * state.d_x) if k is None else tuple(int(q) for q in k)
    terms = [t for t in state.terms if t.k == k]
    n = len(terms)
    coef = np.zeros(n, complex)
    A = np.zeros(n)
    L = np.zeros((n, 3))
    start = np.zeros(n + 1, np.int64)
    ex, pc = [], []
    for i, t in enumerate(terms):
        a = 0.5 / t.width ** 2
        c = np.asarray(t.center, float)
        A[i] = a - (0.25 if tilde else 0.0)
        L[i] = 2 * a * c
        coef[i] = t.coef * math.exp(-a * float(c @ c)) / (SQRT_MU_C if tilde else 1.0)
        if abs(A[i]) < 1e-15:
            A[i] = 0.0
        p = t.p
        for e, cc in p.items():
            ex.append(e)
            pc.append(cc)
        start[i + 1] = start[i] + len(p)
    ex = np.array(ex, np.int64).reshape(-1, 3)
    pc = np.array(pc, complex)
    flat = np.array([A[i] == 0.0 and not np.any(L[i]) for i in range(n)], np.bool_)
    return coef, A, L, flat, start, ex, pc


@numba.njit(cache=True, inline="always")
def _ipow(x, e):
    r = 1.0
    for _ in range(e):
        r *= x
    return r


@numba.njit(cache=True)
def _ev(S, x0, x1, x2):
    coef, A, L, flat, start, ex, pc = S
    tot = 0.0 + 0.0j
    r2 = x0 * x0 + x1 * x1 + x2 * x2
    for t in range(coef.shape[0]):
        p = 0.0 + 0.0j
        for m in range(start[t], start[t + 1]):
            p += pc[m] * (_ipow(x0, ex[m, 0]) * _ipow(x1, ex[m, 1]) * _ipow(x2, ex[m, 2]))
        if flat[t]:
            tot += coef[t] * p
        else:
            tot += coef[t] * p * math.exp(-A[t] * r2 + L[t, 0] * x0 + L[t, 1] * x1 + L[t, 2] * x2)
    return tot


@numba.njit(cache=True)
def _sqrt_mu(x0, x1, x2):
    return 0.2519794355383808 * math.exp(-0.25 * (x0 * x0 + x1 * x1 + x2 * x2))


@numba.njit(cache=True)
def _mu(x0, x1, x2):
    return 0.06349363593424097 * math.exp(-0.5 * (x0 * x0 + x1 * x1 + x2 * x2))


@numba.njit(cache=True)
def _frame(n0, n1, n2):
    if abs(n0) < 0.9:
        a0, a1, a2 = 1.0, 0.0, 0.0
    else:
        a0, a1, a2 = 0.0, 1.0, 0.0
    d = a0 * n0 + a1 * n1 + a2 * n2
    e0 = a0 - d * n0
    e1 = a1 - d * n1
    e2 = a2 - d * n2
    nr = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
    e0 /= nr
    e1 /= nr
    e2 /= nr
    f0 = n1 * e2 - n2 * e1
    f1 = n2 * e0 - n0 * e2
    f2 = n0 * e1 - n1 * e0
    return e0, e1, e2, f0, f1, f2


# mode codes for the six-dimensional kernel
_M_WEAKQ = 0      # G(v*) F(v) (psi(v') - psi(v))                      [S3 is psi]
_M_WEAKQ_T = 1    # same with psi = S3 / sqrt(mu) (S3 compiled with tilde)
_M_DIRICHLET = 2  # 1/4 mu mu* (dH~)(conj dG~),  dH~ = H~' + H~*' - H~ - H~*
_M_TRIPLE1 = 3    # mu* |f - f'|^2
_M_TRIPLE2 = 4    # |f*|^2 (sqrt(mu') - sqrt(mu))^2


@numba.njit(cache=True)
def _kernel6(mode, S1, S2, S3, Vn, Vw, Un, Uw, thn, thw, thp, n_panels, n_phi, gamma):
    out = np.zeros(n_panels + 1, np.complex128)
    absout = np.zeros(n_panels + 1)
    nth = thn.shape[0]
    cth = np.cos(thn)
    sth = np.sin(thn)
    dphi = 2.0 * math.pi / n_phi
    cph = np.empty(n_phi)
    sph = np.empty(n_phi)
    for q in range(n_phi):
        cph[q] = math.cos(q * dphi)
        sph[q] = math.sin(q * dphi)
    for i in range(Vn.shape[0]):
        V0, V1, V2 = Vn[i, 0], Vn[i, 1], Vn[i, 2]
        for j in range(Un.shape[0]):
            u0, u1, u2 = Un[j, 0], Un[j, 1], Un[j, 2]
            r = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            if r == 0.0:
                continue
            w = Vw[i] * Uw[j] * r ** gamma * dphi
            v0, v1, v2 = V0 + 0.5 * u0, V1 + 0.5 * u1, V2 + 0.5 * u2
            s0, s1, s2 = V0 - 0.5 * u0, V1 - 0.5 * u1, V2 - 0.5 * u2
            n0, n1, n2 = u0 / r, u1 / r, u2 / r
            e0, e1, e2, f0, f1, f2 = _frame(n0, n1, n2)
            # node-independent pieces
            base = 0.0 + 0.0j
            aux = 0.0 + 0.0j
            aux2 = 0.0 + 0.0j
            if mode == 0 or mode == 1:
                base = _ev(S1, s0, s1, s2) * _ev(S2, v0, v1, v2)
                aux = _ev(S3, v0, v1, v2)
            elif mode == 2:
                base = 0.25 * _mu(v0, v1, v2) * _mu(s0, s1, s2)
                aux = _ev(S1, v0, v1, v2) + _ev(S1, s0, s1, s2)
                aux2 = _ev(S2, v0, v1, v2) + _ev(S2, s0, s1, s2)
            elif mode == 3:
                base = _mu(s0, s1, s2)
                aux = _ev(S1, v0, v1, v2)
            else:
                fs = _ev(S1, s0, s1, s2)
                base = fs.real * fs.real + fs.imag * fs.imag
                aux = _sqrt_mu(v0, v1, v2)
            for it in range(nth):
                ct = cth[it]
                st = sth[it]
                acc = 0.0 + 0.0j
                for q in range(n_phi):
                    sg0 = ct * n0 + st * (cph[q] * e0 + sph[q] * f0)
                    sg1 = ct * n1 + st * (cph[q] * e1 + sph[q] * f1)
                    sg2 = ct * n2 + st * (cph[q] * e2 + sph[q] * f2)
                    p0, p1, p2 = V0 + 0.5 * r * sg0, V1 + 0.5 * r * sg1, V2 + 0.5 * r * sg2
                    if mode == 0 or mode == 1:
                        acc += base * (_ev(S3, p0, p1, p2) - aux)
                    elif mode == 2:
                        m0, m1, m2 = V0 - 0.5 * r * sg0, V1 - 0.5 * r * sg1, V2 - 0.5 * r * sg2
                        dh = _ev(S1, p0, p1, p2) + _ev(S1, m0, m1, m2) - aux
                        dg = _ev(S2, p0, p1, p2) + _ev(S2, m0, m1, m2) - aux2
                        acc += base * dh * (dg.real - 1j * dg.imag)
                    elif mode == 3:
                        d = aux - _ev(S1, p0, p1, p2)
                        acc += base * (d.real * d.real + d.imag * d.imag)
                    else:
                        d = _sqrt_mu(p0, p1, p2) - aux.real
                        acc += base * d * d
                out[thp[it]] += w * thw[it] * acc
                absout[thp[it]] += abs(w * thw[it] * acc)
    return out, absout


@numba.njit(cache=True)
def _kernel_point(mode, S1, S2, pts, Sn, Sw, thn, thw, thp, n_panels, n_phi, gamma):
    """Pointwise operators at ``pts``.

    mode 0: Q(G, F)(v) = int B (G(v*') F(v') - G(v*) F(v))
    mode 1: int B mu* (h~' + h~*' - h~ - h~*), so that L h = sqrt(mu) * this
    """
    P = pts.shape[0]
    out = np.zeros((P, n_panels + 1), np.complex128)
    absout = np.zeros((P, n_panels + 1))
    nth = thn.shape[0]
    cth = np.cos(thn)
    sth = np.sin(thn)
    dphi = 2.0 * math.pi / n_phi
    cph = np.empty(n_phi)
    sph = np.empty(n_phi)
    for q in range(n_phi):
        cph[q] = math.cos(q * dphi)
        sph[q] = math.sin(q * dphi)
    for p in range(P):
        v0, v1, v2 = pts[p, 0], pts[p, 1], pts[p, 2]
        Fv = _ev(S2, v0, v1, v2) if mode == 0 else _ev(S1, v0, v1, v2)
        for j in range(Sn.shape[0]):
            s0, s1, s2 = Sn[j, 0], Sn[j, 1], Sn[j, 2]
            u0, u1, u2 = v0 - s0, v1 - s1, v2 - s2
            r = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            if r == 0.0:
                continue
            w = Sw[j] * r ** gamma * dphi
            n0, n1, n2 = u0 / r, u1 / r, u2 / r
            e0, e1, e2, f0, f1, f2 = _frame(n0, n1, n2)
            M0, M1, M2 = 0.5 * (v0 + s0), 0.5 * (v1 + s1), 0.5 * (v2 + s2)
            if mode == 0:
                base = _ev(S1, s0, s1, s2) * Fv
                wt = 1.0
            else:
                base = Fv + _ev(S1, s0, s1, s2)
                wt = _mu(s0, s1, s2)
            for it in range(nth):
                ct = cth[it]
                st = sth[it]
                acc = 0.0 + 0.0j
                aacc = 0.0
                for q in range(n_phi):
                    sg0 = ct * n0 + st * (cph[q] * e0 + sph[q] * f0)
                    sg1 = ct * n1 + st * (cph[q] * e1 + sph[q] * f1)
                    sg2 = ct * n2 + st * (cph[q] * e2 + sph[q] * f2)
                    a0, a1, a2 = M0 + 0.5 * r * sg0, M1 + 0.5 * r * sg1, M2 + 0.5 * r * sg2
                    b0, b1, b2 = M0 - 0.5 * r * sg0, M1 - 0.5 * r * sg1, M2 - 0.5 * r * sg2
                    if mode == 0:
                        gain = _ev(S1, b0, b1, b2) * _ev(S2, a0, a1, a2)
                        acc += gain - base
                        aacc += abs(gain) + abs(base)
                    else:
                        ga = _ev(S1, a0, a1, a2)
                        gb = _ev(S1, b0, b1, b2)
                        acc += ga + gb - base
                        aacc += abs(ga) + abs(gb) + abs(base)
                out[p, thp[it]] += w * wt * thw[it] * acc
                absout[p, thp[it]] += w * wt * thw[it] * aacc
    return out, absout


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gh_full(order: int, scale: float):
    """Tensor GH nodes with weights for plain ``dv`` integration (Gaussian weight divided out)."""
    x, w = gauss_hermite_rule(order, 3, scale)
    return x, w * np.exp(0.5 * np.sum(x ** 2, axis=1) / scale ** 2)


def _rules(kernel: KernelSpec, quad: QuadratureSpec):
    th, tw, tp = theta_rule(kernel, quad)
    return th, tw, tp


def _as_states(*states, tilde=False):
    return tuple(compile_state(s, tilde=tilde) if isinstance(s, AnalyticState) else s for s in states)


# which of (S1, S2, S3) are divided by sqrt(mu) in each six-dimensional mode
_TILDE6 = {0: (False, False, False), 1: (False, False, True), 2: (True, True, False),
           3: (False, False, False), 4: (False, False, False)}


_EMPTY = None


def _empty_state():
    global _EMPTY
    if _EMPTY is None:
        _EMPTY = compile_state(AnalyticState.zero(1, 3))
    return _EMPTY


def integrate6(mode: int, S1, S2=None, S3=None, kernel: KernelSpec = KernelSpec(),
               quad: QuadratureSpec = QuadratureSpec(), warn: bool = True,
               rtol: float = 1e-6) -> Tuple[Extrapolated, float]:
    """Six-dimensional angular integral in centre-of-mass coordinates.

    Returns the extrapolated value and the extrapolated integral of the absolute
    integrand (a natural scale).
    """
    S1, S2, S3 = (_as_states(x, tilde=td)[0] if x is not None else _empty_state()
                  for x, td in zip((S1, S2, S3), _TILDE6[mode]))
    Vn, Vw = _gh_full(quad.gh_outer, 1 / math.sqrt(2))
    Un, Uw = _gh_full(quad.gh_order, math.sqrt(2))
    th, tw, tp = _rules(kernel, quad)
    panels, absp = _kernel6(mode, S1, S2, S3, Vn, Vw, Un, Uw, th, tw, tp, quad.n_panels, quad.n_phi,
                            float(kernel.gamma))
    ex = extrapolate(panels, quad, kernel, rtol=rtol, atol=1e-14 * max(float(np.sum(absp)), 1e-300),
                     warn=warn)
    scale = float(np.sum(absp))
    return ex, scale


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def times_sqrt_mu(state: AnalyticState) -> AnalyticState:
    """Exact product ``sqrt(mu) * state`` (Gaussians merged per term)."""
    out = []
    for t in state.terms:
        a = 1.0 / t.width ** 2
        a2 = a + 0.5
        c = np.asarray(t.center)
        c2 = c * a / a2
        fac = math.exp(-0.5 * (a * c @ c - a2 * c2 @ c2))
        out.append(_term(t.coef * SQRT_MU_C * fac, t.k, t.p, c2, 1.0 / math.sqrt(a2)))
    return AnalyticState(tuple(out), state.d_x, state.d_v)


def q_bilinear(G: AnalyticState, F: AnalyticState, v, kernel: KernelSpec = KernelSpec(),
               quad: QuadratureSpec = QuadratureSpec(), scale: float = 1.0, warn: bool = True) -> np.ndarray:
    """``Q(G, F)(v)`` at points ``v`` (n, 3), extrapolated in ``theta_min``.

    The ``v*`` integral is a Gauss-Hermite rule of order ``quad.gh_order`` with
    scale ``scale`` (the Gaussian weight is divided out, so any Schwartz
    integrand is admissible). The gain/loss difference is formed at each node.
    """
    pts = np.atleast_2d(np.asarray(v, float))
    SG, SF = _as_states(G, F)
    Sn, Sw = _gh_full(quad.gh_order, scale)
    th, tw, tp = _rules(kernel, quad)
    panels, _ = _kernel_point(0, SG, SF, pts, Sn, Sw, th, tw, tp, quad.n_panels, quad.n_phi, float(kernel.gamma))
    return extrapolate(panels, quad, kernel, warn=warn, atol=1e-14).value


def linearized_L(h: AnalyticState, v, kernel: KernelSpec = KernelSpec(),
                 quad: QuadratureSpec = QuadratureSpec(), warn: bool = True, with_scale: bool = False):
    """``L h(v) = sqrt(mu) int B mu* (h~' + h~*' - h~ - h~*)`` with ``h~ = h / sqrt(mu)``.

    This is ``mu^{-1/2}[Q(mu, sqrt(mu) h) + Q(sqrt(mu) h, mu)]`` rewritten with
    ``mu' mu*' = mu mu*``.
    """
    pts = np.atleast_2d(np.asarray(v, float))
    (S,) = _as_states(h, tilde=True)
    x, w = gauss_hermite_rule(quad.gh_order, 3, 1.0)
    Sw = w * np.exp(0.5 * np.sum(x ** 2, axis=1))
    th, tw, tp = _rules(kernel, quad)
    panels, absp = _kernel_point(1, S, S, pts, x, Sw, th, tw, tp, quad.n_panels, quad.n_phi,
                                 float(kernel.gamma))
    sm = SQRT_MU_C * np.exp(-0.25 * np.sum(pts ** 2, axis=1))
    val = extrapolate(panels, quad, kernel, warn=warn, atol=1e-14 * float(np.max(np.sum(absp, axis=1)))).value
    if with_scale:
        return sm * val, sm * np.sum(absp, axis=1)
    return sm * val


def gamma_and_L(f: AnalyticState, g: AnalyticState, v, kernel: KernelSpec = KernelSpec(),
                quad: QuadratureSpec = QuadratureSpec(), warn: bool = True):
    """Pair ``(Gamma(f, g)(v), L f(v))`` from :func:`q_bilinear`.

    ``Gamma(f, g) = mu^{-1/2} Q(sqrt(mu) f, sqrt(mu) g)`` and
    ``L f = mu^{-1/2} [Q(mu, sqrt(mu) f) + Q(sqrt(mu) f, mu)]``.
    """
    pts = np.atleast_2d(np.asarray(v, float))
    inv = 1.0 / (SQRT_MU_C * np.exp(-0.25 * np.sum(pts ** 2, axis=1)))
    sf, sg = times_sqrt_mu(f), times_sqrt_mu(g)
    mu = AnalyticState.maxwellian_state(f.d_x, 3)
    gam = inv * q_bilinear(sf, sg, pts, kernel, quad, warn=warn)
    L = inv * (q_bilinear(mu, sf, pts, kernel, quad, warn=warn) + q_bilinear(sf, mu, pts, kernel, quad, warn=warn))
    return gam, L


def weak_collision(G: AnalyticState, F: AnalyticState, psi: AnalyticState, kernel: KernelSpec = KernelSpec(),
                   quad: QuadratureSpec = QuadratureSpec(), tilde: bool = False, warn: bool = True):
    """``int Q(G, F) psi dv = int int int B G* F (psi' - psi)``; ``tilde`` divides psi by sqrt(mu)."""
    ex, scale = integrate6(1 if tilde else 0, G, F, psi, kernel, quad, warn)
    return ex.value, scale


@numba.njit(cache=True)
def _kernel_invariants(S1, S2, Vn, Vw, Un, Uw, thn, thw, thp, n_panels, n_phi, gamma):
    """Per-panel ``int (G(v*') F(v') - G(v*) F(v)) phi(v)`` for ``phi = 1, v1, v2, v3, |v|^2``."""
    out = np.zeros((5, n_panels + 1), np.complex128)
    absout = np.zeros((5, n_panels + 1))
    nth = thn.shape[0]
    cth = np.cos(thn)
    sth = np.sin(thn)
    dphi = 2.0 * math.pi / n_phi
    cph = np.empty(n_phi)
    sph = np.empty(n_phi)
    for q in range(n_phi):
        cph[q] = math.cos(q * dphi)
        sph[q] = math.sin(q * dphi)
    phi = np.empty(5)
    for i in range(Vn.shape[0]):
        V0, V1, V2 = Vn[i, 0], Vn[i, 1], Vn[i, 2]
        for j in range(Un.shape[0]):
            u0, u1, u2 = Un[j, 0], Un[j, 1], Un[j, 2]
            r = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            if r == 0.0:
                continue
            w = Vw[i] * Uw[j] * r ** gamma * dphi
            v0, v1, v2 = V0 + 0.5 * u0, V1 + 0.5 * u1, V2 + 0.5 * u2
            s0, s1, s2 = V0 - 0.5 * u0, V1 - 0.5 * u1, V2 - 0.5 * u2
            phi[0] = 1.0
            phi[1] = v0
            phi[2] = v1
            phi[3] = v2
            phi[4] = v0 * v0 + v1 * v1 + v2 * v2
            n0, n1, n2 = u0 / r, u1 / r, u2 / r
            e0, e1, e2, f0, f1, f2 = _frame(n0, n1, n2)
            base = _ev(S1, s0, s1, s2) * _ev(S2, v0, v1, v2)
            for it in range(nth):
                ct = cth[it]
                st = sth[it]
                acc = 0.0 + 0.0j
                for q in range(n_phi):
                    sg0 = ct * n0 + st * (cph[q] * e0 + sph[q] * f0)
                    sg1 = ct * n1 + st * (cph[q] * e1 + sph[q] * f1)
                    sg2 = ct * n2 + st * (cph[q] * e2 + sph[q] * f2)
                    hr = 0.5 * r
                    acc += (_ev(S1, V0 - hr * sg0, V1 - hr * sg1, V2 - hr * sg2)
                            * _ev(S2, V0 + hr * sg0, V1 + hr * sg1, V2 + hr * sg2) - base)
                val = w * thw[it] * acc
                for m in range(5):
                    out[m, thp[it]] += val * phi[m]
                    absout[m, thp[it]] += abs(val * phi[m])
    return out, absout


INVARIANT_NAMES = ("1", "v1", "v2", "v3", "|v|^2")


def invariant_moments(F: AnalyticState, G: Optional[AnalyticState] = None, kernel: KernelSpec = KernelSpec(),
                      quad: QuadratureSpec = QuadratureSpec(), warn: bool = True):
    """Strong-form ``int Q(G, F)(v) phi(v) dv`` for the five collision invariants (``G = F`` by default).

    Gain and loss terms are integrated as written (no pre/post-collisional
    change of variables), so conservation is only as good as the velocity
    quadrature. Returns ``(values (5,), scales (5,))`` where each scale is the
    integral of the absolute integrand.
    """
    G = F if G is None else G
    SG, SF = _as_states(G, F)
    Vn, Vw = _gh_full(quad.gh_outer, 1 / math.sqrt(2))
    Un, Uw = _gh_full(quad.gh_order, math.sqrt(2))
    th, tw, tp = _rules(kernel, quad)
    panels, absp = _kernel_invariants(SG, SF, Vn, Vw, Un, Uw, th, tw, tp, quad.n_panels, quad.n_phi,
                                      float(kernel.gamma))
    scales = np.sum(absp, axis=1)
    ex = extrapolate(panels, quad, kernel, warn=warn, atol=1e-14 * float(np.max(scales)))
    return ex.value, scales


def L_inner_strong(h: AnalyticState, g: AnalyticState, kernel: KernelSpec = KernelSpec(),
                   quad: QuadratureSpec = QuadratureSpec(), warn: bool = True) -> complex:
    """``<L h, g> = int (L h)(v) conj(g(v)) dv`` with ``L h`` evaluated pointwise on outer GH nodes.

    Nothing here makes the result symmetric or sign-definite; both properties
    emerge only as the quadrature converges.
    """
    x, w = _gh_full(quad.gh_outer, 1.0)
    Lh = linearized_L(h, x, kernel, quad, warn)
    gv = g.profile(tuple([0] * g.d_x), x)
    return complex(np.sum(w * Lh * np.conj(gv)))


def invariant_states(d_x: int = 1) -> List[Tuple[str, AnalyticState]]:
    """``phi sqrt(mu)`` for the five collision invariants."""
    polys = [{(0, 0, 0): 1.0}, {(1, 0, 0): 1.0}, {(0, 1, 0): 1.0}, {(0, 0, 1): 1.0},
             {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}]
    return [(n, AnalyticState.sqrt_maxwellian(d_x, 3, p)) for n, p in zip(INVARIANT_NAMES, polys)]


def null_space_residuals(kernel: KernelSpec = KernelSpec(), quad: QuadratureSpec = QuadratureSpec(),
                         warn: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """``||L phi||_{L^2}`` for the five invariants and the matching absolute-integrand scales."""
    x, w = _gh_full(quad.gh_outer, 1.0)
    res, sc = [], []
    for _, phi in invariant_states():
        L, a = linearized_L(phi, x, kernel, quad, warn, with_scale=True)
        res.append(math.sqrt(float(np.sum(w * np.abs(L) ** 2))))
        sc.append(math.sqrt(float(np.sum(w * a ** 2))))
    return np.array(res), np.array(sc)


def L_inner(h: AnalyticState, g: AnalyticState, kernel: KernelSpec = KernelSpec(),
            quad: QuadratureSpec = QuadratureSpec(), warn: bool = True) -> complex:
    """``<L h, g>`` from the weak form of both collision terms (not symmetrised)."""
    mu = AnalyticState.maxwellian_state(h.d_x, 3)
    sh = times_sqrt_mu(h)
    a, _ = weak_collision(mu, sh, g, kernel, quad, tilde=True, warn=warn)
    b, _ = weak_collision(sh, mu, g, kernel, quad, tilde=True, warn=warn)
    return a + b


def dirichlet_form(h: AnalyticState, g: AnalyticState, kernel: KernelSpec = KernelSpec(),
                   quad: QuadratureSpec = QuadratureSpec(), warn: bool = True) -> complex:
    """``-<L h, g> = 1/4 int B mu mu* (h~' + h~*' - h~ - h~*) conj(g~' + g~*' - g~ - g~*)``."""
    ex, _ = integrate6(_M_DIRICHLET, h, g, None, kernel, quad, warn)
    return ex.value


def triple_norm(f: AnalyticState, kernel: KernelSpec = KernelSpec(), quad: QuadratureSpec = QuadratureSpec(),
                warn: bool = True, parts: bool = False):
    """``|||f|||`` from its two defining integrals."""
    a, _ = integrate6(_M_TRIPLE1, f, None, None, kernel, quad, warn)
    b, _ = integrate6(_M_TRIPLE2, f, None, None, kernel, quad, warn)
    a, b = float(np.real(a.value)), float(np.real(b.value))
    val = math.sqrt(max(a + b, 0.0))
    return (val, a, b) if parts else val


def sobolev_norm(f: AnalyticState, s: float, order: int = 24) -> float:
    """``||f||_{H^s_v} = ((2 pi)^{-3} int <eta>^{2s} |F f(eta)|^2 d eta)^{1/2}`` from the closed-form transform."""
    if not f.terms:
        return 0.0
    wmin = min(t.width for t in f.terms)
    x, w = gauss_hermite_rule(order, 3, 1.0 / wmin)
    wt = w * np.exp(0.5 * np.sum(x ** 2, axis=1) * wmin ** 2)
    tot = 0.0
    for k in f.wavenumbers:
        fh = f.fourier_v(k, x)
        tot += float(np.sum(wt * (1 + np.sum(x ** 2, axis=1)) ** s * np.abs(fh) ** 2))
    return math.sqrt(tot / (2 * math.pi) ** 3)


def l2_norm_v(f: AnalyticState, order: int = 24) -> float:
    return sobolev_norm(f, 0.0, order)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

def probe_family(d_x: int = 1) -> List[Tuple[str, AnalyticState]]:
    """Microscopic and mixed test functions ``p(v) sqrt(mu)`` (plus one off-centre Gaussian)."""
    sm = lambda poly, coef=1.0: AnalyticState.sqrt_maxwellian(d_x, 3, poly, None, coef)
    return [
        ("v1v2", sm({(1, 1, 0): 1.0})),
        ("v1^2-v2^2", sm({(2, 0, 0): 1.0, (0, 2, 0): -1.0})),
        ("v1|v|^2-5v1", sm({(3, 0, 0): 1.0, (1, 2, 0): 1.0, (1, 0, 2): 1.0, (1, 0, 0): -5.0})),
        ("1+v3+v1v3", sm({(0, 0, 0): 1.0, (0, 0, 1): 1.0, (1, 0, 1): 1.0})),
        ("offcentre", AnalyticState.gaussian(d_x, 3, 0.3, None, (0.5, 0.0, -0.3), 1.2)),
    ]


@dataclass
class CoercivityRow:
    name: str
    dissipation: float
    triple_micro: float
    ratio: float
    excluded: bool


def coercivity_probe(family=None, kernel: KernelSpec = KernelSpec(), quad: QuadratureSpec = QuadratureSpec(),
                     micro_floor: float = 1e-8) -> Tuple[List[CoercivityRow], float]:
    """``<-L h, h> / |||(I - P) h|||^2`` over a family; returns rows and the minimum ratio (empirical C1)."""
    from .macro_micro import project_state

    family = probe_family() if family is None else family
    rows = []
    for name, h in family:
        _, micro = project_state(h)
        nm = l2_norm_v(micro)
        if nm < micro_floor * max(l2_norm_v(h), 1e-300):
            rows.append(CoercivityRow(name, math.nan, math.nan, math.nan, True))
            continue
        dis = float(np.real(dirichlet_form(h, h, kernel, quad)))
        tn = triple_norm(micro, kernel, quad)
        rows.append(CoercivityRow(name, dis, tn, dis / tn ** 2, False))
    vals = [r.ratio for r in rows if not r.excluded]
    return rows, (min(vals) if vals else math.nan)


def sobolev_probe(family=None, kernel: KernelSpec = KernelSpec(), quad: QuadratureSpec = QuadratureSpec()):
    """``|||h||| / ||h||_{H^s}`` over a family; the minimum is an empirical lower-bound constant."""
    family = probe_family() if family is None else family
    rows = []
    for name, h in family:
        tn = triple_norm(h, kernel, quad)
        hs = sobolev_norm(h, kernel.s)
        rows.append((name, tn, hs, tn / hs))
    return rows, min(r[3] for r in rows)


def trilinear_probe(triples, kernel: KernelSpec = KernelSpec(), quad: QuadratureSpec = QuadratureSpec()):
    """``|<Gamma(f, g), h>| / (||f|| |||g||| |||h|||)`` per triple and the maximum (empirical C0)."""
    rows = []
    for f, g, h in triples:
        nf = l2_norm_v(f)
        if nf == 0:
            rows.append(0.0)
            continue
        tg, th = triple_norm(g, kernel, quad), triple_norm(h, kernel, quad)
        if tg == 0 or th == 0:
            raise ValueError("degenerate denominator in trilinear probe")
        val, _ = weak_collision(times_sqrt_mu(f), times_sqrt_mu(g), h, kernel, quad, tilde=True)
        rows.append(abs(val) / (nf * tg * th))
    return rows, max(rows)


def random_triples(n: int, seed: int = 0, d_x: int = 1):
    """Random ``p(v) sqrt(mu)`` triples with polynomial degree <= 2."""
    rng = np.random.default_rng(seed)
    monos = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (1, 1, 0), (0, 1, 1), (0, 0, 2)]
    out = []
    for _ in range(n):
        tr = []
        for _ in range(3):
            poly = {m: float(rng.normal()) for m in monos}
            tr.append(AnalyticState.sqrt_maxwellian(d_x, 3, poly))
        out.append(tuple(tr))
    return out
