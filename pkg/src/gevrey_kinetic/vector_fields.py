"""Time-dependent vector fields ``xi(t) d_{x1} + theta(t) d_{v1}`` and their commutators.

Every coefficient is a monomial ``c t^a``, so the fields act exactly on
:class:`TimeState` objects (finite sums ``sum_a t^a F_a(x, v)`` with analytic
``F_a``) and exact time derivatives are available without finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .fields import AnalyticState, KvField, PhaseSpectrum, l2_norm_state

KINDS = ("P1", "P2", "H", "Hdelta", "Dx", "Dv")


@dataclass(frozen=True)
class FieldOp:
    """``(xi(t) d_{x1} + theta(t) d_{v1})^m`` with monomial coefficients.

    Parameters
    ----------
    kind : str
        One of ``P1``, ``P2``, ``H``, ``Hdelta``, ``Dx``, ``Dv``.
    s : float
        Fractional exponent entering ``P1`` and ``P2``.
    delta : float, optional
        Exponent of ``Hdelta``.
    m : int
        Power.
    """

    kind: str
    s: float = 0.5
    delta: Optional[float] = None
    m: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "Hdelta" and (self.delta is None or self.delta < 0):
            raise ValueError("Hdelta needs delta >= 0")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0,1)")
        if self.m < 0:
            raise ValueError("power must be nonnegative")

    @property
    def xi_mono(self) -> Tuple[float, float]:
        """``(c, a)`` with ``xi(t) = c t^a``."""
        s = self.s
        if self.kind == "P1":
            return 2 * s / (1 + 2 * s), (1 + 2 * s) / (2 * s)
        if self.kind == "H":
            return 1.0, 1.0
        if self.kind == "Hdelta":
            return 1.0 / (self.delta + 1), self.delta + 1
        if self.kind == "Dx":
            return 1.0, 0.0
        return 0.0, 0.0

    @property
    def theta_mono(self) -> Tuple[float, float]:
        """``(c, a)`` with ``theta(t) = c t^a``."""
        if self.kind in ("P1", "P2"):
            return 1.0, 1 / (2 * self.s)
        if self.kind == "Hdelta":
            return 1.0, float(self.delta)
        if self.kind in ("H", "Dv"):
            return 1.0, 0.0
        return 0.0, 0.0

    def xi(self, t: float) -> float:
        c, a = self.xi_mono
        return c * t ** a if c else 0.0

    def theta(self, t: float) -> float:
        c, a = self.theta_mono
        return c * t ** a if c else 0.0

    def power(self, m: int) -> "FieldOp":
        return FieldOp(self.kind, self.s, self.delta, m)


# ---------------------------------------------------------------------------
# applying a field to the three state representations
# ---------------------------------------------------------------------------

def _apply_state(op: FieldOp, state: AnalyticState, t: float, m: int) -> AnalyticState:
    xi, th = op.xi(t), op.theta(t)
    out = state
    for _ in range(m):
        nxt = AnalyticState.zero(state.d_x, state.d_v)
        if xi:
            nxt = nxt + out.dx(0).scale(xi)
        if th:
            nxt = nxt + out.dv(0).scale(th)
        out = nxt.simplify()
    return out


def _symbol(op: FieldOp, t: float, k, eta):
    return 1j * (op.xi(t) * np.asarray(k, float) + op.theta(t) * np.asarray(eta, float))


def apply_op(op: FieldOp, fld, t: float):
    """Apply ``op`` (with its power ``op.m``) at time ``t``.

    ``fld`` may be an :class:`AnalyticState` (exact), a :class:`KvField` (the
    v-derivative is a periodised spectral multiplier, Nyquist mode zeroed) or a
    :class:`PhaseSpectrum` (multiplication by ``(i xi k_1 + i theta eta_1)^m``).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = op.m
    if isinstance(fld, AnalyticState):
        return _apply_state(op, fld, t, m)
    if isinstance(fld, KvField):
        g = fld.grid
        ax = g.d_x
        k = g.ks.astype(float)
        eta = g.eta1d.copy()
        shp_k = [1] * fld.values.ndim
        shp_k[0] = len(k)
        shp_e = [1] * fld.values.ndim
        shp_e[ax] = g.N_v
        mult = _symbol(op, t, k.reshape(shp_k), eta.reshape(shp_e)) ** m
        if m and op.theta(t):
            nyq = [slice(None)] * fld.values.ndim
            nyq[ax] = g.N_v // 2
            mult = np.broadcast_to(mult, np.broadcast_shapes(mult.shape, tuple(
                g.N_v if i == ax else (len(k) if i == 0 else 1) for i in range(fld.values.ndim)))).copy()
            mult[tuple(nyq)] = 0.0
        hat = np.fft.fft(fld.values, axis=ax)
        return fld.copy(np.fft.ifft(hat * mult, axis=ax))
    if isinstance(fld, PhaseSpectrum):
        out = PhaseSpectrum(time_tag=fld.time_tag)
        if fld.values is not None:
            ks = np.asarray(fld.ks, float).reshape(-1)
            out.values = fld.values * _symbol(op, t, ks[:, None], np.asarray(fld.etas)[None, :]) ** m
            out.ks, out.etas = fld.ks, fld.etas
        if fld.fn is not None:
            base = fld.fn

            def fn(k, eta):
                k1 = np.atleast_1d(np.asarray(k, float))[0]
                e = np.asarray(eta, float)
                e1 = e[..., 0] if e.ndim > 1 else e
                return base(k, eta) * _symbol(op, t, k1, e1) ** m
            out.fn = fn
        return out
    raise TypeError(f"unsupported field type {type(fld).__name__}")


def dx_from_p1(fld, t: float, s: float):
    """``((1+2s)/2s) t^{-(1+2s)/2s} P1 f - ((1+2s)/2s) t^{-1} d_{v1} f``, which equals ``d_{x1} f``."""
    if t <= 0:
        raise ValueError("t must be positive")
    a = (1 + 2 * s) / (2 * s)
    p1 = apply_op(FieldOp("P1", s), fld, t)
    dv = apply_op(FieldOp("Dv", s), fld, t)
    if isinstance(fld, AnalyticState):
        return (p1.scale(a * t ** -a) - dv.scale(a / t)).simplify()
    if isinstance(fld, KvField):
        return fld.copy(a * t ** -a * p1.values - a / t * dv.values)
    raise TypeError("AnalyticState or KvField required")


# ---------------------------------------------------------------------------
# explicitly time-dependent analytic states
# ---------------------------------------------------------------------------

def _key(a: float) -> float:
    return round(float(a), 12)


@dataclass
class TimeState:
    """``F(t) = sum_a t^a F_a`` with analytic coefficients ``F_a``."""

    parts: Dict[float, AnalyticState] = field(default_factory=dict)
    d_x: int = 1
    d_v: int = 1

    @staticmethod
    def monomial(state: AnalyticState, a: float = 0.0, c: complex = 1.0) -> "TimeState":
        return TimeState({_key(a): state.scale(c)}, state.d_x, state.d_v)

    def _new(self) -> "TimeState":
        return TimeState({}, self.d_x, self.d_v)

    def add_part(self, a: float, st: AnalyticState) -> None:
        if not st.terms:
            return
        a = _key(a)
        self.parts[a] = (self.parts[a] + st).simplify() if a in self.parts else st.simplify()

    def __add__(self, other: "TimeState") -> "TimeState":
        out = self._new()
        for src in (self, other):
            for a, st in src.parts.items():
                out.add_part(a, st)
        return out

    def __sub__(self, other: "TimeState") -> "TimeState":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "TimeState":
        return TimeState({a: st.scale(c) for a, st in self.parts.items()}, self.d_x, self.d_v)

    def mul_t(self, c: complex, b: float) -> "TimeState":
        """Multiply by ``c t^b``."""
        out = self._new()
        if c:
            for a, st in self.parts.items():
                out.add_part(a + b, st.scale(c))
        return out

    def map(self, fn) -> "TimeState":
        out = self._new()
        for a, st in self.parts.items():
            out.add_part(a, fn(st))
        return out

    def dt(self) -> "TimeState":
        out = self._new()
        for a, st in self.parts.items():
            if a != 0:
                out.add_part(a - 1, st.scale(a))
        return out

    def transport(self) -> "TimeState":
        """``v . d_x F``, summing over the first ``min(d_x, d_v)`` axes."""
        def fn(st):
            acc = AnalyticState.zero(st.d_x, st.d_v)
            for j in range(min(st.d_x, st.d_v)):
                acc = acc + st.dx(j).mul_v(j)
            return acc
        return self.map(fn)

    def kinetic(self) -> "TimeState":
        """``(d_t + v . d_x) F``."""
        return self.dt() + self.transport()

    def dx1(self) -> "TimeState":
        return self.map(lambda st: st.dx(0))

    def dv1(self) -> "TimeState":
        return self.map(lambda st: st.dv(0))

    def apply(self, op: FieldOp, m: Optional[int] = None) -> "TimeState":
        m = op.m if m is None else m
        cx, ax = op.xi_mono
        cv, av = op.theta_mono
        out = self
        for _ in range(m):
            out = out.dx1().mul_t(cx, ax) + out.dv1().mul_t(cv, av)
        return out

    def at(self, t: float) -> AnalyticState:
        acc = AnalyticState.zero(self.d_x, self.d_v)
        for a, st in self.parts.items():
            acc = acc + st.scale(t ** a if a else 1.0)
        return acc.simplify()


# ---------------------------------------------------------------------------
# commutators
# ---------------------------------------------------------------------------

def commutator(op: FieldOp, m: int, F: TimeState, order: str = "op_first") -> TimeState:
    """``[Phi^m, d_t + v.d_x] F`` (``order="op_first"``) or its negative ``[d_t + v.d_x, Phi^m] F``."""
    a = F.kinetic().apply(op, m) - F.apply(op, m).kinetic()
    return a if order == "op_first" else a.scale(-1.0)


def generic_rhs(op: FieldOp, m: int, F: TimeState) -> TimeState:
    """``m [(theta - xi') d_{x1} - theta' d_{v1}] Phi^{m-1} F``, valid for every monomial field."""
    cx, ax = op.xi_mono
    cv, av = op.theta_mono
    G = F.apply(op, m - 1)
    out = G.dx1().mul_t(m * cv, av) - G.dx1().mul_t(m * cx * ax, ax - 1)
    return out - G.dv1().mul_t(m * cv * av, av - 1)


def closed_form_rhs(op: FieldOp, m: int, F: TimeState) -> Tuple[TimeState, str]:
    """Closed-form commutator for each field kind and the bracket order it refers to.

    * ``H``: ``[H^m, T] = 0``
    * ``P1``: ``[P1^m, T] = -(m/2s) t^{(1-2s)/2s} d_{v1} P1^{m-1}``
    * ``Hdelta``: ``[H_d^m, T] = -d m t^{d-1} d_{v1} H_d^{m-1}``
    * ``P2``: ``[T, P2^m] = (m/2s) t^{m/2s-1} d_{v1}^m - m t^{m/2s} d_{x1} d_{v1}^{m-1}``
    * ``Dv``: ``[d_{v1}^m, T] = m d_{x1} d_{v1}^{m-1}``; ``Dx``: zero.

    with ``T = d_t + v.d_x``.
    """
    s = op.s
    if m < 1:
        raise ValueError("m >= 1 required")
    z = TimeState({}, F.d_x, F.d_v)
    if op.kind in ("H", "Dx"):
        return z, "op_first"
    if op.kind == "P1":
        return F.apply(op, m - 1).dv1().mul_t(-m / (2 * s), (1 - 2 * s) / (2 * s)), "op_first"
    if op.kind == "Hdelta":
        d = op.delta
        return F.apply(op, m - 1).dv1().mul_t(-d * m, d - 1), "op_first"
    if op.kind == "Dv":
        return F.apply(FieldOp("Dv", s), m - 1).dx1().scale(float(m)), "op_first"
    dv = FieldOp("Dv", s)
    first = F.apply(dv, m).mul_t(m / (2 * s), m / (2 * s) - 1)
    second = F.apply(dv, m - 1).dx1().mul_t(-float(m), m / (2 * s))
    return first + second, "T_first"


@dataclass
class CommutatorReport:
    kind: str
    m: int
    times: Tuple[float, ...]
    residual: float
    relative: float
    generic_relative: float
    scale: float


def commutator_residual(op: FieldOp, m: int, F: TimeState,
                        times: Sequence[float] = (0.25, 0.7, 1.3),
                        gh_order: Optional[int] = None) -> CommutatorReport:
    """L2 distance between the commutator applied to ``F`` and its closed form.

    ``F`` must be a :class:`TimeState`, which carries its exact time derivative.
    The relative residual divides by ``||Phi^m T F|| + ||T Phi^m F||`` (the two
    pieces whose difference forms the commutator), maximised over ``times``.
    ``gh_order`` is the Gauss-Hermite order per velocity axis (48 in 1-D, 24 in 3-D
    by default).
    """
    if not isinstance(F, TimeState):
        raise TypeError("commutator_residual needs a TimeState (exact time-derivative oracle)")
    rhs, order = closed_form_rhs(op, m, F)
    lhs = commutator(op, m, F, order)
    gen = generic_rhs(op, m, F)
    if order != "op_first":
        gen = gen.scale(-1.0)
    a = F.kinetic().apply(op, m)
    b = F.apply(op, m).kinetic()
    q = gh_order or (48 if F.d_v == 1 else 24)
    nrm = lambda st: l2_norm_state(st, q)
    res = rel = grel = 0.0
    scale = 0.0
    for t in times:
        sc = nrm(a.at(t)) + nrm(b.at(t))
        r = nrm((lhs - rhs).at(t))
        g = nrm((lhs - gen).at(t))
        res = max(res, r)
        scale = max(scale, sc)
        if sc > 0:
            rel = max(rel, r / sc)
            grel = max(grel, g / sc)
    return CommutatorReport(op.kind, m, tuple(times), res, rel, grel, scale)


def probe_functions() -> list:
    """Five explicitly time-dependent analytic states used for the commutator checks."""
    G = AnalyticState.gaussian
    out = []
    # t sin(x) e^{-v^2/2}
    sinx = G(1, 1, coef=-0.5j, k=1) + G(1, 1, coef=0.5j, k=-1)
    out.append(TimeState.monomial(sinx, 1.0))
    # t^2 e^{2ix} (1 + v - v^2/2) e^{-(v - 1/2)^2 / (2 * 0.8^2)}
    st = G(1, 1, k=2, center=0.5, width=0.8, poly={(0,): 1.0, (1,): 1.0, (2,): -0.5})
    out.append(TimeState.monomial(st, 2.0))
    # (t^{1/2} + t^3) cos(3x) v^3 e^{-v^2/2}
    cos3 = G(1, 1, coef=0.5, k=3, poly={(3,): 1.0}) + G(1, 1, coef=0.5, k=-3, poly={(3,): 1.0})
    out.append(TimeState.monomial(cos3, 0.5) + TimeState.monomial(cos3, 3.0))
    # t e^{i x_1} v_1 v_2 mu^{1/2} in d_v = 3
    st3 = AnalyticState.sqrt_maxwellian(1, 3, poly={(1, 1, 0): 1.0}, k=1)
    out.append(TimeState.monomial(st3, 1.0))
    # (1 + t + t^{3/2}) [ (0.3 - 0.2i) e^{-v^2/(2 * 1.3^2)} + e^{-2ix} v e^{-(v+1)^2/2} ]
    mix = G(1, 1, coef=0.3 - 0.2j, width=1.3) + G(1, 1, k=-2, center=-1.0, poly={(1,): 1.0})
    out.append(TimeState.monomial(mix, 0.0) + TimeState.monomial(mix, 1.0) + TimeState.monomial(mix, 1.5))
    return out


def commutator_table(s: float = 0.5, m_max: int = 6, deltas: Sequence[float] = (0.5, 2.0),
                     times: Sequence[float] = (0.25, 0.7, 1.3)) -> list:
    """Residual reports for every kind, power ``1..m_max`` and test function."""
    ops = [FieldOp("H", s), FieldOp("P1", s), FieldOp("P2", s), FieldOp("Dv", s)]
    ops += [FieldOp("Hdelta", s, d) for d in deltas]
    rows = []
    for fi, F in enumerate(probe_functions()):
        for op in ops:
            for m in range(1, m_max + 1):
                rep = commutator_residual(op, m, F, times)
                rows.append((fi, rep))
    return rows
