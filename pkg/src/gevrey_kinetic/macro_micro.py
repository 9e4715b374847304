"""Macroscopic projection, moment functionals, fluid-type residuals and the interaction functional.

Velocity functions are handled either as :class:`AnalyticState` objects or as
values on a :class:`VelocityNodes` set (Gauss-Hermite nodes or a periodic grid)
carrying plain ``dv`` quadrature weights. Wavenumbers are padded to 3-vectors,
so ``d/dx_j`` becomes multiplication by ``i k_j`` and vanishes for ``j >= d_x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fields import AnalyticState, PhaseGrid, gauss_hermite_rule

SQRT_MU_C = (2 * math.pi) ** -0.75
GH_ORDER = 24


def sqrt_mu(v: np.ndarray) -> np.ndarray:
    return SQRT_MU_C * np.exp(-0.25 * np.sum(v ** 2, axis=-1))


@dataclass(frozen=True)
class VelocityNodes:
    """Nodes ``(n, 3)`` with weights for plain ``int . dv`` quadrature."""

    nodes: np.ndarray
    weights: np.ndarray
    label: str = ""

    @staticmethod
    def gauss_hermite(order: int = GH_ORDER, scale: float = 1.0) -> "VelocityNodes":
        x, w = gauss_hermite_rule(order, 3, scale)
        return VelocityNodes(x, w * np.exp(0.5 * np.sum(x ** 2, axis=1) / scale ** 2), f"gh{order}")

    @staticmethod
    def from_grid(grid: PhaseGrid) -> "VelocityNodes":
        if grid.d_v != 3:
            raise ValueError("macro-micro quantities need d_v = 3")
        pts = grid.v_points()
        return VelocityNodes(pts, np.full(len(pts), grid.h ** 3), f"grid{grid.N_v}")

    def basis(self) -> Tuple[List[str], np.ndarray]:
        """Moment weight functions times quadrature weights, as an ``(n, n_moments)`` matrix (cached)."""
        cache = self.__dict__.get("_basis_cache")
        if cache is None:
            B = _basis(self.nodes)
            names = list(B)
            mat = np.stack([B[k] for k in names], axis=1) * self.weights[:, None]
            cache = (names, mat)
            object.__setattr__(self, "_basis_cache", cache)
        return cache

    def integrate(self, vals: np.ndarray) -> np.ndarray:
        """Integrate over the last axis."""
        return vals @ self.weights


# ---------------------------------------------------------------------------
# basis functions and moments
# ---------------------------------------------------------------------------

def _basis(v: np.ndarray) -> Dict[str, np.ndarray]:
    sm = sqrt_mu(v)
    r2 = np.sum(v ** 2, axis=-1)
    out = {"a": sm, "c": (r2 - 3.0) * sm / 6.0}
    for j in range(3):
        out[f"b{j}"] = v[:, j] * sm
        out[f"L{j}"] = (r2 - 5.0) * v[:, j] * sm / 10.0
        for l in range(j, 3):
            out[f"T{j}{l}"] = (v[:, j] * v[:, l] - 1.0) * sm
    return out


@dataclass
class MacroCoefficients:
    """``(a, b, c)`` per wavenumber; ``ks`` has shape ``(n_k, 3)``."""

    ks: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def entry(self, i: int) -> Tuple[complex, np.ndarray, complex]:
        return complex(self.a[i]), self.b[i], complex(self.c[i])

    def as_array(self) -> np.ndarray:
        """``(n_k, 5)`` array ``[a, b1, b2, b3, c]``."""
        return np.concatenate([self.a[:, None], self.b, self.c[:, None]], axis=1)

    def reality_defect(self) -> float:
        """``max |a(-k) - conj a(k)|`` over matched pairs (likewise b, c)."""
        arr = self.as_array()
        worst = 0.0
        lookup = {tuple(np.round(k, 12)): i for i, k in enumerate(self.ks)}
        for i, k in enumerate(self.ks):
            j = lookup.get(tuple(np.round(-k, 12)))
            if j is not None:
                worst = max(worst, float(np.max(np.abs(arr[j] - np.conj(arr[i])))))
        return worst


@dataclass
class MomentTensors:
    """``Theta`` (n_k, 3, 3) and ``Lambda`` (n_k, 3)."""

    theta: np.ndarray
    lam: np.ndarray


def macro_values(v: np.ndarray, a, b, c) -> np.ndarray:
    """``{a + b.v + c(|v|^2 - 3)} sqrt(mu)`` at nodes for per-k coefficients; shape ``(n_k, n)``."""
    a = np.atleast_1d(a)
    b = np.atleast_2d(b)
    c = np.atleast_1d(c)
    sm = sqrt_mu(v)
    r2 = np.sum(v ** 2, axis=-1)
    return (a[:, None] + b @ v.T + c[:, None] * (r2 - 3.0)[None, :]) * sm[None, :]


def _moments(vals: np.ndarray, q: VelocityNodes):
    """Raw moment dictionary for ``vals`` of shape ``(n_k, n)``."""
    names, mat = q.basis()
    out = vals @ mat
    return {key: out[:, i] for i, key in enumerate(names)}


def project_values(vals: np.ndarray, q: VelocityNodes, ks=None) -> Tuple[MacroCoefficients, np.ndarray]:
    """Projection of nodal values ``(n_k, n)``; returns coefficients and the microscopic remainder."""
    vals = np.atleast_2d(np.asarray(vals, complex))
    M = _moments(vals, q)
    a = M["a"]
    b = np.stack([M["b0"], M["b1"], M["b2"]], axis=1)
    c = M["c"]
    ks = np.zeros((vals.shape[0], 3)) if ks is None else _pad_ks(ks)
    micro = vals - macro_values(q.nodes, a, b, c)
    return MacroCoefficients(ks, a, b, c), micro


def moments_values(vals: np.ndarray, q: VelocityNodes) -> MomentTensors:
    """``Theta_jl = int (v_j v_l - 1) sqrt(mu) f``, ``Lambda_j = (1/10) int (|v|^2 - 5) v_j sqrt(mu) f``."""
    vals = np.atleast_2d(np.asarray(vals, complex))
    M = _moments(vals, q)
    n = vals.shape[0]
    th = np.zeros((n, 3, 3), complex)
    for j in range(3):
        for l in range(j, 3):
            th[:, j, l] = th[:, l, j] = M[f"T{j}{l}"]
    lam = np.stack([M["L0"], M["L1"], M["L2"]], axis=1)
    return MomentTensors(th, lam)


def _pad_ks(ks) -> np.ndarray:
    ks = np.asarray(ks, float)
    if ks.ndim == 1:
        ks = ks[:, None]
    out = np.zeros((ks.shape[0], 3))
    out[:, : ks.shape[1]] = ks
    return out


# ---------------------------------------------------------------------------
# AnalyticState front ends
# ---------------------------------------------------------------------------

def _state_columns(state: AnalyticState, q: VelocityNodes):
    if state.d_v != 3:
        raise ValueError("macro-micro quantities need d_v = 3")
    ks = sorted(state.wavenumbers) or [tuple([0] * state.d_x)]
    vals = np.stack([state.profile(k, q.nodes) for k in ks])
    return ks, vals


def project_P(state: AnalyticState, order: int = GH_ORDER) -> Tuple[MacroCoefficients, AnalyticState]:
    """``P`` on an analytic state; the microscopic remainder is returned exactly as a state."""
    q = VelocityNodes.gauss_hermite(order)
    ks, vals = _state_columns(state, q)
    coef, _ = project_values(vals, q, np.array(ks, float))
    micro = state
    for i, k in enumerate(ks):
        a, b, c = coef.entry(i)
        poly = {(0, 0, 0): a - 3 * c, (1, 0, 0): b[0], (0, 1, 0): b[1], (0, 0, 1): b[2],
                (2, 0, 0): c, (0, 2, 0): c, (0, 0, 2): c}
        poly = {e: complex(v) for e, v in poly.items() if v != 0}
        if poly:
            micro = micro - AnalyticState.sqrt_maxwellian(state.d_x, 3, poly, k)
    return coef, micro


def project_state(state: AnalyticState, order: int = GH_ORDER):
    return project_P(state, order)


def moments_theta_lambda(state: AnalyticState, order: int = GH_ORDER) -> MomentTensors:
    q = VelocityNodes.gauss_hermite(order)
    _, vals = _state_columns(state, q)
    return moments_values(vals, q)


def derivative_macros(state: AnalyticState, t: float, m: int, s: float = 0.5, order: int = GH_ORDER):
    """``(a_m, b_m, c_m)`` of ``H^m f`` and ``(U_m, V_m, W_m)`` of ``d_{v1}^m f`` at time ``t``."""
    from .vector_fields import FieldOp, apply_op

    Hm = apply_op(FieldOp("H", s=s, m=m), state, t)
    abc, _ = project_P(Hm, order)
    uvw, _ = project_P(state.dv(0, m), order)
    return abc, uvw


# ---------------------------------------------------------------------------
# fluid-type system
# ---------------------------------------------------------------------------

EQUATIONS = ("a", "b", "c", "theta", "lambda")


@dataclass
class FluidResidual:
    """Per-equation residual norms (discrete l2 over interior times and wavenumbers)."""

    residual: Dict[str, float]
    scale: Dict[str, float]
    fd_order: int
    dt: float
    n_times: int

    @property
    def relative(self) -> Dict[str, float]:
        return {e: self.residual[e] / self.scale[e] if self.scale[e] > 0 else 0.0 for e in EQUATIONS}

    def worst_relative(self) -> float:
        return max(self.relative.values())


_FD = {
    2: (np.array([-0.5, 0.0, 0.5]), 1),
    4: (np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]), 2),
}


def _ddt(series: np.ndarray, dt: float, order: int) -> Tuple[np.ndarray, slice]:
    st, half = _FD[order]
    n = series.shape[0]
    out = sum(st[i] * series[i: n - 2 * half + i] for i in range(len(st))) / dt
    return out, slice(half, n - half)


def fluid_residual(times: Sequence[float], snaps: np.ndarray, q: VelocityNodes, ks,
                   source: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
                   fd_order: Optional[int] = None, uniform_tol: float = 1e-9) -> FluidResidual:
    """Residuals of the five moment equations at ``m = 0``.

    Parameters
    ----------
    times : sequence of float
        Uniform snapshot times.
    snaps : ndarray, shape (n_t, n_k, n)
        Nodal values of ``fhat(t, k, .)``.
    q : VelocityNodes
        Quadrature carrying the nodes of ``snaps``.
    ks : array_like, shape (n_k, d_x)
        Physical wavevectors.
    source : callable, optional
        ``source(t, snap) -> G`` with ``G`` the right-hand side of
        ``d_t f + v.d_x f = G`` at that snapshot (``None`` means ``G = 0``).
    fd_order : int, optional
        2 or 4; default 4 when at least five snapshots exist, else 2.
    """
    times = np.asarray(times, float)
    snaps = np.asarray(snaps, complex)
    if snaps.ndim != 3 or snaps.shape[0] != len(times):
        raise ValueError("snaps must have shape (n_t, n_k, n_nodes)")
    dts = np.diff(times)
    if len(dts) < 2 or np.max(np.abs(dts - dts[0])) > uniform_tol * max(abs(dts[0]), 1.0):
        raise ValueError("fluid_residual needs a uniform snapshot grid with at least three times")
    dt = float(dts[0])
    if fd_order is None:
        fd_order = 4 if len(times) >= 5 else 2
    if fd_order not in _FD or len(times) < 2 * _FD[fd_order][1] + 1:
        raise ValueError("unsupported difference order for this many snapshots")
    K = _pad_ks(ks)
    ik = 1j * K
    v = q.nodes
    kv = K @ v.T

    A, B, Cc, TH, LA = [], [], [], [], []
    Gm, TR, LR = [], [], []
    for t, f in zip(times, snaps):
        coef, micro = project_values(f, q, K)
        mt = moments_values(micro, q)
        A.append(coef.a)
        B.append(coef.b)
        Cc.append(coef.c)
        TH.append(mt.theta)
        LA.append(mt.lam)
        G = np.zeros_like(f) if source is None else np.asarray(source(t, f), complex)
        R = -1j * kv * micro
        gc, _ = project_values(G, q, K)
        Gm.append(np.concatenate([gc.a[:, None], gc.b, gc.c[:, None]], axis=1))
        rg = moments_values(R + G, q)
        # Theta uses (v_j v_l - 1); its difference from the (v_j v_l - delta_jl) version is
        # (1 - delta_jl) * int sqrt(mu) (R + G), and int sqrt(mu) R = 0.
        corr = (1.0 - np.eye(3))[None] * gc.a[:, None, None]
        TR.append(rg.theta + corr)
        LR.append(rg.lam)
    A, B, Cc, TH, LA = map(np.array, (A, B, Cc, TH, LA))
    Gm, TR, LR = map(np.array, (Gm, TR, LR))
    dA, sl = _ddt(A, dt, fd_order)
    dB, _ = _ddt(B, dt, fd_order)
    dC, _ = _ddt(Cc, dt, fd_order)
    eye = np.eye(3)
    dTH, _ = _ddt(TH + 2 * Cc[..., None, None] * eye, dt, fd_order)
    dLA, _ = _ddt(LA, dt, fd_order)
    A, B, Cc, TH, LA, Gm, TR, LR = (x[sl] for x in (A, B, Cc, TH, LA, Gm, TR, LR))

    div_b = np.einsum("kj,tkj->tk", ik, B)
    res = {}
    res["a"] = dA + div_b - Gm[..., 0]
    div_th = np.einsum("kj,tkjl->tkl", ik, TH)
    res["b"] = dB + ik[None] * (A + 2 * Cc)[..., None] + div_th - Gm[..., 1:4]
    res["c"] = dC + div_b / 3 + (5 / 3) * np.einsum("kj,tkj->tk", ik, LA) - Gm[..., 4]
    sym = ik[None, :, :, None] * B[:, :, None, :] + ik[None, :, None, :] * B[:, :, :, None]
    res["theta"] = dTH + sym - TR
    res["lambda"] = dLA + ik[None] * Cc[..., None] - LR
    scales = {"a": dA, "b": dB, "c": dC, "theta": dTH, "lambda": dLA}

    def nrm(x):
        return float(np.sqrt(np.sum(np.abs(x) ** 2) / x.shape[0]))

    return FluidResidual({e: nrm(res[e]) for e in EQUATIONS},
                         {e: nrm(scales[e]) + nrm(res[e] - scales[e]) for e in EQUATIONS},
                         fd_order, dt, len(times))


def transport_snapshots(state: AnalyticState, times: Sequence[float], q: VelocityNodes):
    """Exact pure-transport values ``fhat(t, k, v) = fhat0(k, v) exp(-i t k.v)`` at the nodes."""
    ks, vals = _state_columns(state, q)
    K = _pad_ks(np.array(ks, float))
    kv = K @ q.nodes.T
    snaps = np.stack([vals * np.exp(-1j * t * kv) for t in times])
    return np.array(ks, float), snaps


def shuffled(snaps: np.ndarray, seed: int = 0) -> np.ndarray:
    """Negative control: the same snapshots in a random (non-identity) order."""
    rng = np.random.default_rng(seed)
    n = snaps.shape[0]
    perm = np.arange(n)
    while np.all(perm == np.arange(n)):
        perm = rng.permutation(n)
    return snaps[perm]


# ---------------------------------------------------------------------------
# linear model with a conservative surrogate operator
# ---------------------------------------------------------------------------

@dataclass
class ModelOperator:
    """``L_model = -(I - P) <v>^gamma (-Delta_v)^s (I - P)`` on a 3-D periodic velocity grid.

    The outer projections make it symmetric, nonpositive and mass, momentum and
    energy conserving, so its kernel contains the five collision invariants.
    """

    grid: PhaseGrid
    s: float = 0.5
    gamma: float = 0.0

    def __post_init__(self):
        if self.grid.d_v != 3:
            raise ValueError("the model operator acts on d_v = 3")
        self.q = VelocityNodes.from_grid(self.grid)
        e = self.grid.eta1d
        E = np.meshgrid(e, e, e, indexing="ij")
        self._mult = (E[0] ** 2 + E[1] ** 2 + E[2] ** 2) ** self.s
        n = self.grid.N_v
        self._w = (1 + np.sum(self.q.nodes ** 2, axis=1)) ** (self.gamma / 2) if self.gamma else None
        self._shape = (n, n, n)

    def micro(self, vals: np.ndarray) -> np.ndarray:
        _, mic = project_values(vals, self.q)
        return mic

    def __call__(self, vals: np.ndarray) -> np.ndarray:
        """``vals``: (n_k, n) nodal values."""
        mic = self.micro(vals)
        n_k = mic.shape[0]
        cube = mic.reshape((n_k,) + self._shape)
        lap = np.fft.ifftn(np.fft.fftn(cube, axes=(1, 2, 3)) * self._mult[None], axes=(1, 2, 3))
        lap = lap.reshape(n_k, -1)
        if self._w is not None:
            lap = lap * self._w[None, :]
        return -self.micro(lap)


def run_linear_model(init: AnalyticState, grid: PhaseGrid, t_max: float, dt: float, s: float = 0.5,
                     gamma: float = 0.0, n_save: Optional[int] = None):
    """Integrate ``d_t f + v.d_x f = L_model f`` with Strang splitting (exact transport, RK4 for L_model).

    Returns ``(times, ks, snapshots, operator)`` with snapshots on a uniform grid
    (every step unless ``n_save`` asks for fewer, evenly spaced).
    """
    op = ModelOperator(grid, s, gamma)
    q = op.q
    ks, vals = _state_columns(init, q)
    K = _pad_ks(np.array(ks, float))
    half = np.exp(-0.5j * dt * (K @ q.nodes.T))
    n_steps = int(round(t_max / dt))
    if abs(n_steps * dt - t_max) > 1e-9 * t_max:
        raise ValueError("t_max must be a multiple of dt")
    every = 1 if n_save is None else max(1, n_steps // n_save)
    f = vals
    times, snaps = [0.0], [f.copy()]
    for i in range(1, n_steps + 1):
        f = f * half
        k1 = op(f)
        k2 = op(f + 0.5 * dt * k1)
        k3 = op(f + 0.5 * dt * k2)
        k4 = op(f + dt * k3)
        f = f + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        f = f * half
        if i % every == 0:
            times.append(i * dt)
            snaps.append(f.copy())
    return np.array(times), np.array(ks, float), np.array(snaps), op


def ini_law_defect(snaps: np.ndarray, ks: np.ndarray, q: VelocityNodes) -> np.ndarray:
    """``max |(a, b, c)(t, k = 0)|`` per snapshot (zero for data respecting the conservation laws)."""
    K = _pad_ks(ks)
    zero = np.where(np.all(K == 0, axis=1))[0]
    if len(zero) == 0:
        return np.zeros(snaps.shape[0])
    out = []
    for f in snaps:
        coef, _ = project_values(f[zero], q)
        out.append(float(np.max(np.abs(coef.as_array()))))
    return np.array(out)


# ---------------------------------------------------------------------------
# interaction functional
# ---------------------------------------------------------------------------

def interaction_functional_K(a: complex, b, c: complex, theta_micro, lam_micro, k, rho0: float = 2.0) -> complex:
    """``K(fhat)`` at one wavevector from the macroscopic coefficients and microscopic moments.

    ``(z1 | z2) = z1 conj(z2)``; every term carries a factor ``k`` so ``K = 0`` at ``k = 0``.
    """
    if rho0 < 1:
        raise ValueError("rho0 must be >= 1")
    k = _pad_ks(np.atleast_2d(np.asarray(k, float)))[0]
    b = np.asarray(b, complex)
    th = np.asarray(theta_micro, complex)
    lam = np.asarray(lam_micro, complex)
    ik = 1j * k
    den = 1.0 + float(k @ k)
    left = ik[:, None] * b[None, :] + ik[None, :] * b[:, None]        # i k_j b_l + i k_l b_j
    right = th + 2.0 * np.eye(3) * c
    t1 = np.sum(left * np.conj(right))
    t2 = rho0 * np.sum(lam * np.conj(ik * c))
    t3 = np.sum(b * np.conj(ik * a))
    return complex((t1 + t2 + t3) / den)


def K_of_values(vals: np.ndarray, q: VelocityNodes, ks, rho0: float = 2.0) -> np.ndarray:
    """``K`` for every wavenumber column of nodal values ``(n_k, n)``."""
    K = _pad_ks(ks)
    coef, micro = project_values(vals, q, K)
    mt = moments_values(micro, q)
    return np.array([interaction_functional_K(coef.a[i], coef.b[i], coef.c[i], mt.theta[i], mt.lam[i], K[i], rho0)
                     for i in range(K.shape[0])])


def K_bound_probe(n: int = 50, seed: int = 0, rho0: float = 2.0, order: int = GH_ORDER):
    """Measured ``max |K| / ||fhat||^2`` over random polynomial-times-``sqrt(mu)`` columns.

    Random draws sit far from the extremal direction; :func:`K_bound_constant`
    gives the sharp value.
    """
    rng = np.random.default_rng(seed)
    q = VelocityNodes.gauss_hermite(order)
    monos = [(i, j, l) for i in range(3) for j in range(3) for l in range(3) if i + j + l <= 3]
    worst = 0.0
    for _ in range(n):
        k = rng.integers(-4, 5, size=3).astype(float)
        poly = {m: complex(rng.normal(), rng.normal()) for m in monos}
        st = AnalyticState.sqrt_maxwellian(1, 3, poly)
        vals = st.profile((0,), q.nodes)[None, :]
        val = K_of_values(vals, q, k[None, :], rho0)[0]
        nrm2 = float(q.integrate(np.abs(vals[0]) ** 2))
        worst = max(worst, abs(val) / nrm2)
    return worst


def _moment_span(q: VelocityNodes) -> np.ndarray:
    """Nodal values of an orthonormal basis of ``{deg <= 3 polynomials} sqrt(mu)`` (columns)."""
    monos = [(i, j, l) for i in range(4) for j in range(4) for l in range(4) if i + j + l <= 3]
    v = q.nodes
    phi = np.stack([v[:, 0] ** i * v[:, 1] ** j * v[:, 2] ** l for i, j, l in monos], axis=1) * sqrt_mu(v)[:, None]
    sw = np.sqrt(q.weights)[:, None]
    Q, R = np.linalg.qr(sw * phi)
    return Q / sw


def K_form_matrix(k, rho0: float = 2.0, order: int = 8) -> np.ndarray:
    """Matrix ``M`` with ``K(f) = x^H M x`` for ``f = sum_i x_i e_i`` in an orthonormal moment basis.

    ``K`` reads ``f`` only through moments against cubic polynomials times
    ``sqrt(mu)``, so it vanishes on the orthogonal complement of that span and
    the supremum of ``|K(f)| / ||f||^2`` equals the numerical radius of ``M``.
    """
    q = VelocityNodes.gauss_hermite(order)
    E = _moment_span(q).T.astype(complex)          # (n, nodes)
    n = E.shape[0]
    k = _pad_ks(np.atleast_2d(np.asarray(k, float)))[0]
    pairs = [(i, j) for i in range(n) for j in range(n) if i < j]
    cols = [E] + [E[[i for i, _ in pairs]] + E[[j for _, j in pairs]],
                  E[[i for i, _ in pairs]] + 1j * E[[j for _, j in pairs]]]
    vals = np.concatenate(cols)
    Kv = K_of_values(vals, q, np.repeat(k[None], vals.shape[0], axis=0), rho0)
    d = Kv[:n]
    M = np.diag(d)
    npair = len(pairs)
    s1, s2 = Kv[n:n + npair], Kv[n + npair:]
    for p, (i, j) in enumerate(pairs):
        # K(e_i + e_j) = d_i + d_j + M_ij + M_ji;  K(e_i + i e_j) = d_i + d_j + i (M_ij - M_ji)
        plus = s1[p] - d[i] - d[j]
        minus = (s2[p] - d[i] - d[j]) / 1j
        M[i, j] = 0.5 * (plus + minus)
        M[j, i] = 0.5 * (plus - minus)
    return M


def numerical_radius(M: np.ndarray, n_theta: int = 180) -> float:
    """``max_{|x|=1} |x^H M x|`` via ``max_theta lambda_max(Re(e^{i theta} M))``."""
    from scipy.optimize import minimize_scalar

    def top(th):
        H = 0.5 * (np.exp(1j * th) * M + np.exp(-1j * th) * M.conj().T)
        return float(np.linalg.eigvalsh(H)[-1])

    ths = np.linspace(0, 2 * math.pi, n_theta, endpoint=False)
    vals = np.array([top(t) for t in ths])
    i = int(np.argmax(vals))
    h = ths[1] - ths[0]
    r = minimize_scalar(lambda t: -top(t), bounds=(ths[i] - h, ths[i] + h), method="bounded",
                        options={"xatol": 1e-12})
    return max(float(vals[i]), -float(r.fun))


def K_bound_constant(rho0: float = 2.0, k_norms=None, order: int = 8) -> float:
    """Sharp ``sup |K(f)| / ||f||^2`` over ``f`` and the given ``|k|`` (K is rotation invariant)."""
    k_norms = np.sqrt(np.arange(1, 17)) if k_norms is None else np.asarray(k_norms, float)
    return max(numerical_radius(K_form_matrix([kn, 0.0, 0.0], rho0, order)) for kn in k_norms if kn > 0)


@dataclass
class Rho0Report:
    rho0: float
    max_ratio: float          # max over (t, k) of (d_t Re K + coercive) / dissipation budget
    min_lhs: float


def rho0_sweep(times, ks, snaps, op: ModelOperator, rho0s=(1.0, 2.0, 4.0, 8.0)) -> List[Rho0Report]:
    """Sign structure of ``d_t Re K_0 + 1/2 |k|^2/(1+|k|^2) |(a,b,c)|^2`` on a model trajectory.

    The budget on the right is ``||(I-P) f||^2_{H^s} + |Theta(G)|^2 + |Lambda(G)|^2 + |<phi, G>|^2``
    with ``G = L_model f``; the reported ratio is an empirical constant, not a proof constant.
    """
    q = op.q
    K = _pad_ks(ks)
    dt = float(times[1] - times[0])
    out = []
    for rho0 in rho0s:
        Ks = np.array([K_of_values(f, q, K, rho0) for f in snaps]).real
        dK, sl = _ddt(Ks, dt, 2)
        ratios, lhs_min = [], math.inf
        for ti, f in zip(range(sl.start, sl.stop), snaps[sl]):
            coef, micro = project_values(f, q, K)
            abc2 = np.sum(np.abs(coef.as_array()) ** 2, axis=1)
            k2 = np.sum(K ** 2, axis=1)
            lhs = dK[ti - sl.start] + 0.5 * k2 / (1 + k2) * abc2
            G = op(f)
            gc, _ = project_values(G, q, K)
            mt = moments_values(G, q)
            cube = micro.reshape((micro.shape[0],) + op._shape)
            hat = np.fft.fftn(cube, axes=(1, 2, 3)).reshape(micro.shape[0], -1)
            diss = np.sum(np.abs(hat) ** 2 * (1 + op._mult.ravel() ** (1 / op.s)) ** op.s, axis=1)
            diss *= op.grid.h ** 3 / micro.shape[1]
            budget = (diss + np.sum(np.abs(mt.theta) ** 2, axis=(1, 2)) + np.sum(np.abs(mt.lam) ** 2, axis=1)
                      + np.sum(np.abs(gc.as_array()) ** 2, axis=1))
            mask = budget > 1e-14
            if np.any(mask):
                ratios.append(float(np.max(lhs[mask] / budget[mask])))
            lhs_min = min(lhs_min, float(np.min(lhs)))
        out.append(Rho0Report(rho0, max(ratios) if ratios else math.nan, lhs_min))
    return out
