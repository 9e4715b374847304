"""Mixed Lebesgue norms over (k, t, v) and Gevrey multiplier weights."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .fields import KvField, PhaseSpectrum

OVERFLOW_LIMIT = 1e300


@dataclass(frozen=True)
class NormSpec:
    """Exponents of the nested norm ``L^p_k L^q_T L^r_v`` plus optional weights.

    ``q = math.inf`` selects the discrete-time supremum. ``k_weight`` multiplies
    each wavenumber by ``<k>^k_weight`` and ``t_weight`` each snapshot by
    ``t^t_weight``.
    """

    p: float = 1.0
    q: float = math.inf
    r: float = 2.0
    k_weight: float = 0.0
    t_weight: float = 0.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not (self.q >= 1):
            raise ValueError("q must be >= 1 or inf")
        if self.r != 2:
            raise ValueError("only r = 2 is supported")


def _time_norm(table: np.ndarray, times: np.ndarray, q: float) -> np.ndarray:
    """Norm over axis 0 of a nonnegative table sampled at ``times``."""
    if math.isinf(q):
        return np.max(table, axis=0)
    if len(times) == 1:
        return table[0]
    return trapezoid(table ** q, times, axis=0) ** (1.0 / q)


def check_uniform(times: np.ndarray, rtol: float = 1e-9) -> None:
    times = np.asarray(times, dtype=float)
    if len(times) > 2:
        d = np.diff(times)
        if np.max(np.abs(d - d.mean())) > rtol * max(abs(d.mean()), 1e-300):
            raise ValueError("time grid must be uniform")


def mixed_norm_table(table: np.ndarray, times: Sequence[float], spec: NormSpec,
                     kvecs: Optional[np.ndarray] = None, require_uniform: bool = True) -> float:
    """Mixed norm from a precomputed table of per-(t, k) L2_v norms.

    Parameters
    ----------
    table : ndarray, shape (n_t, n_k)
        Nonnegative ``||fhat(t_i, k_j)||_{L2_v}``.
    times : sequence of float
        Snapshot times (uniform unless ``require_uniform`` is False).
    spec : NormSpec
    kvecs : ndarray, shape (n_k, d_x), optional
        Wavenumbers, needed only when ``spec.k_weight != 0``.
    """
    table = np.asarray(table, dtype=float)
    times = np.asarray(times, dtype=float)
    if table.size == 0 or len(times) == 0:
        raise ValueError("empty trajectory")
    if table.ndim == 1:
        table = table[None, :]
    if require_uniform:
        check_uniform(times)
    w = table
    if spec.t_weight:
        w = w * (times[:, None] ** spec.t_weight)
    per_k = _time_norm(w, times, spec.q)
    if spec.k_weight:
        kv = np.asarray(kvecs, dtype=float).reshape(len(per_k), -1)
        per_k = per_k * (1.0 + np.sum(kv ** 2, axis=1)) ** (spec.k_weight / 2)
    if math.isinf(spec.p):
        return float(np.max(per_k))
    return float(np.sum(per_k ** spec.p) ** (1.0 / spec.p))


def mixed_norm(trajectory: Sequence[KvField], spec: NormSpec, times: Optional[Sequence[float]] = None) -> float:
    """Nested norm of a time-indexed list of KvFields (v innermost, then T, then k)."""
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    times = np.array([f.time_tag for f in trajectory] if times is None else times, dtype=float)
    table = np.stack([f.l2v_per_k().ravel() for f in trajectory])
    g = trajectory[0].grid
    kv = np.stack([m.ravel() for m in g.k_mesh()], axis=-1)
    return mixed_norm_table(table, times, spec, kv)


def gevrey_weight(spectrum: PhaseSpectrum, c: float, r: float) -> tuple[PhaseSpectrum, bool]:
    """Multiply by ``exp(c (|k|^2 + |eta|^2)^{1/(2r)})``.

    Returns the weighted spectrum and an overflow flag that is raised when any
    weighted amplitude exceeds 1e300 (or is not finite).
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    if r <= 0:
        raise ValueError("Gevrey index must be positive")

    def weight(k, eta):
        k = np.asarray(k, dtype=float)
        eta = np.asarray(eta, dtype=float)
        k2 = np.sum(k.reshape(-1) ** 2) if k.ndim else float(k) ** 2
        e2 = eta ** 2 if eta.ndim <= 1 else np.sum(eta ** 2, axis=-1)
        return c * (k2 + e2) ** (1.0 / (2.0 * r))

    overflow = False
    out = replace(spectrum)
    if spectrum.values is not None:
        ks = np.asarray(spectrum.ks)
        vals = np.asarray(spectrum.values, dtype=complex)
        expo = np.stack([weight(k, spectrum.etas) for k in ks])
        with np.errstate(over="ignore", invalid="ignore"):
            log_amp = np.log(np.abs(vals) + 1e-320) + expo
            new = vals * np.exp(np.minimum(expo, 709.0))
        overflow = bool(np.any((log_amp > math.log(OVERFLOW_LIMIT)) & (np.abs(vals) > 0))
                        or not np.all(np.isfinite(new)))
        out.values = new
    if spectrum.fn is not None:
        base = spectrum.fn

        def fn(k, eta):
            return base(k, eta) * np.exp(weight(k, eta))
        out.fn = fn
    return out, overflow
