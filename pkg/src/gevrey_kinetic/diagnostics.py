"""Gevrey-index, radius and scaling-exponent estimation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

NOISE_FLOOR = 1e-13


class FitError(ValueError):
    pass


@dataclass
class FitResult:
    tau_hat: float
    logC_hat: float
    residual_rms: float
    stderr: dict
    n_points: int
    window: Tuple[int, int]
    intercept: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.residual_rms):
            raise FitError("non-finite residual")
        if self.n_points < 4:
            raise FitError("fit needs at least 4 points")


def _ols(X: np.ndarray, y: np.ndarray):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    sigma2 = float(res @ res) / dof
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    return coef, res, np.sqrt(np.maximum(np.diag(cov), 0.0))


def gevrey_fit(norms: Sequence[float], ms: Sequence[int], intercept: bool = False,
               m_min: Optional[int] = None, flagged: Optional[Sequence[bool]] = None) -> FitResult:
    """Least-squares fit of ``log N_m = m log C + tau log m! (+ b)``.

    Parameters
    ----------
    norms, ms : sequences
        Norm values and their derivative orders.
    intercept : bool
        Add a free constant ``b``. Norms of actual solutions carry an
        order-independent prefactor, which this absorbs.
    m_min : int, optional
        Drop orders below ``m_min``.
    flagged : sequence of bool, optional
        Orders marked as below the noise floor; the window is cut at the first
        flagged order.
    """
    norms = np.asarray(norms, dtype=float)
    ms = np.asarray(ms, dtype=int)
    keep = norms > 0
    if m_min is not None:
        keep &= ms >= m_min
    if flagged is not None:
        fl = np.asarray(flagged, dtype=bool)
        if np.any(fl):
            first = ms[fl].min()
            keep &= ms < first
    if keep.sum() < 4:
        raise FitError(f"fewer than 4 usable points ({int(keep.sum())})")
    m, y = ms[keep].astype(float), np.log(norms[keep])
    cols = [m, gammaln(m + 1)]
    if intercept:
        cols.append(np.ones_like(m))
    X = np.stack(cols, axis=1)
    coef, res, se = _ols(X, y)
    stderr = {"logC": float(se[0]), "tau": float(se[1])}
    if intercept:
        stderr["intercept"] = float(se[2])
    return FitResult(tau_hat=float(coef[1]), logC_hat=float(coef[0]),
                     residual_rms=float(np.sqrt(np.mean(res ** 2))), stderr=stderr,
                     n_points=int(keep.sum()), window=(int(m.min()), int(m.max())),
                     intercept=float(coef[2]) if intercept else 0.0)


# ---------------------------------------------------------------------------
# radius surrogate from spectral decay
# ---------------------------------------------------------------------------

@dataclass
class RadiusFit:
    c: float
    radius: float
    intercept: float
    n_modes: int
    residual_rms: float


def radius_fit(ks: Sequence[float], amps: Sequence[float], tau: float, floor: float = NOISE_FLOOR,
               k_min: float = 0.0, min_modes: int = 6) -> RadiusFit:
    """Fit ``log amp(k) = -c |k|^{1/tau} + b`` over modes above the noise floor.

    The floor is relative: modes with ``amp < floor * max(amp)`` are discarded,
    as are modes with ``|k| < k_min``. The reported radius is ``c^tau``, the
    length scale on which the Gevrey weight ``exp(c |k|^{1/tau})`` acts.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    ks = np.abs(np.asarray(ks, dtype=float))
    amps = np.asarray(amps, dtype=float)
    if ks.shape != amps.shape:
        raise ValueError("ks and amps differ in shape")
    top = float(np.max(amps)) if amps.size else 0.0
    keep = (amps > floor * top) & (amps > 0) & (ks >= k_min)
    if keep.sum() < min_modes:
        raise FitError(f"only {int(keep.sum())} modes above floor; need {min_modes}")
    x = ks[keep] ** (1.0 / tau)
    y = np.log(amps[keep])
    X = np.stack([-x, np.ones_like(x)], axis=1)
    coef, res, _ = _ols(X, y)
    c = float(coef[0])
    return RadiusFit(c=c, radius=c ** tau if c > 0 else math.nan, intercept=float(coef[1]),
                     n_modes=int(keep.sum()), residual_rms=float(np.sqrt(np.mean(res ** 2))))


def radius_estimate(ks: Sequence[float], amps: Sequence[float], tau: float, **kw) -> float:
    """Decay constant ``c`` of ``amp(k) ~ exp(-c |k|^{1/tau})``; see :func:`radius_fit`."""
    return radius_fit(ks, amps, tau, **kw).c


@dataclass
class RadiusCurve:
    times: np.ndarray
    radii: np.ndarray
    kind: str = "x"
    tau: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if self.times.shape != self.radii.shape:
            raise ValueError("times and radii differ in shape")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.radii < 0):
            raise ValueError("radii must be nonnegative")


@dataclass
class ScalingFit:
    slope: float
    ci: Tuple[float, float]
    intercept: float
    residual_rms: float
    n_points: int
    noisy: bool
    n_boot: int


def scaling_exponent(curve, values: Optional[Sequence[float]] = None, n_boot: int = 200,
                     seed: int = 0, level: float = 0.95, min_decades: float = 1.0) -> ScalingFit:
    """Log-log least-squares slope of a radius (or norm) series with a bootstrap CI.

    Parameters
    ----------
    curve : RadiusCurve or sequence of times
        When a plain time sequence is given, ``values`` holds the series.
    n_boot, seed : int
        Number of pair-bootstrap resamples and the generator seed.
    min_decades : float
        Required span of the time points in decades.

    The result is marked ``noisy`` when the series is not monotone and the
    log-log residual exceeds 10% of the log-range of the data.
    """
    if isinstance(curve, RadiusCurve):
        t, r = curve.times, curve.radii
    else:
        t = np.asarray(curve, dtype=float)
        r = np.asarray(values, dtype=float)
    ok = (t > 0) & (r > 0) & np.isfinite(r)
    t, r = t[ok], r[ok]
    if len(t) < 5:
        raise FitError("need at least 5 positive time points")
    if math.log10(t.max() / t.min()) < min_decades - 1e-12:
        raise FitError(f"time points span less than {min_decades} decade(s)")
    x, y = np.log(t), np.log(r)
    X = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, _ = _ols(X, y)
    rng = np.random.default_rng(seed)
    slopes = []
    n = len(x)
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        if np.ptp(x[idx]) == 0:
            continue
        cb, *_ = np.linalg.lstsq(X[idx], y[idx], rcond=None)
        slopes.append(cb[0])
    slopes = np.asarray(slopes)
    a = (1 - level) / 2
    ci = (float(np.quantile(slopes, a)), float(np.quantile(slopes, 1 - a)))
    rms = float(np.sqrt(np.mean(res ** 2)))
    d = np.diff(r)
    monotone = bool(np.all(d >= 0) or np.all(d <= 0))
    noisy = (not monotone) and rms > 0.1 * max(np.ptp(y), 1e-300)
    if noisy:
        warnings.warn("non-monotone, noise-dominated series", RuntimeWarning)
    return ScalingFit(slope=float(coef[0]), ci=ci, intercept=float(coef[1]), residual_rms=rms,
                      n_points=n, noisy=noisy, n_boot=len(slopes))
