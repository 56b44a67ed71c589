"""Second-order cumulant line-shape function and 1/e rate extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "FAST_LIMIT",
    "SLOW_LIMIT",
    "RateEstimate",
    "cumulant_g",
    "dephasing_function",
    "extract_rate",
    "crossing_time",
    "classify_regime",
]

FAST_LIMIT = 0.1
SLOW_LIMIT = 10.0


def _kubo_shape(x: np.ndarray) -> np.ndarray:
    """exp(-x) + x - 1 without cancellation at small x."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x)
    out = np.expm1(-flat) + flat
    small = flat < 1e-4
    xs = flat[small]
    out[small] = xs ** 2 / 2 - xs ** 3 / 6 + xs ** 4 / 24
    return out.reshape(x.shape)


def cumulant_g(delta_sq: float, tau_c: float, times) -> np.ndarray:
    """g(t) = Delta^2 tau_c^2 [exp(-t/tau_c) + t/tau_c - 1] for an exponential C(t).

    ``tau_c = inf`` gives the static limit Delta^2 t^2 / 2.
    """
    if delta_sq < 0:
        raise ValueError("delta_sq must be non-negative")
    if not tau_c > 0:
        raise ValueError("tau_c must be positive")
    t = np.asarray(times, dtype=float)
    if math.isinf(tau_c):
        return delta_sq * t ** 2 / 2
    return delta_sq * tau_c ** 2 * _kubo_shape(t / tau_c)


def dephasing_function(g) -> np.ndarray:
    return np.exp(-np.asarray(g, dtype=float))


def classify_regime(delta_sq: float, tau_c: float) -> str:
    if delta_sq <= 0:
        return "undefined"
    x = math.sqrt(delta_sq) * tau_c
    if x < FAST_LIMIT:
        return "fast"
    if x > SLOW_LIMIT:
        return "slow"
    return "intermediate"


@dataclass(frozen=True)
class RateEstimate:
    gamma_inverse: float  # s; inf when there is no dephasing
    regime: str
    extrapolated: bool = False

    @property
    def rate(self) -> float:
        return 0.0 if math.isinf(self.gamma_inverse) else 1.0 / self.gamma_inverse


def extract_rate(delta_sq: float, tau_c: float) -> RateEstimate:
    """1/Gamma as the time where g(t) = 1, i.e. D(t) = 1/e."""
    if delta_sq <= 0:
        return RateEstimate(math.inf, "undefined")
    regime = classify_regime(delta_sq, tau_c)
    fast = 1.0 / (delta_sq * tau_c) + (0.0 if math.isinf(tau_c) else tau_c)
    slow = math.sqrt(2.0 / delta_sq)
    hi = 2.0 * min(fast, slow) if not math.isinf(tau_c) else 2.0 * slow
    while cumulant_g(delta_sq, tau_c, hi) < 1.0:
        hi *= 2.0
    root = brentq(lambda t: float(cumulant_g(delta_sq, tau_c, t)) - 1.0, 0.0, hi,
                  xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return RateEstimate(root, regime)


def crossing_time(times, d_values, delta_sq: float | None = None,
                  tau_c: float | None = None) -> RateEstimate:
    """First 1/e crossing of sampled D(t), with closed-form extrapolation past the grid."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(d_values, dtype=float)
    target = math.exp(-1.0)
    below = np.flatnonzero(d <= target)
    regime = classify_regime(delta_sq, tau_c) if delta_sq is not None and tau_c is not None else "undefined"
    if below.size:
        k = below[0]
        if k == 0:
            return RateEstimate(float(t[0]), regime)
        # interpolate linearly in log D
        l0, l1 = math.log(d[k - 1]), math.log(max(d[k], 1e-300))
        frac = (-1.0 - l0) / (l1 - l0)
        return RateEstimate(float(t[k - 1] + frac * (t[k] - t[k - 1])), regime)
    if delta_sq is None or tau_c is None:
        raise ValueError("D(t) never reaches 1/e on the grid and no fitted g(t) is available")
    est = extract_rate(delta_sq, tau_c)
    return RateEstimate(est.gamma_inverse, est.regime, extrapolated=True)
