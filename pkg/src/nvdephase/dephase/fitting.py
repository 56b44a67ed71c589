"""Autocorrelation estimation and the two correlation-function fit models.

plain:       C(t) = A exp(-t/tau_c) + B
sinusoidal:  C(t) = A sin(omega t + phi) exp(-t/tau_c) + B
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

from ..fluct import Correlation, FluctuationTrace, compensated_sum

__all__ = [
    "TAU_UPPER_FACTOR",
    "CorrelationFit",
    "FitReport",
    "autocorrelation",
    "fit_correlation",
    "initial_guess",
]

TAU_UPPER_FACTOR = 100.0  # tau_c upper bound, in units of the fit window
MIN_SAMPLES = 16
_BATCH = 256


def autocorrelation(traces, max_lag: int | None = None) -> Correlation:
    """Unbiased lag-product estimate sum_i x[i+k] x[i] / (N - k), averaged over traces.

    A :class:`Correlation` (e.g. from the analytic kernel) passes through untouched.
    """
    if isinstance(traces, Correlation):
        return traces
    if isinstance(traces, FluctuationTrace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise ValueError("autocorrelation needs at least one trace")
    times = np.asarray(traces[0].times)
    for tr in traces[1:]:
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise ValueError("traces are sampled on mismatched grids")
    n = len(times)
    if max_lag is None:
        max_lag = n // 2
    max_lag = min(max_lag, n - 1)
    nfft = 1 << (2 * n - 1).bit_length()
    counts = (n - np.arange(max_lag + 1)).astype(float)
    partial = []
    for start in range(0, len(traces), _BATCH):
        block = np.stack([tr.values for tr in traces[start:start + _BATCH]])
        spec = np.fft.rfft(block, nfft, axis=1)
        lag_sums = np.fft.irfft(spec * spec.conj(), nfft, axis=1)[:, :max_lag + 1]
        partial.append(np.sum(lag_sums / counts, axis=0))
    values = compensated_sum(np.stack(partial)) / len(traces)
    return Correlation(times[:max_lag + 1] - times[0], values, "estimated", len(traces))


@dataclass(frozen=True)
class CorrelationFit:
    model: str  # "plain_exponential" | "sinusoidal_exponential"
    A: float  # rad^2/s^2
    tau_c: float  # s
    B: float  # rad^2/s^2
    delta_sq: float  # C(0) of the data
    residual: float  # ||fit - C|| / ||C||
    omega: float | None = None  # rad/s
    phi: float | None = None
    converged: bool = True
    flag: str = ""

    def evaluate(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        decay = np.exp(-t / self.tau_c)
        if self.model == "plain_exponential":
            return self.A * decay + self.B
        return self.A * np.sin(self.omega * t + self.phi) * decay + self.B


@dataclass(frozen=True)
class FitReport:
    plain: CorrelationFit
    sinusoidal: CorrelationFit | None


def initial_guess(x: np.ndarray, y: np.ndarray) -> dict:
    """Starting values on normalized data (y = C/C(0), x = t/window)."""
    tail = max(1, len(y) // 10)
    b = float(np.mean(y[-tail:]))
    a = float(y[0] - b)
    if abs(a) < 1e-12:
        tau = TAU_UPPER_FACTOR
    else:
        shape = (y - b) / a
        below = np.flatnonzero(shape < math.exp(-1.0))
        tau = float(x[below[0]]) if below.size and below[0] > 0 else TAU_UPPER_FACTOR
    spec = np.abs(np.fft.rfft(y - b))
    freqs = np.fft.rfftfreq(len(y), d=x[1] - x[0])
    omega = 2 * np.pi * float(freqs[int(np.argmax(spec))])
    return {"A": a, "B": b, "tau": tau, "omega": omega, "phi": math.pi / 2}


def _residual(fit_y: np.ndarray, y: np.ndarray) -> float:
    return float(np.linalg.norm(fit_y - y) / max(np.linalg.norm(y), 1e-300))


def _no_decay(model: str, c0: float, b: float, window: float) -> CorrelationFit:
    return CorrelationFit(model, 0.0, TAU_UPPER_FACTOR * window, b, c0, 0.0,
                          0.0 if model != "plain_exponential" else None,
                          math.pi / 2 if model != "plain_exponential" else None,
                          True, "no decay resolved")


_TOL = dict(xtol=1e-12, ftol=1e-12, gtol=1e-12)


def _fit_plain(x, y, guess, dx, max_nfev):
    def f(p):
        return p[0] * np.exp(-x / p[1]) + p[2] - y

    def jac(p):
        e = np.exp(-x / p[1])
        return np.column_stack([e, p[0] * e * x / p[1] ** 2, np.ones_like(x)])

    p0 = [guess["A"], min(max(guess["tau"], dx), TAU_UPPER_FACTOR), guess["B"]]
    return least_squares(f, p0, jac=jac, bounds=([-np.inf, dx * 1e-3, -np.inf], [np.inf, TAU_UPPER_FACTOR, np.inf]),
                         method="trf", x_scale="jac", max_nfev=max_nfev, **_TOL)


def _fit_sinusoidal(x, y, guess, dx, max_nfev):
    def f(p):
        return p[0] * np.sin(p[3] * x + p[4]) * np.exp(-x / p[1]) + p[2] - y

    def jac(p):
        e = np.exp(-x / p[1])
        arg = p[3] * x + p[4]
        sn, cs = np.sin(arg) * e, np.cos(arg) * e
        return np.column_stack([sn, p[0] * sn * x / p[1] ** 2, np.ones_like(x), p[0] * cs * x, p[0] * cs])

    omega_max = np.pi / dx
    lower = [-np.inf, dx * 1e-3, -np.inf, 0.0, -2 * np.pi]
    upper = [np.inf, TAU_UPPER_FACTOR, np.inf, omega_max, 2 * np.pi]
    best = None
    tau0 = min(max(guess["tau"], dx), TAU_UPPER_FACTOR)
    omega0 = min(guess["omega"], omega_max * 0.999)
    # phi = pi/2 start first, then quarter-turn restarts
    for phi0 in (math.pi / 2, 0.0, -math.pi / 2, math.pi):
        p0 = [guess["A"], tau0, guess["B"], omega0, phi0]
        res = least_squares(f, p0, jac=jac, bounds=(lower, upper), method="trf", x_scale="jac",
                            max_nfev=max_nfev, **_TOL)
        if best is None or res.cost < best.cost * (1 - 1e-9):
            best = res
    return best


def fit_correlation(corr: Correlation, max_nfev: int = 2000, sinusoidal: bool = True) -> FitReport:
    """Fit both models by bounded trust-region least squares on normalized data.

    ``sinusoidal=False`` skips the second model; ``FitReport.sinusoidal`` is then None.
    """
    t = np.asarray(corr.times, dtype=float)
    c = np.asarray(corr.values, dtype=float)
    if len(t) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} correlation samples, got {len(t)}")
    c0 = float(c[0])
    if not c0 > 0:
        raise ValueError("C(0) must be positive to fit a decay")
    window = float(t[-1] - t[0])
    x = (t - t[0]) / window
    y = c / c0
    dx = float(x[1] - x[0])
    guess = initial_guess(x, y)

    if abs(guess["A"]) < 1e-12 and np.allclose(y, y[0], rtol=0, atol=1e-12):
        return FitReport(_no_decay("plain_exponential", c0, c0, window),
                         _no_decay("sinusoidal_exponential", c0, c0, window) if sinusoidal else None)

    res = _fit_plain(x, y, guess, dx, max_nfev)
    a, tau, b = res.x
    a, tau, b = float(a), float(tau), float(b)
    plain = CorrelationFit("plain_exponential", a * c0, tau * window, b * c0, c0,
                           _residual(res.fun + y, y), converged=bool(res.success),
                           flag="" if res.success else "fit not converged")
    if tau >= 0.99 * TAU_UPPER_FACTOR or abs(a) < 1e-9:
        plain = replace(plain, tau_c=TAU_UPPER_FACTOR * window, flag="no decay resolved")

    if not sinusoidal:
        return FitReport(plain, None)
    res = _fit_sinusoidal(x, y, guess, dx, max_nfev)
    a, tau, b, om, ph = res.x
    a, tau, b, om, ph = (float(v) for v in (a, tau, b, om, ph))
    sinus = CorrelationFit("sinusoidal_exponential", a * c0, tau * window, b * c0, c0,
                           _residual(res.fun + y, y), omega=om / window, phi=ph,
                           converged=bool(res.success), flag="" if res.success else "fit not converged")
    if tau >= 0.99 * TAU_UPPER_FACTOR:
        sinus = replace(sinus, tau_c=TAU_UPPER_FACTOR * window, flag="no decay resolved")
    return FitReport(plain, sinus)
