"""Channel pipelines: correlation -> fit -> g(t) -> 1/Gamma, plus ensembles and decompositions."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bath import DEFAULT_CT, larmor_frequencies, precess, sample_configuration, site_fields, sp_nu_fluctuation
from ..fluct import (Correlation, ChannelError, analytic_autocorrelation, compensated_sum, default_grid,
                     mode_couplings, thermal_state)
from ..ingest import FREQUENCY_FLOOR_THZ, SystemBundle
from ..spinmodel import SpinTriplet
from .cumulant import extract_rate
from .fitting import FitReport, autocorrelation, fit_correlation

__all__ = [
    "CLASSIFICATION",
    "DEFAULT_ORIENTATION",
    "EnsembleStats",
    "DephasingResult",
    "ResolvedRow",
    "analyze_correlation",
    "pure_dephasing",
    "disorder_ensemble",
    "resolve_contributions",
    "localization",
    "map_ordered",
]

CLASSIFICATION = {
    "sp-ph": ("homogeneous", "irreversible"),
    "sp-nu-ph": ("inhomogeneous", "irreversible"),
    "sp-nu": ("inhomogeneous", "reversible"),
}

# sp-nu starts from randomly oriented spins; sp-nu-ph from field-aligned thermal tilts
DEFAULT_ORIENTATION = {"sp-nu": "isotropic", "sp-nu-ph": "thermal"}


def map_ordered(func, items, workers: int | None = None) -> list:
    """map() that optionally runs on a thread pool; output order always follows input."""
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


@dataclass(frozen=True)
class EnsembleStats:
    n_configs: int
    n_finite: int
    mean: float  # mean of per-configuration 1/Gamma over finite values
    std: float
    sem: float
    # per-configuration rates Gamma (0 for an empty bath); unlike 1/Gamma these
    # have no heavy tail from configurations with only weakly coupled nuclei
    rate_mean: float = 0.0
    rate_std: float = 0.0
    rate_sem: float = 0.0


@dataclass(frozen=True, eq=False)
class DephasingResult:
    channel: str
    gamma_inverse: float
    regime: str
    delta_sq: float
    tau_c: float
    lower: float
    upper: float
    status: str = "ok"
    fits: FitReport | None = None
    temperature: float | None = None
    ensemble: EnsembleStats | None = None
    extra: dict = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return 0.0 if math.isinf(self.gamma_inverse) else 1.0 / self.gamma_inverse

    @property
    def classification(self) -> tuple[str, str]:
        return CLASSIFICATION[self.channel]

    @property
    def flagged(self) -> bool:
        return self.status not in ("ok", "no dephasing")


def analyze_correlation(corr: Correlation, channel: str, temperature: float | None = None,
                        interval: bool = True) -> DephasingResult:
    """Fit both models, take Delta^2 = C(0) from the data, and solve g(t) = 1.

    With ``interval=False`` only the plain model is fitted and lower = upper.
    """
    delta_sq = float(corr.values[0]) if len(corr.values) else 0.0
    if not delta_sq > 0:
        return DephasingResult(channel, math.inf, "undefined", 0.0, math.nan, math.inf, math.inf,
                               "no dephasing", None, temperature)
    fits = fit_correlation(corr, sinusoidal=interval)
    plain = extract_rate(delta_sq, fits.plain.tau_c)
    if interval:
        sinus = extract_rate(delta_sq, fits.sinusoidal.tau_c)
        lower, upper = sorted((plain.gamma_inverse, sinus.gamma_inverse))
    else:
        lower = upper = plain.gamma_inverse
    status = fits.plain.flag or "ok"
    return DephasingResult(channel, plain.gamma_inverse, plain.regime, delta_sq, fits.plain.tau_c,
                           lower, upper, status, fits, temperature)


def _phonon_grid(bundle: SystemBundle, floor: float, dt, t_max) -> np.ndarray:
    f = bundle.frequencies
    f = f[f > floor]
    if f.size == 0:
        raise ChannelError("no phonon modes above the frequency floor")
    return default_grid(f * 1e12, dt=dt, t_max=t_max)


def pure_dephasing(bundle: SystemBundle, temperature: float, spin: SpinTriplet | None = None,
                   times=None, dt: float | None = None, t_max: float | None = None,
                   floor: float = FREQUENCY_FLOOR_THZ) -> tuple[DephasingResult, Correlation]:
    """Gamma[pure] from the phonon-modulated zero-field splitting (analytic kernel)."""
    couplings = mode_couplings(bundle, spin, "sp-ph", floor=floor)
    thermal = thermal_state(bundle.frequencies, temperature, floor)
    if times is None:
        times = _phonon_grid(bundle, floor, dt, t_max)
    corr = analytic_autocorrelation(couplings, thermal, times)
    return analyze_correlation(corr, "sp-ph", temperature), corr


def _ensemble_stats(results: list[DephasingResult]) -> EnsembleStats:
    vals = np.array([r.gamma_inverse for r in results], dtype=float)
    rates = np.array([r.rate for r in results], dtype=float)
    m = len(rates)
    rate_mean = math.fsum(rates) / m
    rate_std = float(np.std(rates, ddof=1)) if m > 1 else 0.0
    rate_stats = (rate_mean, rate_std, rate_std / math.sqrt(m))
    finite = vals[np.isfinite(vals)]
    n = len(finite)
    if n == 0:
        return EnsembleStats(len(vals), 0, math.inf, 0.0, 0.0, *rate_stats)
    mean = math.fsum(finite) / n
    std = float(np.std(finite, ddof=1)) if n > 1 else 0.0
    return EnsembleStats(len(vals), n, mean, std, std / math.sqrt(n), *rate_stats)


def _mean_correlation(corrs: list[Correlation]) -> Correlation:
    values = compensated_sum(np.stack([c.values for c in corrs])) / len(corrs)
    return Correlation(corrs[0].times, values, corrs[0].source, sum(c.n_traces for c in corrs))


def disorder_ensemble(bundle: SystemBundle, channel: str, concentration: float, b_field,
                      temperature: float = 0.0, n_configs: int = 128, seed: int = 0,
                      c_t: float = DEFAULT_CT, orientation: str | None = None,
                      spin: SpinTriplet | None = None, electron_m: int | None = None,
                      dt: float | None = None, t_max: float | None = None,
                      floor: float = FREQUENCY_FLOOR_THZ, workers: int | None = None,
                      keep_configs: bool = False) -> DephasingResult:
    """Gamma[disorder] for one (concentration, field) point.

    Per-configuration correlations are averaged before the fit; the
    per-configuration 1/Gamma values give the ensemble spread. Configuration k
    draws from the seed sequence (seed, k), so sweeps over field or
    temperature reuse the same site sets.
    """
    if channel not in ("sp-nu", "sp-nu-ph"):
        raise ChannelError(f"{channel!r} is not a disorder channel")
    if bundle.hfi is None:
        raise ChannelError(f"{channel} channel requires hfi_mhz")
    if n_configs < 1:
        raise ValueError("n_configs must be at least 1")
    orientation = orientation or DEFAULT_ORIENTATION[channel]
    b_field = np.asarray(b_field, dtype=float)
    configs = [sample_configuration(bundle, concentration, b_field, temperature, (seed, k), c_t, orientation)
               for k in range(n_configs)]
    extra = {"concentration": float(concentration), "b_field": b_field.tolist(), "seed": seed,
             "orientation": orientation, "c_t": c_t,
             "mean_sites": float(np.mean([len(c) for c in configs]))}

    if channel == "sp-nu":
        if not any(len(c) for c in configs):
            return _empty(channel, temperature, n_configs, extra)
        # one grid for every draw: span the Larmor frequencies of all candidate sites
        freqs = larmor_frequencies(site_fields(bundle.hfi, np.flatnonzero(bundle.spin_active), b_field,
                                               electron_m, spin))
        freqs = freqs[freqs > 0]
        if freqs.size == 0:
            return _empty(channel, temperature, n_configs, extra)
        times = default_grid(freqs, dt=dt, t_max=t_max)

        def one(cfg):
            traj = precess(cfg, bundle.hfi, times, electron_m, spin)
            return autocorrelation(sp_nu_fluctuation(traj, bundle.hfi, spin, seed=cfg.seed))
    else:
        if bundle.hfi_grad is None:
            raise ChannelError("sp-nu-ph channel requires hfi_grad_mhz_per_ang")
        thermal = thermal_state(bundle.frequencies, temperature, floor)
        times = _phonon_grid(bundle, floor, dt, t_max)

        def one(cfg):
            k = mode_couplings(bundle, spin, "sp-nu-ph", nuclear_config=cfg, floor=floor)
            return analytic_autocorrelation(k, thermal, times)

    corrs = map_ordered(one, configs, workers)
    per_config = map_ordered(lambda c: analyze_correlation(c, channel, temperature, interval=False), corrs,
                             workers)
    result = analyze_correlation(_mean_correlation(corrs), channel, temperature)
    if keep_configs:
        extra["per_config"] = per_config
        extra["configs"] = configs
    return DephasingResult(result.channel, result.gamma_inverse, result.regime, result.delta_sq,
                           result.tau_c, result.lower, result.upper, result.status, result.fits,
                           temperature, _ensemble_stats(per_config), extra)


def _empty(channel: str, temperature: float, n_configs: int, extra: dict) -> DephasingResult:
    return DephasingResult(channel, math.inf, "undefined", 0.0, math.nan, math.inf, math.inf, "no dephasing",
                           None, temperature, EnsembleStats(n_configs, 0, math.inf, 0.0, 0.0), extra)


@dataclass(frozen=True)
class ResolvedRow:
    index: int
    coordinate: float  # distance from the defect (angstrom) or frequency (THz)
    gamma_inverse: float
    delta_sq: float
    localization: float
    status: str


def localization(eigenvector: np.ndarray, distances: np.ndarray, shell_radius: float) -> float:
    """Inverse participation ratio sum_a p_a^2 over atoms inside the defect shell.

    p_a = |e_a|^2 is the share of the (unit-norm) eigenvector on atom a, so the
    score is 1 for a mode sitting on a single shell atom and small for
    extended modes.
    """
    p = np.sum(np.asarray(eigenvector) ** 2, axis=1)
    p = p / p.sum()
    inside = distances <= shell_radius
    return float(np.sum(p[inside] ** 2))


def resolve_contributions(bundle: SystemBundle, by: str, temperature: float,
                          spin: SpinTriplet | None = None, dt: float | None = None,
                          t_max: float | None = None, floor: float = FREQUENCY_FLOOR_THZ,
                          shell_radius: float = 3.0, workers: int | None = None) -> list[ResolvedRow]:
    """Per-atom or per-mode 1/Gamma[pure] with only that unit's terms kept."""
    if by not in ("atom", "mode"):
        raise ValueError(f"resolve by 'atom' or 'mode', got {by!r}")
    couplings = mode_couplings(bundle, spin, "sp-ph", floor=floor)
    thermal = thermal_state(bundle.frequencies, temperature, floor)
    times = _phonon_grid(bundle, floor, dt, t_max)
    distances = bundle.distances()

    if by == "atom":
        def one(a):
            k = mode_couplings(bundle, spin, "sp-ph", floor=floor, atoms=[a])
            res = analyze_correlation(analytic_autocorrelation(k, thermal, times), "sp-ph", temperature)
            return ResolvedRow(a, float(distances[a]), res.gamma_inverse, res.delta_sq, math.nan, res.status)
        return map_ordered(one, range(bundle.n_atoms), workers)

    evecs = bundle.eigenvectors

    def one(m):
        mask = np.zeros(len(couplings), dtype=bool)
        mask[m] = True
        k = couplings.select(mask)
        res = analyze_correlation(analytic_autocorrelation(k, thermal, times), "sp-ph", temperature)
        return ResolvedRow(m, float(bundle.frequencies[m]), res.gamma_inverse, res.delta_sq,
                           localization(evecs[m], distances, shell_radius), res.status)
    return map_ordered(one, range(len(couplings)), workers)
