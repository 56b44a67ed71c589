"""Phonon-driven fluctuations of the qubit gap.

Every retained mode lambda contributes a coupling K (rad/s per sqrt(amu)
angstrom of normal coordinate), a thermal amplitude sigma with
sigma^2 = hbar (2n + 1) / (2 omega), and a q-point weight w. The
symmetrized correlation is

    C(t) = sum_lambda w K^2 sigma^2 cos(omega t) / 2

and a random-phase realization of the same bath is

    dE(t) = sum_lambda K sigma sqrt(w) cos(omega t + phi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import FREQUENCY_FLOOR_THZ, SystemBundle
from .spinmodel import CONSTANTS, SpinTriplet, gap_weights, spin_difference

__all__ = [
    "CHANNELS",
    "GHZ_TO_RAD_S",
    "MHZ_TO_RAD_S",
    "GridError",
    "ChannelError",
    "ModeCoupling",
    "ModeCouplings",
    "ThermalState",
    "FluctuationTrace",
    "Correlation",
    "occupation",
    "thermal_state",
    "mode_couplings",
    "analytic_autocorrelation",
    "stochastic_trace",
    "default_grid",
    "check_resolved",
    "compensated_sum",
]

CHANNELS = ("sp-ph", "sp-nu-ph", "sp-nu")
GHZ_TO_RAD_S = 2.0 * np.pi * 1e9
MHZ_TO_RAD_S = 2.0 * np.pi * 1e6
# hbar / (amu angstrom^2), so that sigma^2 = this * (2n + 1) / (2 omega) in amu angstrom^2
_HBAR_AMU_ANG2 = CONSTANTS.hbar / (CONSTANTS.amu * 1e-20)


class GridError(ValueError):
    pass


class ChannelError(ValueError):
    pass


def compensated_sum(rows: np.ndarray) -> np.ndarray:
    """Neumaier summation over axis 0; result independent of row order to ~1 ulp."""
    rows = np.asarray(rows, dtype=float)
    total = np.zeros(rows.shape[1:])
    comp = np.zeros(rows.shape[1:])
    for x in rows:
        t = total + x
        big = np.abs(total) >= np.abs(x)
        comp += np.where(big, (total - t) + x, (x - t) + total)
        total = t
    return total + comp


def occupation(freq_thz, temperature: float):
    """Bose-Einstein occupation for ordinary frequency ``freq_thz`` (THz) at T (K)."""
    f = np.asarray(freq_thz, dtype=float)
    if np.any(f <= 0):
        raise ValueError("mode frequency must be positive")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        n = np.zeros_like(f)
    else:
        x = CONSTANTS.h * f * 1e12 / (CONSTANTS.k_B * temperature)
        with np.errstate(over="ignore"):
            n = 1.0 / np.expm1(x)
    return float(n) if n.ndim == 0 else n


@dataclass(frozen=True, eq=False)
class ThermalState:
    temperature: float
    frequencies: np.ndarray  # THz
    occupation: np.ndarray
    sigma: np.ndarray  # sqrt(amu) angstrom; zero for excluded modes
    retained: np.ndarray


def thermal_state(frequencies, temperature: float, floor: float = FREQUENCY_FLOOR_THZ) -> ThermalState:
    if isinstance(frequencies, SystemBundle):
        frequencies = frequencies.frequencies
    f = np.asarray(frequencies, dtype=float)
    retained = f > floor
    n = np.zeros_like(f)
    sigma = np.zeros_like(f)
    if np.any(retained):
        n[retained] = occupation(f[retained], temperature)
        omega = 2 * np.pi * f[retained] * 1e12
        sigma[retained] = np.sqrt(_HBAR_AMU_ANG2 * (2 * n[retained] + 1) / (2 * omega))
    return ThermalState(float(temperature), f, n, sigma, retained)


@dataclass(frozen=True)
class ModeCoupling:
    mode_index: int
    coupling: float  # rad/s per sqrt(amu) angstrom
    channel: str


@dataclass(frozen=True, eq=False)
class ModeCouplings:
    """Couplings of one channel for every mode of a bundle, as arrays."""

    channel: str
    coupling: np.ndarray
    frequencies: np.ndarray
    q_weights: np.ndarray
    retained: np.ndarray

    def __len__(self):
        return len(self.coupling)

    def __getitem__(self, k: int) -> ModeCoupling:
        return ModeCoupling(int(k), float(self.coupling[k]), self.channel)

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def select(self, mask) -> "ModeCouplings":
        """Keep the couplings where ``mask`` is true, zeroing the rest."""
        mask = np.asarray(mask, dtype=bool)
        return ModeCouplings(self.channel, np.where(mask, self.coupling, 0.0),
                             self.frequencies, self.q_weights, self.retained)

    def with_coupling(self, coupling) -> "ModeCouplings":
        c = np.where(self.retained, np.asarray(coupling, dtype=float), 0.0)
        return ModeCouplings(self.channel, c, self.frequencies, self.q_weights, self.retained)


def _displacement_patterns(bundle: SystemBundle) -> np.ndarray:
    """Physical displacement per unit normal coordinate, shape (modes, atoms, 3)."""
    return bundle.eigenvectors / np.sqrt(bundle.masses)[None, :, None]


def _on_site_hfi_contraction(bundle: SystemBundle, sites, moments, spin: SpinTriplet | None) -> np.ndarray:
    """I0 . dA/dR_{aj} . dS per atom and direction (MHz / angstrom); zero off the occupied sites."""
    ds = spin_difference(spin=spin)
    grad = np.zeros((bundle.n_atoms, 3))
    if len(sites):
        g = bundle.hfi_grad[np.asarray(sites)]  # (k, j, 3, 3)
        grad[np.asarray(sites)] = np.einsum("kl,kjlm,m->kj", np.asarray(moments), g, ds)
    return grad


def mode_couplings(bundle: SystemBundle, spin: SpinTriplet | None = None, channel: str = "sp-ph",
                   nuclear_config=None, floor: float = FREQUENCY_FLOOR_THZ,
                   atoms=None) -> ModeCouplings:
    """Gap couplings K for every mode of ``bundle``.

    ``atoms`` restricts the displacement sum to a subset of atoms, which is
    how atom-resolved contributions are obtained.
    """
    if not bundle.modes:
        raise ChannelError(f"{channel}: bundle has no phonon modes")
    if channel == "sp-ph":
        if bundle.zfs_grad is None:
            raise ChannelError("sp-ph channel requires zfs_grad_ghz_per_ang")
        # gap derivative per (atom, direction), GHz / angstrom
        per_atom = np.einsum("ajkl,kl->aj", bundle.zfs_grad, gap_weights(spin=spin)) * GHZ_TO_RAD_S
    elif channel == "sp-nu-ph":
        if bundle.hfi_grad is None:
            raise ChannelError("sp-nu-ph channel requires hfi_grad_mhz_per_ang")
        if nuclear_config is None:
            raise ChannelError("sp-nu-ph channel requires a nuclear spin configuration")
        per_atom = _on_site_hfi_contraction(bundle, nuclear_config.sites, nuclear_config.moments,
                                            spin) * MHZ_TO_RAD_S
    else:
        raise ChannelError(f"no phonon couplings for channel {channel!r}")
    if atoms is not None:
        keep = np.zeros(bundle.n_atoms, dtype=bool)
        keep[np.atleast_1d(atoms)] = True
        per_atom = np.where(keep[:, None], per_atom, 0.0)
    k = np.einsum("maj,aj->m", _displacement_patterns(bundle), per_atom)
    freqs = bundle.frequencies
    retained = freqs > floor
    return ModeCouplings(channel, np.where(retained, k, 0.0), freqs, bundle.q_weights, retained)


@dataclass(frozen=True, eq=False)
class FluctuationTrace:
    times: np.ndarray  # s, uniform
    values: np.ndarray  # rad/s
    channel: str
    seed: int | None = None
    temperature: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("trace times and values must be 1-D arrays of equal length")
        if len(t) > 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
            raise GridError("trace time grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise ValueError("trace values must be finite")


@dataclass(frozen=True, eq=False)
class Correlation:
    """C(t) samples (rad^2/s^2) on a uniform lag grid."""

    times: np.ndarray
    values: np.ndarray
    source: str = "analytic"
    n_traces: int = 0

    @property
    def delta_sq(self) -> float:
        return float(self.values[0])


def _modal_terms(couplings: ModeCouplings, thermal: ThermalState):
    if len(couplings) != len(thermal.frequencies):
        raise ValueError("couplings and thermal state describe different mode sets")
    amp2 = couplings.q_weights * couplings.coupling ** 2 * thermal.sigma ** 2 / 2.0
    omega = 2 * np.pi * couplings.frequencies * 1e12
    active = couplings.retained & (amp2 > 0)
    return amp2, omega, active


def analytic_autocorrelation(couplings: ModeCouplings, thermal: ThermalState, times,
                             per_mode: bool = False):
    """Closed-form symmetrized correlation on ``times``; ``per_mode`` also returns the terms."""
    if len(couplings) == 0:
        raise ChannelError("empty coupling list: the channel has no content")
    times = np.asarray(times, dtype=float)
    amp2, omega, active = _modal_terms(couplings, thermal)
    idx = np.flatnonzero(active)
    terms = amp2[idx, None] * np.cos(omega[idx, None] * times[None, :])
    values = compensated_sum(terms) if len(idx) else np.zeros_like(times)
    corr = Correlation(times, values, "analytic")
    if per_mode:
        return corr, idx, terms
    return corr


def check_resolved(times, f_max_hz: float, factor: float = 10.0) -> None:
    times = np.asarray(times, dtype=float)
    if len(times) < 2 or f_max_hz <= 0:
        return
    dt = times[1] - times[0]
    bound = 1.0 / (factor * f_max_hz)
    if dt >= bound:
        raise GridError(f"time step {dt:.3e} s under-resolves {f_max_hz:.3e} Hz; need dt < {bound:.3e} s")


def default_grid(frequencies_hz, dt: float | None = None, t_max: float | None = None,
                 points_per_period: int = 20, periods: float = 20.0) -> np.ndarray:
    """Uniform grid with dt = 1/(20 f_max) and t_max >= 20 / f_min."""
    f = np.asarray(frequencies_hz, dtype=float)
    f = f[f > 0]
    if f.size == 0:
        raise GridError("no positive frequencies to build a grid from")
    if dt is None:
        dt = 1.0 / (points_per_period * f.max())
    if t_max is None:
        t_max = periods / f.min()
    n = int(np.ceil(t_max / dt)) + 1
    return np.arange(n) * dt


def stochastic_trace(couplings: ModeCouplings, thermal: ThermalState, times, seed: int) -> FluctuationTrace:
    """One random-phase realization of dE(t); identical output for identical seed."""
    times = np.asarray(times, dtype=float)
    amp2, omega, active = _modal_terms(couplings, thermal)
    if np.any(active):
        check_resolved(times, omega[active].max() / (2 * np.pi))
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2 * np.pi, len(couplings))
    amp = np.where(active, couplings.coupling * thermal.sigma * np.sqrt(couplings.q_weights), 0.0)
    idx = np.flatnonzero(active)
    # cos(wt + p) = cos(wt) cos(p) - sin(wt) sin(p)
    wt = omega[idx, None] * times[None, :]
    values = (amp[idx] * np.cos(phases[idx])) @ np.cos(wt) - (amp[idx] * np.sin(phases[idx])) @ np.sin(wt)
    return FluctuationTrace(times, np.asarray(values, dtype=float), couplings.channel, seed, thermal.temperature)
