"""Classical 13C nuclear-spin bath: random placement, orientation, precession.

Nuclear moments are classical vectors of length 1/2. Each precesses about a
static effective field made of the applied field plus the hyperfine field of
the electron frozen in one m_s state, so the motion is an exact rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fluct import MHZ_TO_RAD_S, FluctuationTrace, check_resolved, compensated_sum, default_grid
from .ingest import SystemBundle
from .spinmodel import CONSTANTS, SpinTriplet, spin_difference, spin_expectation

__all__ = [
    "DEFAULT_CT",
    "NuclearSpinConfig",
    "PrecessionTrajectory",
    "sample_configuration",
    "effective_fields",
    "site_fields",
    "precess",
    "sp_nu_fluctuation",
    "larmor_frequencies",
    "bath_grid",
]

DEFAULT_CT = 1e-3  # rad / K
SPIN_LENGTH = 0.5
PARALLEL_TOL = 1e-12  # relative transverse coupling treated as exactly zero


@dataclass(frozen=True, eq=False)
class NuclearSpinConfig:
    sites: np.ndarray  # atom indices, sorted
    moments: np.ndarray  # (k, 3), |I0| = 1/2
    seed: object
    concentration: float
    b_field: np.ndarray  # gauss
    temperature: float
    c_t: float = DEFAULT_CT
    orientation: str = "thermal"

    def __len__(self):
        return len(self.sites)


@dataclass(frozen=True, eq=False)
class PrecessionTrajectory:
    times: np.ndarray
    sites: np.ndarray
    moments: np.ndarray  # (k, nt, 3)
    effective_fields: np.ndarray  # (k, 3), gauss


def _perpendicular_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, trial)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def sample_configuration(bundle: SystemBundle, concentration: float, b_field, temperature: float,
                         seed, c_t: float = DEFAULT_CT, orientation: str = "thermal") -> NuclearSpinConfig:
    """Occupy each spin-active site with probability ``concentration`` and orient the moments.

    ``orientation="thermal"`` tilts each moment away from the field direction
    by |N(0, c_t T)| with a uniform azimuth; ``"isotropic"`` draws directions
    uniformly on the sphere.
    """
    if not 0.0 <= concentration <= 1.0:
        raise ValueError(f"concentration must lie in [0, 1], got {concentration}")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if orientation not in ("thermal", "isotropic"):
        raise ValueError(f"unknown orientation mode {orientation!r}")
    active = np.flatnonzero(bundle.spin_active)
    if active.size == 0:
        raise ValueError("bundle has no spin-active sites")
    b = np.asarray(b_field, dtype=float)
    axis = b if np.linalg.norm(b) > 0 else np.asarray(bundle.meta.axis, dtype=float)
    axis = axis / np.linalg.norm(axis)

    rng = np.random.default_rng(seed)
    sites = active[rng.random(active.size) < concentration]
    k = sites.size
    if orientation == "thermal":
        theta = np.abs(rng.standard_normal(k)) * (c_t * temperature)
        phi = rng.uniform(0.0, 2 * np.pi, k)
        e1, e2 = _perpendicular_frame(axis)
        dirs = (np.cos(theta)[:, None] * axis
                + np.sin(theta)[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2))
    else:
        v = rng.standard_normal((k, 3))
        dirs = v / np.linalg.norm(v, axis=1, keepdims=True)
    return NuclearSpinConfig(sites, SPIN_LENGTH * dirs.reshape(k, 3), seed, float(concentration), b,
                             float(temperature), float(c_t), orientation)


def site_fields(hfi: np.ndarray, sites, b_field, electron_m: int | None = None,
                spin: SpinTriplet | None = None) -> np.ndarray:
    """B_ext + A <S> / gamma_n for the given sites, in gauss."""
    if spin is None:
        from .spinmodel import spin_matrices
        spin = spin_matrices()
    m = spin.qubit_pair[0] if electron_m is None else electron_m
    s_mean = spin_expectation(m, spin)
    hfi = np.asarray(hfi, dtype=float)
    sites = np.asarray(sites, dtype=int)
    if len(sites) and sites.max() >= len(hfi):
        raise ValueError("site mismatch: configuration references sites beyond the hyperfine table")
    return np.asarray(b_field, dtype=float)[None, :] + (hfi[sites] @ s_mean) / CONSTANTS.gamma_n_mhz_per_gauss


def effective_fields(config: NuclearSpinConfig, hfi: np.ndarray, electron_m: int | None = None,
                     spin: SpinTriplet | None = None) -> np.ndarray:
    """B_ext + A <S> / gamma_n per occupied site, in gauss."""
    return site_fields(hfi, config.sites, config.b_field, electron_m, spin)


def larmor_frequencies(fields: np.ndarray) -> np.ndarray:
    """Precession frequencies (Hz) for effective fields in gauss."""
    return CONSTANTS.gamma_n * 1e3 * np.linalg.norm(np.atleast_2d(fields), axis=1)


def bath_grid(frequencies_hz, dt=None, t_max=None) -> np.ndarray:
    return default_grid(frequencies_hz, dt=dt, t_max=t_max)


def precess(config: NuclearSpinConfig, hfi: np.ndarray, times, electron_m: int | None = None,
            spin: SpinTriplet | None = None) -> PrecessionTrajectory:
    """Integrate dI/dt = gamma_n I x B_eff by exact rotation about each static field."""
    times = np.asarray(times, dtype=float)
    fields = effective_fields(config, hfi, electron_m, spin)
    k = len(config.sites)
    if k == 0:
        return PrecessionTrajectory(times, config.sites, np.zeros((0, len(times), 3)), fields)
    freqs = larmor_frequencies(fields)
    check_resolved(times, float(freqs.max()))
    norm = np.linalg.norm(fields, axis=1, keepdims=True)
    axis = np.divide(fields, norm, out=np.zeros_like(fields), where=norm > 0)
    i0 = config.moments
    par = np.sum(i0 * axis, axis=1, keepdims=True) * axis
    perp = i0 - par
    cross = np.cross(axis, perp)
    # dI/dt = gamma I x B = -gamma B x I: rotation by -omega t about B
    angle = -2 * np.pi * freqs[:, None] * (times - times[0])[None, :]
    c, s = np.cos(angle)[..., None], np.sin(angle)[..., None]
    moments = par[:, None, :] + c * perp[:, None, :] + s * cross[:, None, :]
    return PrecessionTrajectory(times, config.sites, moments, fields)


def sp_nu_fluctuation(trajectory: PrecessionTrajectory, hfi: np.ndarray,
                      spin: SpinTriplet | None = None, seed=None) -> FluctuationTrace:
    """dE(t) = sum_I (I(t) - I0) . A_I . dS in rad/s."""
    hfi = np.asarray(hfi, dtype=float)
    times = trajectory.times
    if trajectory.moments.shape[0] != len(trajectory.sites):
        raise ValueError("site mismatch between trajectory moments and site list")
    if len(trajectory.sites) == 0:
        return FluctuationTrace(times, np.zeros_like(times), "sp-nu", seed)
    if trajectory.sites.max() >= len(hfi):
        raise ValueError("site mismatch: trajectory references sites beyond the hyperfine table")
    coupling = hfi[trajectory.sites] @ spin_difference(spin=spin)  # (k, 3), MHz
    # only the part of A.dS transverse to the precession axis sees any motion;
    # dropping the axial part removes roundoff when the two are parallel
    fields = trajectory.effective_fields
    norm = np.linalg.norm(fields, axis=1, keepdims=True)
    axis = np.divide(fields, norm, out=np.zeros_like(fields), where=norm > 0)
    transverse = coupling - np.sum(coupling * axis, axis=1, keepdims=True) * axis
    scale = np.linalg.norm(coupling, axis=1, keepdims=True)
    coupling = np.where(np.linalg.norm(transverse, axis=1, keepdims=True) > PARALLEL_TOL * scale,
                        transverse, 0.0)
    delta = trajectory.moments - trajectory.moments[:, :1, :]
    per_site = np.einsum("ktl,kl->kt", delta, coupling) * MHZ_TO_RAD_S
    return FluctuationTrace(times, compensated_sum(per_site), "sp-nu", seed)
