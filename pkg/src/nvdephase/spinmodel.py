"""Spin-1 operator algebra and first-order level-gap expectation values.

Energies are kept in ordinary frequency units (GHz for the zero-field
splitting, MHz for Zeeman and hyperfine terms). The m_s basis defaults to
the ordering (+1, 0, -1), but any permutation is accepted as long as the
matrices are permuted consistently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.constants as sc

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "SpinTriplet",
    "spin_matrices",
    "gap_weights",
    "gap_expectation",
    "spin_expectation",
    "spin_difference",
    "zeeman_gap",
]

_C13_G_FACTOR = 1.404824  # mu / (I mu_N) for 13C, I = 1/2


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants plus the gyromagnetic ratios in lab units."""

    hbar: float = sc.hbar  # J s
    h: float = sc.h  # J s
    k_B: float = sc.k  # J / K
    mu_0: float = sc.mu_0  # N / A^2
    g_e: float = abs(sc.physical_constants["electron g factor"][0])
    mu_B: float = sc.physical_constants["Bohr magneton"][0]  # J / T
    mu_N: float = sc.physical_constants["nuclear magneton"][0]  # J / T
    g_I: float = _C13_G_FACTOR
    amu: float = sc.atomic_mass  # kg
    # MHz / G
    gamma_e: float = sc.physical_constants["electron gyromag. ratio in MHz/T"][0] * 1e-4
    # kHz / G, from g_I mu_N / h
    gamma_n: float = _C13_G_FACTOR * sc.physical_constants["nuclear magneton"][0] / sc.h * 1e-7

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"physical constant {name} must be positive, got {value}")

    @property
    def gamma_n_mhz_per_gauss(self) -> float:
        return self.gamma_n * 1e-3


CONSTANTS = PhysicalConstants()


def _default_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s2 = 1.0 / np.sqrt(2.0)
    sx = s2 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = s2 * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


@dataclass(frozen=True, eq=False)
class SpinTriplet:
    """S = 1 operators in an ordered m_s eigenbasis plus the qubit level pair.

    ``basis[k]`` is the m_s label of the k-th basis vector. ``qubit_pair`` is
    ``(upper, lower)``; gaps are always ``E(upper) - E(lower)``.
    """

    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    basis: tuple[int, int, int] = (1, 0, -1)
    qubit_pair: tuple[int, int] = (-1, 0)
    operators: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if sorted(self.basis) != [-1, 0, 1]:
            raise ValueError(f"basis must be a permutation of (+1, 0, -1), got {self.basis}")
        upper, lower = self.qubit_pair
        if upper == lower or upper not in (-1, 0, 1) or lower not in (-1, 0, 1):
            raise ValueError(f"qubit_pair must hold two distinct m_s values, got {self.qubit_pair}")
        ops = np.stack([np.asarray(m, dtype=complex) for m in (self.sx, self.sy, self.sz)])
        if ops.shape != (3, 3, 3):
            raise ValueError("spin matrices must be 3x3")
        ops.setflags(write=False)
        object.__setattr__(self, "operators", ops)

    def index(self, m: int) -> int:
        return self.basis.index(m)

    def state(self, m: int) -> np.ndarray:
        v = np.zeros(3, dtype=complex)
        v[self.index(m)] = 1.0
        return v

    def with_pair(self, pair: tuple[int, int]) -> "SpinTriplet":
        return replace(self, qubit_pair=tuple(pair))

    def permuted(self, order: tuple[int, int, int]) -> "SpinTriplet":
        """Same operators expressed in the basis reordered by ``order``."""
        p = np.eye(3)[list(order)]
        mats = [p @ m @ p.T for m in (self.sx, self.sy, self.sz)]
        basis = tuple(self.basis[k] for k in order)
        return SpinTriplet(*mats, basis=basis, qubit_pair=self.qubit_pair)


def spin_matrices(s: float = 1, qubit_pair: tuple[int, int] = (-1, 0)) -> SpinTriplet:
    """Standard S = 1 matrices in the (+1, 0, -1) basis."""
    if s != 1:
        raise ValueError(f"only the spin triplet (s = 1) is supported, got s = {s}")
    return SpinTriplet(*_default_matrices(), qubit_pair=tuple(qubit_pair))


_DEFAULT_SPIN = spin_matrices()


def _resolve(spin: SpinTriplet | None, pair) -> SpinTriplet:
    spin = _DEFAULT_SPIN if spin is None else spin
    if pair is not None and tuple(pair) != spin.qubit_pair:
        spin = spin.with_pair(tuple(pair))
    return spin


def _second_moments(spin: SpinTriplet, m: int) -> np.ndarray:
    v = spin.state(m)
    ops = spin.operators
    # <m| S_i S_j |m>
    return np.einsum("a,iab,jbc,c->ij", v.conj(), ops, ops, v)


def gap_weights(pair=None, spin: SpinTriplet | None = None) -> np.ndarray:
    """Real symmetric W with gap(delta) = sum_ij W_ij delta_ij for symmetric delta.

    The antisymmetric (imaginary) part of <m|S_i S_j|m> drops out against a
    symmetric tensor.
    """
    spin = _resolve(spin, pair)
    upper, lower = spin.qubit_pair
    w = _second_moments(spin, upper) - _second_moments(spin, lower)
    return 0.5 * (w + w.T).real


def _check_symmetric(delta: np.ndarray, tol: float) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-2:] != (3, 3):
        raise ValueError(f"expected 3x3 tensor(s), got shape {delta.shape}")
    scale = max(1.0, float(np.max(np.abs(delta), initial=0.0)))
    asym = np.max(np.abs(delta - np.swapaxes(delta, -1, -2)), initial=0.0)
    if asym > tol * scale:
        raise ValueError(f"perturbation tensor is not symmetric (max asymmetry {asym:.3e})")
    return delta


def gap_expectation(delta, pair=None, spin: SpinTriplet | None = None, *, tol: float = 1e-9):
    """<upper|S.delta.S|upper> - <lower|S.delta.S|lower>, first order in delta.

    ``delta`` may carry leading batch axes; the result then has those axes.
    Units follow the input (GHz in, GHz out).
    """
    delta = _check_symmetric(delta, tol)
    w = gap_weights(pair, spin)
    out = np.einsum("...ij,ij->...", delta, w)
    return float(out) if out.ndim == 0 else out


def spin_expectation(m: int, spin: SpinTriplet | None = None) -> np.ndarray:
    spin = _DEFAULT_SPIN if spin is None else spin
    v = spin.state(m)
    return np.einsum("a,iab,b->i", v.conj(), spin.operators, v).real


def spin_difference(pair=None, spin: SpinTriplet | None = None) -> np.ndarray:
    """<upper|S|upper> - <lower|S|lower> as a real 3-vector."""
    spin = _resolve(spin, pair)
    upper, lower = spin.qubit_pair
    return spin_expectation(upper, spin) - spin_expectation(lower, spin)


def zeeman_gap(b_field, pair=None, spin: SpinTriplet | None = None,
               constants: PhysicalConstants = CONSTANTS) -> float:
    """Static Zeeman contribution gamma_e B.dS to the qubit gap, in MHz (B in gauss)."""
    b = np.asarray(b_field, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError(f"b_field must be a finite 3-vector, got {b_field!r}")
    return float(constants.gamma_e * b @ spin_difference(pair, spin))
