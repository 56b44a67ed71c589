"""System bundles: schema, JSON I/O, validation, tensor oracles and gradients.

A bundle holds everything the dephasing pipelines need about one defect
supercell: atoms, the zero-field-splitting tensor D (GHz), per-site
hyperfine tensors A (MHz), their Cartesian gradients, and a weighted list of
phonon modes with mass-weighted orthonormal eigenvectors.

Hyperfine gradients are on-site: ``hfi_grad[I, j]`` is dA(R_I)/dR_{I,j}, the
change of site I's tensor when that nucleus alone is displaced.
"""

from __future__ import annotations

import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .spinmodel import CONSTANTS, PhysicalConstants

__all__ = [
    "FORMAT_NAME",
    "FREQUENCY_FLOOR_THZ",
    "BundleError",
    "BundleParseError",
    "BundleShapeError",
    "BundleInvariantError",
    "GradientError",
    "AtomRecord",
    "PhononMode",
    "BundleMeta",
    "SystemBundle",
    "Tolerances",
    "load_bundle",
    "bundle_from_dict",
    "bundle_to_dict",
    "dumps_bundle",
    "save_bundle",
    "validate_bundle",
    "PointDipoleOracle",
    "TabulatedOracle",
    "oracle_from_meta",
    "SyntheticSpec",
    "generate_synthetic",
    "finite_difference_gradients",
    "dipolar_kernel",
    "dipolar_kernel_gradient",
    "diamond_cluster",
]

FORMAT_NAME = "nvdephase-bundle"
FORMAT_VERSION = 1
FREQUENCY_FLOOR_THZ = 0.1

UNITS = {
    "mass": "amu",
    "position": "angstrom",
    "zfs": "GHz",
    "zfs_grad": "GHz/angstrom",
    "hfi": "MHz",
    "hfi_grad": "MHz/angstrom",
    "frequency": "THz",
    "eigenvector": "mass-weighted, dimensionless",
}

OPTIONAL_BLOCKS = ("zfs_grad_ghz_per_ang", "hfi_mhz", "hfi_grad_mhz_per_ang", "modes")


class BundleError(ValueError):
    """Base class for bundle problems; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class BundleParseError(BundleError):
    pass


class BundleShapeError(BundleError):
    pass


class BundleInvariantError(BundleError):
    pass


class GradientError(RuntimeError):
    def __init__(self, atom: int, direction: int, cause: BaseException):
        self.atom = atom
        self.direction = direction
        super().__init__(f"oracle failed for atom {atom}, direction {'xyz'[direction]}: {cause}")


@dataclass(frozen=True)
class AtomRecord:
    species: str
    mass: float  # amu
    position: tuple[float, float, float]  # angstrom
    spin_active: bool = False


@dataclass(frozen=True, eq=False)
class PhononMode:
    frequency: float  # THz, ordinary frequency
    q_weight: float
    eigenvector: np.ndarray  # (n_atoms, 3), mass-weighted
    q_index: int = 0


@dataclass(frozen=True)
class BundleMeta:
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    cell: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    provenance: str = ""
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    oracle: dict | None = None


@dataclass(frozen=True, eq=False)
class SystemBundle:
    atoms: tuple[AtomRecord, ...]
    zfs: np.ndarray
    zfs_grad: np.ndarray | None = None
    hfi: np.ndarray | None = None
    hfi_grad: np.ndarray | None = None
    modes: tuple[PhononMode, ...] = ()
    meta: BundleMeta = field(default_factory=BundleMeta)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms], dtype=float)

    @property
    def spin_active(self) -> np.ndarray:
        return np.array([a.spin_active for a in self.atoms], dtype=bool)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes], dtype=float)

    @property
    def q_weights(self) -> np.ndarray:
        return np.array([m.q_weight for m in self.modes], dtype=float)

    @property
    def eigenvectors(self) -> np.ndarray:
        if not self.modes:
            return np.zeros((0, self.n_atoms, 3))
        return np.stack([m.eigenvector for m in self.modes])

    @property
    def missing(self) -> tuple[str, ...]:
        present = {
            "zfs_grad_ghz_per_ang": self.zfs_grad is not None,
            "hfi_mhz": self.hfi is not None,
            "hfi_grad_mhz_per_ang": self.hfi_grad is not None,
            "modes": bool(self.modes),
        }
        return tuple(k for k in OPTIONAL_BLOCKS if not present[k])

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions - np.asarray(self.meta.center), axis=1)


@dataclass(frozen=True)
class Tolerances:
    symmetric: float = 1e-9
    trace: float = 1e-6  # GHz
    orthonormal: float = 1e-6
    weight_sum: float = 1e-6
    asr_abs: float = 1e-6  # GHz / angstrom
    asr_rel: float = 1e-3


# --------------------------------------------------------------------------
# serialization


def _array(value, shape: tuple, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BundleParseError(path, f"not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise BundleShapeError(path, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise BundleInvariantError(path, "non-finite entries")
    return arr


def _require(data: dict, key: str, path: str = ""):
    if key not in data:
        raise BundleParseError(f"{path}{key}", "required field missing")
    return data[key]


def bundle_from_dict(data: dict, tolerances: Tolerances = Tolerances()) -> SystemBundle:
    if not isinstance(data, dict):
        raise BundleParseError("<root>", "bundle document must be a JSON object")
    raw_atoms = _require(data, "atoms")
    if not isinstance(raw_atoms, list) or not raw_atoms:
        raise BundleParseError("atoms", "must be a non-empty list")
    atoms = []
    for i, rec in enumerate(raw_atoms):
        p = f"atoms[{i}]."
        if not isinstance(rec, dict):
            raise BundleParseError(f"atoms[{i}]", "must be an object")
        species = _require(rec, "species", p)
        try:
            mass = float(_require(rec, "mass_amu", p))
        except (TypeError, ValueError):
            raise BundleParseError(p + "mass_amu", "not a number") from None
        pos = _array(_require(rec, "pos_ang", p), (3,), p + "pos_ang")
        atoms.append(AtomRecord(str(species), mass, tuple(pos.tolist()),
                                bool(rec.get("spin_active", False))))
    n = len(atoms)

    zfs = _array(_require(data, "zfs_ghz"), (3, 3), "zfs_ghz")
    zfs_grad = hfi = hfi_grad = None
    if "zfs_grad_ghz_per_ang" in data:
        zfs_grad = _array(data["zfs_grad_ghz_per_ang"], (n, 3, 3, 3), "zfs_grad_ghz_per_ang")
    if "hfi_mhz" in data:
        hfi = _array(data["hfi_mhz"], (n, 3, 3), "hfi_mhz")
    if "hfi_grad_mhz_per_ang" in data:
        hfi_grad = _array(data["hfi_grad_mhz_per_ang"], (n, 3, 3, 3), "hfi_grad_mhz_per_ang")

    modes = []
    for k, rec in enumerate(data.get("modes", []) or []):
        p = f"modes[{k}]."
        if not isinstance(rec, dict):
            raise BundleParseError(f"modes[{k}]", "must be an object")
        try:
            freq = float(_require(rec, "freq_thz", p))
            weight = float(_require(rec, "q_weight", p))
            q_index = int(rec.get("q_index", 0))
        except (TypeError, ValueError):
            raise BundleParseError(f"modes[{k}]", "freq_thz, q_weight, q_index must be numbers") from None
        evec = _array(_require(rec, "evec", p), (n, 3), p + "evec")
        modes.append(PhononMode(freq, weight, evec, q_index))

    raw_meta = data.get("meta", {}) or {}
    if not isinstance(raw_meta, dict):
        raise BundleParseError("meta", "must be an object")
    meta = BundleMeta(
        axis=tuple(_array(raw_meta.get("axis", [0, 0, 1]), (3,), "meta.axis").tolist()),
        cell=tuple(tuple(r) for r in _array(raw_meta.get("cell", np.zeros((3, 3))), (3, 3), "meta.cell").tolist()),
        provenance=str(raw_meta.get("provenance", "")),
        center=tuple(_array(raw_meta.get("center", [0, 0, 0]), (3,), "meta.center").tolist()),
        oracle=raw_meta.get("oracle"),
    )
    bundle = SystemBundle(tuple(atoms), zfs, zfs_grad, hfi, hfi_grad, tuple(modes), meta)
    validate_bundle(bundle, tolerances)
    return bundle


def load_bundle(source, tolerances: Tolerances = Tolerances()) -> SystemBundle:
    """Load and validate a bundle from a path, JSON text/bytes, or a file object."""
    if isinstance(source, (str, os.PathLike)) and not str(source).lstrip().startswith("{"):
        text = Path(source).read_text()
    elif isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, (io.IOBase,)) or hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    else:
        text = str(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleParseError("<document>", f"invalid JSON ({exc})") from None
    return bundle_from_dict(data, tolerances)


def bundle_to_dict(bundle: SystemBundle) -> dict:
    out = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "units": dict(UNITS),
        "atoms": [
            {"species": a.species, "mass_amu": float(a.mass),
             "pos_ang": [float(x) for x in a.position], "spin_active": bool(a.spin_active)}
            for a in bundle.atoms
        ],
        "zfs_ghz": np.asarray(bundle.zfs, dtype=float).tolist(),
    }
    if bundle.zfs_grad is not None:
        out["zfs_grad_ghz_per_ang"] = np.asarray(bundle.zfs_grad, dtype=float).tolist()
    if bundle.hfi is not None:
        out["hfi_mhz"] = np.asarray(bundle.hfi, dtype=float).tolist()
    if bundle.hfi_grad is not None:
        out["hfi_grad_mhz_per_ang"] = np.asarray(bundle.hfi_grad, dtype=float).tolist()
    if bundle.modes:
        out["modes"] = [
            {"freq_thz": float(m.frequency), "q_weight": float(m.q_weight),
             "q_index": int(m.q_index), "evec": np.asarray(m.eigenvector, dtype=float).tolist()}
            for m in bundle.modes
        ]
    meta = {
        "axis": [float(x) for x in bundle.meta.axis],
        "cell": [[float(x) for x in row] for row in bundle.meta.cell],
        "provenance": bundle.meta.provenance,
        "center": [float(x) for x in bundle.meta.center],
    }
    if bundle.meta.oracle is not None:
        meta["oracle"] = bundle.meta.oracle
    out["meta"] = meta
    return out


def dumps_bundle(bundle: SystemBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=1) + "\n"


def save_bundle(bundle: SystemBundle, path) -> None:
    Path(path).write_text(dumps_bundle(bundle))


# --------------------------------------------------------------------------
# validation


def _asym(t: np.ndarray) -> float:
    return float(np.max(np.abs(t - np.swapaxes(t, -1, -2)), initial=0.0))


def validate_bundle(bundle: SystemBundle, tol: Tolerances = Tolerances()) -> None:
    n = bundle.n_atoms
    for i, a in enumerate(bundle.atoms):
        if not (np.isfinite(a.mass) and a.mass > 0):
            raise BundleInvariantError(f"atoms[{i}].mass_amu", f"mass must be positive, got {a.mass}")

    d = bundle.zfs
    if _asym(d) > tol.symmetric:
        raise BundleInvariantError("zfs_ghz", f"tensor not symmetric (max asymmetry {_asym(d):.3e} GHz)")
    if abs(np.trace(d)) >= tol.trace:
        raise BundleInvariantError("zfs_ghz", f"tracelessness violated: trace {np.trace(d):.6g} GHz")

    if bundle.zfs_grad is not None:
        g = bundle.zfs_grad
        scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
        if _asym(g) > tol.symmetric * scale:
            raise BundleInvariantError("zfs_grad_ghz_per_ang", "gradient slices not symmetric")
        drift = np.abs(g.sum(axis=0))
        bound = tol.asr_abs + tol.asr_rel * np.abs(g).sum(axis=0)
        if np.any(drift > bound):
            raise BundleInvariantError(
                "zfs_grad_ghz_per_ang",
                f"acoustic sum rule violated: max |sum_a dD/dR_a| = {drift.max():.3e} GHz/angstrom")

    if bundle.hfi_grad is not None and bundle.hfi is None:
        raise BundleInvariantError("hfi_grad_mhz_per_ang", "hyperfine gradients given without hfi_mhz")

    if bundle.modes:
        _validate_modes(bundle, tol)

    axis = np.asarray(bundle.meta.axis)
    if not np.linalg.norm(axis) > 0:
        raise BundleInvariantError("meta.axis", "defect axis must be a non-zero vector")


def _validate_modes(bundle: SystemBundle, tol: Tolerances) -> None:
    n = bundle.n_atoms
    by_q: dict[int, list[int]] = {}
    for k, m in enumerate(bundle.modes):
        if not np.isfinite(m.frequency):
            raise BundleInvariantError(f"modes[{k}].freq_thz", "non-finite frequency")
        if not m.q_weight > 0:
            raise BundleInvariantError(f"modes[{k}].q_weight", "q-point weight must be positive")
        by_q.setdefault(m.q_index, []).append(k)
    total = 0.0
    for q, idx in sorted(by_q.items()):
        weights = {bundle.modes[k].q_weight for k in idx}
        if max(weights) - min(weights) > tol.weight_sum:
            raise BundleInvariantError(f"modes[q_index={q}].q_weight", "modes of one q-point carry different weights")
        total += bundle.modes[idx[0]].q_weight
        if len(idx) > 3 * n:
            raise BundleShapeError(f"modes[q_index={q}]", f"{len(idx)} modes exceed 3 x {n} atoms = {3 * n}")
        vecs = np.stack([bundle.modes[k].eigenvector.ravel() for k in idx])
        gram = vecs @ vecs.T
        err = np.max(np.abs(gram - np.eye(len(idx))))
        if err > tol.orthonormal:
            raise BundleInvariantError(f"modes[q_index={q}].evec",
                                       f"eigenvectors not orthonormal (max deviation {err:.3e})")
    if abs(total - 1.0) > tol.weight_sum:
        raise BundleInvariantError("modes.q_weight", f"q-point weights sum to {total:.9g}, expected 1")


# --------------------------------------------------------------------------
# tensor oracles


def dipolar_kernel(r: np.ndarray) -> np.ndarray:
    """(r^2 delta_ij - 3 r_i r_j) / r^5 for displacement vector(s) r."""
    r = np.asarray(r, dtype=float)
    r2 = np.sum(r * r, axis=-1)[..., None, None]
    outer = r[..., :, None] * r[..., None, :]
    return (r2 * np.eye(3) - 3.0 * outer) / r2 ** 2.5


def dipolar_kernel_gradient(r: np.ndarray) -> np.ndarray:
    """d/dr_k of the dipolar kernel, indexed [..., k, i, j]."""
    r = np.asarray(r, dtype=float)
    eye = np.eye(3)
    rn2 = np.sum(r * r, axis=-1)[..., None, None, None]
    rk = r[..., :, None, None]
    ri = r[..., None, :, None]
    rj = r[..., None, None, :]
    first = (2.0 * rk * eye[None] - 3.0 * eye[:, :, None] * rj - 3.0 * ri * eye[:, None, :]) / rn2 ** 2.5
    kernel = (rn2 * eye - 3.0 * ri * rj)
    return first - 5.0 * rk * kernel / rn2 ** 3.5


TensorOracle = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class PointDipoleOracle:
    """Closed-form tensors from two point spin carriers sitting on atoms.

    D = chi mu0 (g_e mu_B)^2 / (4 pi h) * K(R_b - R_a), with K the dipolar
    kernel. The hyperfine tensor at site I is the contact scalar times the
    identity plus the dipolar field of the point spin density at each
    carrier (a carrier's own density is skipped).
    """

    spin_sites: tuple[int, int]
    chi: float = 1.0
    spin_weights: tuple[float, float] = (1.0, 1.0)
    contact_mhz: tuple[float, ...] | None = None
    constants: PhysicalConstants = CONSTANTS

    def __post_init__(self):
        a, b = self.spin_sites
        if a == b:
            raise ValueError("spin carrier sites must be distinct")

    @property
    def zfs_prefactor(self) -> float:  # GHz angstrom^3
        c = self.constants
        return c.mu_0 / (4 * np.pi) * (c.g_e * c.mu_B) ** 2 / c.h * 1e21

    @property
    def hfi_prefactor(self) -> float:  # MHz angstrom^3, <S_z> = 1
        c = self.constants
        return c.mu_0 / (4 * np.pi) * c.g_e * c.g_I * c.mu_B * c.mu_N / c.h * 1e24

    def _separation(self, positions: np.ndarray) -> np.ndarray:
        a, b = self.spin_sites
        r = positions[b] - positions[a]
        if not np.linalg.norm(r) > 1e-12:
            raise ValueError("coincident spin carrier positions (r = 0 singularity)")
        return r

    def _carrier_vectors(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """r = R_s - R_I for each carrier s and site I, plus a validity mask."""
        carriers = positions[list(self.spin_sites)]
        r = carriers[:, None, :] - positions[None, :, :]
        mask = np.ones(r.shape[:2], dtype=bool)
        for s, site in enumerate(self.spin_sites):
            mask[s, site] = False
        r = np.where(mask[..., None], r, 1.0)
        if np.any(np.linalg.norm(r, axis=-1)[mask] < 1e-12):
            raise ValueError("atom coincides with a spin carrier (r = 0 singularity)")
        return r, mask

    def _contact(self, n: int) -> np.ndarray:
        if self.contact_mhz is None:
            return np.zeros(n)
        c = np.asarray(self.contact_mhz, dtype=float)
        return np.broadcast_to(c, (n,)).copy()

    def __call__(self, positions) -> tuple[np.ndarray, np.ndarray]:
        positions = np.asarray(positions, dtype=float)
        zfs = self.chi * self.zfs_prefactor * dipolar_kernel(self._separation(positions))
        r, mask = self._carrier_vectors(positions)
        w = np.asarray(self.spin_weights, dtype=float)[:, None, None, None]
        # (3 r r - r^2 delta) / r^5 = -kernel
        dip = -np.sum(np.where(mask[..., None, None], w * dipolar_kernel(r), 0.0), axis=0)
        hfi = self.hfi_prefactor * dip + self._contact(len(positions))[:, None, None] * np.eye(3)
        return zfs, hfi

    def analytic_gradients(self, positions) -> tuple[np.ndarray, np.ndarray]:
        positions = np.asarray(positions, dtype=float)
        n = len(positions)
        a, b = self.spin_sites
        dk = self.chi * self.zfs_prefactor * dipolar_kernel_gradient(self._separation(positions))
        zfs_grad = np.zeros((n, 3, 3, 3))
        zfs_grad[b] += dk
        zfs_grad[a] -= dk
        r, mask = self._carrier_vectors(positions)
        w = np.asarray(self.spin_weights, dtype=float)[:, None, None, None, None]
        # A_I = -c sum_s K(R_s - R_I)  =>  dA_I/dR_I = +c sum_s K'(R_s - R_I)
        dkr = np.where(mask[..., None, None, None], w * dipolar_kernel_gradient(r), 0.0)
        hfi_grad = self.hfi_prefactor * dkr.sum(axis=0)
        return zfs_grad, hfi_grad

    def describe(self) -> dict:
        out = {"kind": "point_dipole", "spin_sites": [int(s) for s in self.spin_sites],
               "chi": float(self.chi), "spin_weights": [float(w) for w in self.spin_weights]}
        if self.contact_mhz is not None:
            out["contact_mhz"] = [float(c) for c in np.atleast_1d(self.contact_mhz)]
        return out


class TabulatedOracle:
    """Tensors tabulated at the reference geometry and its single-atom +/-dx displacements.

    This is the shape of data a finite-difference electronic-structure run
    produces; any other geometry is rejected.
    """

    def __init__(self, reference_positions, dx: float, reference: tuple, table: dict,
                 atol: float = 1e-9):
        self.reference_positions = np.asarray(reference_positions, dtype=float)
        self.dx = float(dx)
        self.reference = (np.asarray(reference[0], float), np.asarray(reference[1], float))
        self.table = {k: (np.asarray(v[0], float), np.asarray(v[1], float)) for k, v in table.items()}
        self.atol = atol

    @classmethod
    def tabulate(cls, oracle: TensorOracle, positions, dx: float) -> "TabulatedOracle":
        positions = np.asarray(positions, dtype=float)
        table = {}
        for a in range(len(positions)):
            for j in range(3):
                for sign in (1, -1):
                    p = positions.copy()
                    p[a, j] += sign * dx
                    table[(a, j, sign)] = oracle(p)
        return cls(positions, dx, oracle(positions), table)

    def __call__(self, positions) -> tuple[np.ndarray, np.ndarray]:
        delta = np.asarray(positions, dtype=float) - self.reference_positions
        moved = np.argwhere(np.abs(delta) > self.atol)
        if len(moved) == 0:
            return self.reference
        if len(moved) == 1:
            a, j = (int(x) for x in moved[0])
            step = delta[a, j]
            sign = 1 if step > 0 else -1
            if abs(abs(step) - self.dx) <= self.atol and (a, j, sign) in self.table:
                return self.table[(a, j, sign)]
        raise KeyError("geometry not present in the tabulated oracle")

    def to_dict(self) -> dict:
        return {
            "reference_positions": self.reference_positions.tolist(),
            "dx": self.dx,
            "reference": {"zfs_ghz": self.reference[0].tolist(), "hfi_mhz": self.reference[1].tolist()},
            "entries": [
                {"atom": a, "direction": j, "sign": s, "zfs_ghz": v[0].tolist(), "hfi_mhz": v[1].tolist()}
                for (a, j, s), v in sorted(self.table.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabulatedOracle":
        table = {(int(e["atom"]), int(e["direction"]), int(e["sign"])): (e["zfs_ghz"], e["hfi_mhz"])
                 for e in data["entries"]}
        ref = data["reference"]
        return cls(data["reference_positions"], data["dx"], (ref["zfs_ghz"], ref["hfi_mhz"]), table)

    @classmethod
    def from_file(cls, path) -> "TabulatedOracle":
        return cls.from_dict(json.loads(Path(path).read_text()))


def oracle_from_meta(bundle: SystemBundle) -> PointDipoleOracle:
    spec = bundle.meta.oracle
    if not spec or spec.get("kind") != "point_dipole":
        raise BundleError("meta.oracle", "bundle carries no point-dipole oracle recipe")
    contact = spec.get("contact_mhz")
    return PointDipoleOracle(tuple(spec["spin_sites"]), spec.get("chi", 1.0),
                             tuple(spec.get("spin_weights", (1.0, 1.0))),
                             None if contact is None else tuple(contact))


# --------------------------------------------------------------------------
# finite differences


def finite_difference_gradients(oracle: TensorOracle, positions, dx: float = 1e-3,
                                workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the oracle tensors, one atom and direction at a time.

    Returns ``(zfs_grad, hfi_grad)`` with shape (n, 3, 3, 3); ``hfi_grad`` is
    the on-site derivative of each site's own tensor.
    """
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    positions = np.asarray(positions, dtype=float)
    n = len(positions)

    def column(task):
        a, j = task
        try:
            plus = positions.copy()
            plus[a, j] += dx
            minus = positions.copy()
            minus[a, j] -= dx
            zp, hp = oracle(plus)
            zm, hm = oracle(minus)
        except Exception as exc:
            raise GradientError(a, j, exc) from exc
        zp, zm, hp, hm = (np.asarray(x, dtype=float) for x in (zp, zm, hp, hm))
        return (zp - zm) / (2 * dx), (hp[a] - hm[a]) / (2 * dx)

    tasks = [(a, j) for a in range(n) for j in range(3)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(column, tasks))
    else:
        results = [column(t) for t in tasks]
    zfs_grad = np.zeros((n, 3, 3, 3))
    hfi_grad = np.zeros((n, 3, 3, 3))
    for (a, j), (zg, hg) in zip(tasks, results):
        zfs_grad[a, j] = zg
        hfi_grad[a, j] = hg
    return zfs_grad, hfi_grad


# --------------------------------------------------------------------------
# synthetic bundles


def diamond_cluster(n_atoms: int, lattice_constant: float = 3.567) -> np.ndarray:
    """The n_atoms diamond sites nearest a vacancy at the origin."""
    reps = 1
    while True:
        basis = np.array([[0, 0, 0], [0, .5, .5], [.5, 0, .5], [.5, .5, 0]])
        basis = np.vstack([basis, basis + 0.25])
        cells = np.array([(i, j, k) for i in range(-reps, reps + 1)
                          for j in range(-reps, reps + 1) for k in range(-reps, reps + 1)])
        pts = (cells[:, None, :] + basis[None]).reshape(-1, 3) * lattice_constant
        d = np.linalg.norm(pts, axis=1)
        keep = d > 1e-9
        pts, d = pts[keep], d[keep]
        if np.sum(d < reps * lattice_constant) >= n_atoms:
            break
        reps += 1
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], np.round(d, 9)))
    return pts[order[:n_atoms]]


def _rotation_to_z(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    z = np.array([0.0, 0.0, 1.0])
    c = float(v @ z)
    if c > 1 - 1e-15:
        return np.eye(3)
    if c < -1 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    k = np.cross(v, z)
    s = np.linalg.norm(k)
    k = k / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kx + (1 - c) * kx @ kx


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic point-dipole bundle.

    ``modes`` accepts ``frequencies_thz`` (explicit list), or ``n_modes`` with
    ``fmin_thz``/``fmax_thz``; ``translations`` prepends the three rigid
    translations at zero frequency. ``q_weights`` makes one independent random
    mode set per q-point.
    """

    n_atoms: int = 16
    lattice_constant: float = 3.567
    positions: Sequence[Sequence[float]] | None = None
    species: str = "C"
    mass: float = 12.011
    defect_site: Sequence[float] = (0.0, 0.0, 0.0)
    spin_sites: Sequence[int] | None = None
    align_axis: bool = True
    chi: float = 1.0
    spin_weights: Sequence[float] = (1.0, 1.0)
    contact_mhz: Sequence[float] | float | None = None
    modes: dict = field(default_factory=dict)
    q_weights: Sequence[float] = (1.0,)
    seed: int = 0
    provenance: str = "synthetic point-dipole bundle"

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**data)


def _synthetic_modes(spec: SyntheticSpec, masses: np.ndarray, rng: np.random.Generator) -> list[PhononMode]:
    n = len(masses)
    dim = 3 * n
    recipe = dict(spec.modes)
    translations = bool(recipe.get("translations", True))
    if "frequencies_thz" in recipe:
        freqs = np.asarray(recipe["frequencies_thz"], dtype=float)
    else:
        n_modes = int(recipe.get("n_modes", dim - (3 if translations else 0)))
        freqs = np.sort(rng.uniform(recipe.get("fmin_thz", 5.0), recipe.get("fmax_thz", 40.0), n_modes))
    n_trans = 3 if translations else 0
    if len(freqs) + n_trans > dim:
        raise ValueError(f"{len(freqs) + n_trans} modes requested but only {dim} degrees of freedom")
    weights = np.asarray(spec.q_weights, dtype=float)
    weights = weights / weights.sum()
    trans = np.zeros((n_trans, dim))
    for j in range(n_trans):
        v = np.zeros((n, 3))
        v[:, j] = np.sqrt(masses)
        trans[j] = v.ravel() / np.linalg.norm(v)
    modes = []
    for q, w in enumerate(weights):
        raw = rng.standard_normal((dim, len(freqs)))
        if n_trans:
            raw -= trans.T @ (trans @ raw)
        basis, r = np.linalg.qr(raw)
        basis = basis * np.sign(np.diag(r))
        for j in range(n_trans):
            modes.append(PhononMode(0.0, float(w), trans[j].reshape(n, 3), q))
        for f, v in zip(freqs, basis.T):
            modes.append(PhononMode(float(f), float(w), v.reshape(n, 3), q))
    return modes


def generate_synthetic(spec: SyntheticSpec | dict | None = None) -> SystemBundle:
    """Build a bundle whose tensors and gradients come from the point-dipole oracle."""
    if spec is None:
        spec = SyntheticSpec()
    elif isinstance(spec, dict):
        spec = SyntheticSpec.from_dict(spec)
    rng = np.random.default_rng(spec.seed)
    center = np.asarray(spec.defect_site, dtype=float)
    if spec.positions is not None:
        positions = np.asarray(spec.positions, dtype=float)
    else:
        positions = diamond_cluster(spec.n_atoms, spec.lattice_constant) + center
    n = len(positions)
    if n < 2:
        raise ValueError("a synthetic bundle needs at least two atoms")
    if spec.spin_sites is None:
        order = np.argsort(np.linalg.norm(positions - center, axis=1), kind="stable")
        sites = (int(order[0]), int(order[1]))
    else:
        sites = tuple(int(s) for s in spec.spin_sites)
    if len(sites) != 2 or sites[0] == sites[1]:
        raise ValueError(f"two distinct spin carrier sites required, got {sites}")
    sep = positions[sites[1]] - positions[sites[0]]
    if not np.linalg.norm(sep) > 1e-12:
        raise ValueError("coincident spin carrier positions (r = 0 singularity)")
    if spec.align_axis:
        rot = _rotation_to_z(sep)
        positions = (positions - center) @ rot.T + center

    contact = None
    if spec.contact_mhz is not None:
        contact = tuple(np.broadcast_to(np.asarray(spec.contact_mhz, dtype=float), (n,)).tolist())
    oracle = PointDipoleOracle(sites, float(spec.chi), tuple(float(w) for w in spec.spin_weights), contact)
    zfs, hfi = oracle(positions)
    zfs_grad, hfi_grad = oracle.analytic_gradients(positions)

    masses = np.full(n, float(spec.mass))
    atoms = tuple(
        AtomRecord(spec.species, float(masses[i]), tuple(positions[i].tolist()),
                   spin_active=(spec.species == "C" and i not in sites))
        for i in range(n)
    )
    modes = _synthetic_modes(spec, masses, rng)
    meta = BundleMeta(axis=(0.0, 0.0, 1.0), cell=tuple(tuple(r) for r in np.zeros((3, 3)).tolist()),
                      provenance=f"{spec.provenance} (seed {spec.seed})",
                      center=tuple(center.tolist()), oracle=oracle.describe())
    # canonical round trip so in-memory and on-disk bundles are identical
    return bundle_from_dict(json.loads(dumps_bundle(SystemBundle(
        atoms, zfs, zfs_grad, hfi, hfi_grad, tuple(modes), meta))))
