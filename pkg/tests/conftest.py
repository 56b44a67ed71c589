import numpy as np
import pytest

from nvdephase.ingest import bundle_from_dict, bundle_to_dict, generate_synthetic


@pytest.fixture(scope="session")
def small_bundle():
    return generate_synthetic({"n_atoms": 16, "seed": 1})


@pytest.fixture(scope="session")
def bath_bundle():
    return generate_synthetic({"n_atoms": 48, "seed": 3, "modes": {"n_modes": 6}})


def make_bundle(positions, *, masses=None, zfs=None, zfs_grad=None, hfi=None, hfi_grad=None,
                modes=(), spin_active=None, provenance="test bundle"):
    """Hand-built bundle dict -> validated SystemBundle.

    ``modes`` is a list of (freq_thz, evec) or (freq_thz, evec, q_weight).
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    masses = np.full(n, 12.011) if masses is None else np.asarray(masses, dtype=float)
    active = [True] * n if spin_active is None else list(spin_active)
    data = {
        "atoms": [{"species": "C", "mass_amu": float(m), "pos_ang": p.tolist(), "spin_active": bool(a)}
                  for m, p, a in zip(masses, positions, active)],
        "zfs_ghz": (np.zeros((3, 3)) if zfs is None else np.asarray(zfs)).tolist(),
        "meta": {"axis": [0, 0, 1], "provenance": provenance},
    }
    if zfs_grad is not None:
        data["zfs_grad_ghz_per_ang"] = np.asarray(zfs_grad).tolist()
    if hfi is not None:
        data["hfi_mhz"] = np.asarray(hfi).tolist()
    if hfi_grad is not None:
        data["hfi_grad_mhz_per_ang"] = np.asarray(hfi_grad).tolist()
    if modes:
        data["modes"] = [{"freq_thz": float(m[0]), "q_weight": float(m[2]) if len(m) > 2 else 1.0,
                          "evec": np.asarray(m[1]).tolist()} for m in modes]
    return bundle_from_dict(data)


def with_blocks(bundle, **blocks):
    """Copy of ``bundle`` with dict-level blocks replaced (None removes a block)."""
    data = bundle_to_dict(bundle)
    for k, v in blocks.items():
        if v is None:
            data.pop(k, None)
        else:
            data[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return bundle_from_dict(data)


def random_traceless(rng, scale=1.0):
    m = rng.standard_normal((3, 3)) * scale
    m = (m + m.T) / 2
    return m - np.trace(m) / 3 * np.eye(3)
