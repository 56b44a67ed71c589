"""Command-line driver: synthetic bundles, validation, gradients and dephasing sweeps.

Every output file opens with a provenance header (config hash, seed, package
version, bundle provenance). CSV files carry it as ``#`` comment lines, JSON
files as a leading ``provenance`` object. Nothing time-dependent is written,
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bath import DEFAULT_CT
from .dephase import (SEQUENCES, aggregate_report, cumulant_g, dephasing_function, disorder_ensemble,
                      pure_dephasing, resolve_contributions)
from .fluct import ChannelError, GridError
from .ingest import (BundleError, GradientError, TabulatedOracle, bundle_from_dict, bundle_to_dict,
                     dumps_bundle, finite_difference_gradients, generate_synthetic, load_bundle,
                     oracle_from_meta)

OUT_ENV = "NVDEPHASE_OUT"
DEFAULT_CONFIGS = {"sp-nu": 128, "sp-nu-ph": 32}
REQUIRED = {
    "pure": ("zfs_grad_ghz_per_ang", "modes"),
    "resolve": ("zfs_grad_ghz_per_ang", "modes"),
    "sp-nu": ("hfi_mhz",),
    "sp-nu-ph": ("hfi_mhz", "hfi_grad_mhz_per_ang", "modes"),
}
# exit codes; argparse usage errors also exit 2
OK, FLAGGED, FAILED = 0, 1, 2


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    bundle: str | None = None
    bundle_sha256: str | None = None
    channel: str | None = None
    temperatures: list[float] = field(default_factory=list)
    b_field: float = 0.0  # gauss
    axis: list[float] | None = None
    concentrations: list[float] = field(default_factory=list)
    n_configs: int | None = None
    seed: int = 0
    sequence: str = "ramsey"
    dt: float | None = None
    t_max: float | None = None
    c_t: float = DEFAULT_CT
    t1: float | None = None
    by: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sequence not in SEQUENCES:
            raise CliError(f"sequence must be one of {SEQUENCES}")
        for name in ("temperatures", "concentrations"):
            if getattr(self, name) is not None and not isinstance(getattr(self, name), list):
                raise CliError(f"{name} must be a list")

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# --------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12e}"
    return str(x)


def header_lines(cfg: RunConfig, provenance: str) -> list[str]:
    return [
        f"nvdephase {__version__}",
        f"command: {cfg.command}",
        f"config_sha256: {cfg.digest()}",
        f"seed: {cfg.seed}",
        f"bundle_provenance: {provenance}",
    ]


def write_csv(path: Path, cfg: RunConfig, provenance: str, columns: list[str], rows: list[list]) -> Path:
    buf = io.StringIO()
    for line in header_lines(cfg, provenance):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, cfg: RunConfig, provenance: str, body: dict) -> Path:
    doc = {"provenance": {"version": __version__, "command": cfg.command, "config_sha256": cfg.digest(),
                          "seed": cfg.seed, "bundle_provenance": provenance, "config": asdict(cfg)}}
    doc.update(_jsonable(body))
    path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")
    return path


# --------------------------------------------------------------------------
# helpers


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _load(path: str):
    data = Path(path).read_bytes()
    return load_bundle(data), hashlib.sha256(data).hexdigest()


def _require(bundle, key: str) -> None:
    missing = [b for b in REQUIRED[key] if b in bundle.missing]
    if missing:
        raise CliError(f"bundle is missing required block(s): {', '.join(missing)}")


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _field_vector(bundle, magnitude: float, axis) -> list[float]:
    a = np.asarray(axis if axis is not None else bundle.meta.axis, dtype=float)
    norm = np.linalg.norm(a)
    if not norm > 0:
        raise CliError("field axis must be a nonzero vector")
    return (magnitude * a / norm).tolist()


def _base_config(args, command: str, bundle_sha: str | None) -> dict:
    return dict(command=command, bundle=Path(args.bundle).name if getattr(args, "bundle", None) else None,
                bundle_sha256=bundle_sha, seed=getattr(args, "seed", 0), dt=getattr(args, "dt", None),
                t_max=getattr(args, "tmax", None))


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args) -> int:
    spec = json.loads(Path(args.spec).read_text()) if args.spec else {}
    if args.seed is not None:
        spec["seed"] = args.seed
    bundle = generate_synthetic(spec)
    out = _outdir(args)
    name = args.name
    text = dumps_bundle(bundle)
    (out / f"{name}.json").write_text(text)
    cfg = RunConfig("gen-synthetic", bundle=f"{name}.json",
                    bundle_sha256=hashlib.sha256(text.encode()).hexdigest(),
                    seed=int(spec.get("seed", 0)), extra={"spec": spec})
    sidecar = {"zfs_grad_ghz_per_ang": bundle.zfs_grad, "hfi_grad_mhz_per_ang": bundle.hfi_grad,
               "oracle": bundle.meta.oracle}
    write_json(out / f"{name}.gradients.json", cfg, bundle.meta.provenance, sidecar)
    print(f"wrote {out / (name + '.json')} ({bundle.n_atoms} atoms, {len(bundle.modes)} modes)")
    return OK


def cmd_validate(args) -> int:
    bundle, _ = _load(args.bundle)
    missing = bundle.missing
    print(f"{args.bundle}: valid ({bundle.n_atoms} atoms, {len(bundle.modes)} modes)")
    if missing:
        print(f"optional blocks absent: {', '.join(missing)}")
    return OK


def cmd_gradients(args) -> int:
    bundle, sha = _load(args.bundle)
    oracle = TabulatedOracle.from_file(args.oracle) if args.oracle else oracle_from_meta(bundle)
    zfs_grad, hfi_grad = finite_difference_gradients(oracle, bundle.positions, args.dx, args.workers)
    data = bundle_to_dict(bundle)
    data["zfs_grad_ghz_per_ang"] = zfs_grad.tolist()
    data["hfi_grad_mhz_per_ang"] = hfi_grad.tolist()
    updated = bundle_from_dict(data)
    out = _outdir(args)
    target = out / (args.name or f"{Path(args.bundle).stem}.fd.json")
    target.write_text(dumps_bundle(updated))
    cfg = RunConfig("gradients", **{k: v for k, v in _base_config(args, "gradients", sha).items()
                                    if k != "command"}, extra={"dx": args.dx})
    rows = []
    if bundle.zfs_grad is not None:
        rows.append(["zfs_grad", _rel_err(zfs_grad, bundle.zfs_grad)])
    if bundle.hfi_grad is not None:
        rows.append(["hfi_grad", _rel_err(hfi_grad, bundle.hfi_grad)])
    write_csv(out / "gradient_check.csv", cfg, bundle.meta.provenance, ["block", "max_rel_error"], rows)
    print(f"wrote {target}")
    return OK


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a - b)))


def cmd_pure(args) -> int:
    bundle, sha = _load(args.bundle)
    _require(bundle, "pure")
    cfg = RunConfig(**_base_config(args, "pure", sha), temperatures=args.temps)
    out = _outdir(args)
    prov = bundle.meta.provenance
    rows, results, first_corr = [], [], None
    for T in args.temps:
        res, corr = pure_dephasing(bundle, T, dt=args.dt, t_max=args.tmax)
        if first_corr is None:
            first_corr = (res, corr)
        results.append(res)
        rows.append([T, res.gamma_inverse, res.lower, res.upper, res.delta_sq, res.tau_c, res.regime, res.status])
    write_csv(out / "rates.csv", cfg, prov,
              ["T", "gamma_inv_plain", "gamma_inv_lower", "gamma_inv_upper", "delta_sq", "tau_c", "regime",
               "status"], rows)
    res, corr = first_corr
    write_csv(out / "correlation.csv", cfg, prov, ["t", "C"], [[t, c] for t, c in zip(corr.times, corr.values)])
    if res.delta_sq > 0:
        d = dephasing_function(cumulant_g(res.delta_sq, res.tau_c, corr.times))
    else:
        d = np.ones_like(corr.times)
    write_csv(out / "dephasing.csv", cfg, prov, ["t", "D"], [[t, v] for t, v in zip(corr.times, d)])
    report = aggregate_report(results[:1], t1=args.t1, sequence=args.sequence)
    write_json(out / "pure_summary.json", cfg, prov, {
        "channel": "sp-ph", "designated_temperature": args.temps[0], "report": report,
        "rows": [dict(T=r.temperature, gamma_inverse=r.gamma_inverse, regime=r.regime, status=r.status)
                 for r in results]})
    return _exit_status([r.status for r in results])


def cmd_disorder(args) -> int:
    bundle, sha = _load(args.bundle)
    channel = args.channel or "sp-nu"
    if channel not in DEFAULT_CONFIGS:
        raise CliError(f"disorder channel must be sp-nu or sp-nu-ph, got {channel}")
    _require(bundle, channel)
    n_configs = args.configs or DEFAULT_CONFIGS[channel]
    temps = args.temps or [0.0]
    b_vec = _field_vector(bundle, args.bfield, args.axis)
    cfg = RunConfig(**_base_config(args, "disorder", sha), channel=channel, temperatures=temps,
                    b_field=args.bfield, axis=args.axis, concentrations=args.concentrations,
                    n_configs=n_configs, c_t=args.ct, extra={"orientation": args.orientation})
    rows, results = [], []
    for T in temps:
        for c in args.concentrations:
            r = disorder_ensemble(bundle, channel, c, b_vec, T, n_configs, args.seed, args.ct,
                                  args.orientation, dt=args.dt, t_max=args.tmax, workers=args.workers)
            e = r.ensemble
            results.append(r)
            rows.append([c, args.bfield, T, r.gamma_inverse, r.lower, r.upper, e.mean, e.std, e.sem,
                         e.rate_mean, e.rate_sem, e.n_finite, e.n_configs, args.seed, r.regime, r.status])
    out = _outdir(args)
    prov = bundle.meta.provenance
    write_csv(out / "ensemble.csv", cfg, prov,
              ["concentration", "b_field", "T", "gamma_inv", "gamma_inv_lower", "gamma_inv_upper",
               "config_mean_gamma_inv", "config_std_gamma_inv", "config_sem_gamma_inv", "config_mean_rate",
               "config_sem_rate", "n_finite",
               "n_configs", "seed", "regime", "status"], rows)
    report = aggregate_report(results[:1], t1=args.t1, sequence=args.sequence)
    write_json(out / f"{channel}_summary.json", cfg, prov, {
        "channel": channel, "report": report,
        "rows": [dict(concentration=r.extra["concentration"], T=r.temperature, gamma_inverse=r.gamma_inverse,
                      std=r.ensemble.std, status=r.status) for r in results]})
    return _exit_status([r.status for r in results])


def cmd_resolve(args) -> int:
    bundle, sha = _load(args.bundle)
    _require(bundle, "resolve")
    by = args.by or "atom"
    T = args.temps[0] if args.temps else 300.0
    cfg = RunConfig(**_base_config(args, "resolve", sha), temperatures=[T], by=by,
                    extra={"shell_radius": args.shell})
    rows = resolve_contributions(bundle, by, T, dt=args.dt, t_max=args.tmax, shell_radius=args.shell,
                                 workers=args.workers)
    out = _outdir(args)
    write_csv(out / "resolved.csv", cfg, bundle.meta.provenance,
              ["index", "distance_or_frequency", "gamma_inv", "delta_sq", "localization", "status"],
              [[r.index, r.coordinate, r.gamma_inverse, r.delta_sq, r.localization, r.status] for r in rows])
    return _exit_status([r.status for r in rows])


def cmd_report(args) -> int:
    paths = [Path(p) for p in args.summaries]
    if not paths:
        src = Path(args.out or os.environ.get(OUT_ENV) or ".")
        paths = sorted(src.glob("*_summary.json"))
    if not paths:
        raise CliError("no *_summary.json files to aggregate")
    entries, provs = [], []
    for p in paths:
        doc = json.loads(p.read_text())
        for ch in doc["report"]["channels"]:
            gi = ch["gamma_inverse"]
            entries.append({"channel": ch["channel"], "gamma_inverse": float(gi)})
        provs.append(doc["provenance"]["bundle_provenance"])
    seed = json.loads(paths[0].read_text())["provenance"]["seed"]
    cfg = RunConfig("report", seed=seed, sequence=args.sequence, t1=args.t1,
                    extra={"summaries": [p.name for p in paths]})
    report = aggregate_report(entries, t1=args.t1, sequence=args.sequence)
    out = _outdir(args)
    write_json(out / "report.json", cfg, "; ".join(sorted(set(provs))), report)
    print(f"T2 = {fmt(report['t2'])} s ({args.sequence})")
    return OK


def _exit_status(statuses) -> int:
    bad = [s for s in statuses if s not in ("ok", "no dephasing")]
    if bad:
        print(f"{len(bad)} row(s) flagged: {sorted(set(bad))}", file=sys.stderr)
        return FLAGGED
    return OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvdephase", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bundle=True):
        if bundle:
            sp.add_argument("--bundle", required=True, help="system bundle (JSON)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--workers", type=int, default=None, help="threads for per-unit work")

    def grid(sp):
        sp.add_argument("--dt", type=float, default=None, help="time step (s)")
        sp.add_argument("--tmax", type=float, default=None, help="grid length (s)")

    def summary(sp):
        sp.add_argument("--sequence", choices=SEQUENCES, default="ramsey")
        sp.add_argument("--t1", type=float, default=None, help="T1 (s) for the relaxation term")

    sp = sub.add_parser("gen-synthetic", help="write a synthetic point-dipole bundle")
    sp.add_argument("spec", nargs="?", help="JSON spec file (defaults when omitted)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--name", default="bundle", help="output file stem")
    common(sp, bundle=False)
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("validate", help="parse and check a bundle")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gradients", help="finite-difference tensor gradients from an oracle")
    common(sp)
    sp.add_argument("--oracle", help="tabulated oracle JSON (default: the bundle's meta.oracle recipe)")
    sp.add_argument("--dx", type=float, default=1e-3, help="displacement (angstrom)")
    sp.add_argument("--name", default=None, help="output bundle file name")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradients)

    sp = sub.add_parser("pure", help="spin-phonon pure dephasing over temperatures")
    common(sp)
    grid(sp)
    summary(sp)
    sp.add_argument("--temps", type=_floats, required=True, help="temperatures (K), comma separated")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_pure)

    sp = sub.add_parser("disorder", help="nuclear-spin disorder ensembles")
    common(sp)
    grid(sp)
    summary(sp)
    sp.add_argument("--channel", choices=tuple(DEFAULT_CONFIGS), default="sp-nu")
    sp.add_argument("--concentrations", type=_floats, required=True, help="13C fractions, comma separated")
    sp.add_argument("--bfield", type=float, default=0.0, help="field magnitude (G)")
    sp.add_argument("--axis", type=_floats, default=None, help="field direction (default: defect axis)")
    sp.add_argument("--temps", type=_floats, default=None, help="temperatures (K)")
    sp.add_argument("--configs", type=int, default=None, help="configurations per point")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ct", type=float, default=DEFAULT_CT, help="orientation width (rad/K)")
    sp.add_argument("--orientation", choices=("thermal", "isotropic"), default=None)
    sp.set_defaults(func=cmd_disorder)

    sp = sub.add_parser("resolve", help="atom- or mode-resolved pure dephasing")
    common(sp)
    grid(sp)
    sp.add_argument("--by", choices=("atom", "mode"), default="atom")
    sp.add_argument("--temps", type=_floats, default=None, help="temperature (K); first value used")
    sp.add_argument("--shell", type=float, default=3.0, help="localization shell radius (angstrom)")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_resolve)

    sp = sub.add_parser("report", help="combine *_summary.json files into report.json")
    sp.add_argument("summaries", nargs="*", help="summary files (default: all in the output directory)")
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    summary(sp)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "axis", None) is not None and len(args.axis) != 3:
        parser.error("--axis needs three components")
    try:
        return args.func(args)
    except (CliError, BundleError, ChannelError, GridError, GradientError, ValueError, KeyError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
