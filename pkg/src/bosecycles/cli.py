"""Command-line front door: config parsing, subcommands, CSV + manifest output.

Subcommands map one-to-one onto the science modules: ideal-cycles, odlro,
condensate, grand, pimc, cluster-check.  Every run validates its declarative
JSON config (unknown keys rejected), applies --override KEY=VAL flags (flags
win), and writes a manifest echoing the fully-resolved config plus a source
digest, so runs are reconstructible.  Exit codes: 0 success, 2 config error,
3 numeric-contract violation, 4 non-ergodic warning escalated under --strict.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .canonical import (build_table, condensate_fraction, cycle_densities,
                        cycle_spectrum, odlro_correlation, odlro_decomposition)
from .cluster import kp_condition, kp_integral_check, ratio_bound, truncated_log_z
from .errors import ConfigError, ContractError, NonErgodicWarning
from .grand import (critical_density, cycle_density_sum, density, free_energy,
                    pressure)
from .pimc import (MoveMix, PimcParams, Schedule, compare_cycle_histogram,
                   run_canonical_pimc)
from .potentials import ZeroPotential, potential_from_config
from .system import SimulationBox

SCHEMA_VERSION = 1

_MC_KEYS = {
    "sweeps": int, "equilibration": int, "beads_per_beta": int, "chains": int,
    "blocks": int, "window": int, "bridge_moves": int, "swap_moves": int,
    "wrap_moves": int, "sector_moves": int, "worm_constant": (int, float),
    "samples": int, "k_max": int,
}
_TOP_KEYS = {
    "ensemble": str, "box": dict, "beta": (int, float), "rho": (int, float),
    "mu": (int, float), "n_particles": int, "potential": dict,
    "cutoff_c": (int, float), "x_grid": list, "l_values": list,
    "mu_grid": list, "mc": dict, "seed": int, "out_dir": str,
}
_BOX_KEYS = {"dim": int, "side": (int, float)}


def _check_keys(mapping: dict, allowed: dict, where: str) -> None:
    for key, val in mapping.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if val is not None and not isinstance(val, allowed[key]):
            raise ConfigError(
                f"config key {where}{key!r} has type {type(val).__name__}, "
                f"expected {allowed[key]}")
        if isinstance(val, bool):  # bool is an int subclass; never valid here
            raise ConfigError(f"config key {where}{key!r} must not be boolean")


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, _TOP_KEYS, "")
    if "box" in cfg:
        _check_keys(cfg["box"], _BOX_KEYS, "box.")
    if "mc" in cfg:
        _check_keys(cfg["mc"], _MC_KEYS, "mc.")
    if "ensemble" in cfg and cfg["ensemble"] not in ("canonical", "grand"):
        raise ConfigError("ensemble must be 'canonical' or 'grand'")
    return cfg


def apply_override(cfg: dict, spec: str) -> None:
    """Apply 'dotted.path=value' onto the config; values parse as JSON."""
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} is not of the form KEY=VAL")
    path, raw = spec.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = path.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} crosses a non-object")
    node[parts[-1]] = value


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        node = cfg
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node or node[part] is None:
                raise ConfigError(f"missing required config key {key!r}")
            node = node[part]


def _box(cfg: dict) -> SimulationBox:
    _require(cfg, "box.dim", "box.side")
    try:
        return SimulationBox(int(cfg["box"]["dim"]), float(cfg["box"]["side"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _n_particles(cfg: dict, box: SimulationBox) -> int:
    if cfg.get("n_particles") is not None:
        return int(cfg["n_particles"])
    if cfg.get("rho") is not None:
        n = int(round(float(cfg["rho"]) * box.volume))
        if n < 1:
            raise ConfigError("rho * volume rounds to zero particles")
        return n
    raise ConfigError("need either rho or n_particles")


def source_digest() -> str:
    pkg = Path(__file__).parent
    h = hashlib.sha256()
    for path in sorted(pkg.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def _write_csv(path: Path, schema: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}.v{SCHEMA_VERSION}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def _write_manifest(out: Path, command: str, cfg: dict, outputs: list[str],
                    summary: dict) -> None:
    manifest = {
        "schema": f"bosecycles.manifest.v{SCHEMA_VERSION}",
        "command": command,
        "resolved_config": cfg,
        "code_version": {"package": __version__, "source_sha256": source_digest()},
        "outputs": outputs,
        "summary": summary,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    print(json.dumps({"resolved_config": cfg, "summary": summary},
                     indent=2, sort_keys=True, default=str))


def _parse_x(entry, dim: int) -> np.ndarray:
    if isinstance(entry, (int, float)):
        v = np.zeros(dim)
        v[0] = float(entry)
        return v
    v = np.asarray(entry, dtype=float)
    if v.shape != (dim,):
        raise ConfigError(f"x-grid entry {entry!r} is not a scalar or {dim}-vector")
    return v


# ------------------------------------------------------------- subcommands

def cmd_ideal_cycles(cfg: dict, out: Path) -> int:
    box = _box(cfg)
    _require(cfg, "beta")
    beta = float(cfg["beta"])
    n = _n_particles(cfg, box)
    c = float(cfg.get("cutoff_c", 1.0))
    table = build_table(box, beta, n)
    n_cut = min(int(np.ceil(c * box.side ** 2 / beta)), n)
    spec = cycle_spectrum(table, cutoff=n_cut)
    dens = spec.densities
    total = float(dens[1:].sum())
    if abs(total / table.rho - 1.0) > 1e-12:
        raise ContractError(
            f"cycle-density sum rule violated: {total} vs rho {table.rho}")
    rows = [{"n": k, "density": float(dens[k])} for k in range(1, n + 1)]
    _write_csv(out / "cycles.csv", "bosecycles.ideal-cycles", ["n", "density"], rows)
    summary = {"rho": table.rho, "n_particles": n, "n_cut": spec.cutoff,
               "rho_inf_estimate": spec.rho_inf_estimate,
               "density_sum": total}
    _write_manifest(out, "ideal-cycles", cfg, ["cycles.csv"], summary)
    return 0


def cmd_odlro(cfg: dict, out: Path) -> int:
    box = _box(cfg)
    _require(cfg, "beta", "x_grid")
    beta = float(cfg["beta"])
    n = _n_particles(cfg, box)
    c = float(cfg.get("cutoff_c", 1.0))
    table = build_table(box, beta, n)
    rows = []
    clamped = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for entry in cfg["x_grid"]:
            x = _parse_x(entry, box.dim)
            dec = odlro_decomposition(table, x, c)
            clamped = clamped or dec.cutoff_clamped
            rows.append({
                "abs_x": float(np.linalg.norm(x)),
                "sigma": dec.sigma,
                "finite_part": dec.finite_part,
                "rho_inf_estimate": dec.rho_inf_estimate,
                "residual": dec.residual,
                "n_cut": dec.n_cut,
            })
    for row in rows:
        if row["abs_x"] == 0.0 and abs(row["sigma"] / table.rho - 1.0) > 1e-12:
            raise ContractError("sigma(0) does not equal rho")
    _write_csv(out / "odlro.csv", "bosecycles.odlro",
               ["abs_x", "sigma", "finite_part", "rho_inf_estimate",
                "residual", "n_cut"], rows)
    summary = {"rho": table.rho, "n_particles": n, "cutoff_clamped": clamped}
    _write_manifest(out, "odlro", cfg, ["odlro.csv"], summary)
    return 0


def cmd_condensate(cfg: dict, out: Path) -> int:
    _require(cfg, "beta", "rho", "l_values", "box.dim")
    dim = int(cfg["box"]["dim"])
    beta = float(cfg["beta"])
    rho = float(cfg["rho"])
    rho_c = critical_density(beta, dim)
    reference = max(0.0, rho - rho_c) if np.isfinite(rho_c) else 0.0
    rows = []
    for side in cfg["l_values"]:
        box = SimulationBox(dim, float(side))
        n = int(round(rho * box.volume))
        if n < 1:
            raise ConfigError(f"rho*V < 1 at L={side}")
        table = build_table(box, beta, n)
        frac = condensate_fraction(table)
        if not 0.0 <= frac <= table.rho * (1.0 + 1e-12):
            raise ContractError(f"condensate fraction {frac} outside [0, rho]")
        rows.append({"side": float(side), "n_particles": n,
                     "fraction": frac, "reference": reference})
    _write_csv(out / "condensate.csv", "bosecycles.condensate",
               ["side", "n_particles", "fraction", "reference"], rows)
    _write_manifest(out, "condensate", cfg, ["condensate.csv"],
                    {"rho": rho, "rho_c": rho_c, "reference": reference})
    return 0


def cmd_grand(cfg: dict, out: Path) -> int:
    _require(cfg, "beta", "mu_grid", "box.dim")
    dim = int(cfg["box"]["dim"])
    beta = float(cfg["beta"])
    rows = []
    prev_rho = -np.inf
    for mu in cfg["mu_grid"]:
        mu = float(mu)
        if mu >= 0:
            raise ConfigError("mu grid must be strictly negative")
        p = pressure(beta, mu, dim)
        rho = density(beta, mu, dim)
        csum = cycle_density_sum(beta, mu, dim)
        if abs(csum - rho) > 1e-10 * max(1.0, rho):
            raise ContractError(f"cycle-density sum {csum} != density {rho}")
        if rho <= prev_rho:
            raise ContractError("density is not increasing along the mu grid")
        prev_rho = rho
        rows.append({"mu": mu, "pressure": p, "density": rho,
                     "cycle_density_sum": csum,
                     "free_energy": rho * mu - p / beta})
    _write_csv(out / "grand.csv", "bosecycles.grand",
               ["mu", "pressure", "density", "cycle_density_sum", "free_energy"],
               rows)
    _write_manifest(out, "grand", cfg, ["grand.csv"],
                    {"rho_c": critical_density(beta, dim), "dim": dim})
    return 0


def cmd_pimc(cfg: dict, out: Path, resume: str | None, strict: bool) -> int:
    box = _box(cfg)
    _require(cfg, "beta", "mc.sweeps", "mc.equilibration")
    beta = float(cfg["beta"])
    n = _n_particles(cfg, box)
    mc = cfg["mc"]
    potential = potential_from_config(cfg.get("potential", {"kind": "zero"}))
    params = PimcParams(box, beta, n, int(mc.get("beads_per_beta", 16)))
    mix = MoveMix(bridge=mc.get("bridge_moves"), swap=mc.get("swap_moves"),
                  wrap=mc.get("wrap_moves"), window=mc.get("window"))
    schedule = Schedule(sweeps=int(mc["sweeps"]),
                        equilibration=int(mc["equilibration"]),
                        chains=int(mc.get("chains", 1)),
                        blocks=int(mc.get("blocks", 32)), move_mix=mix)
    seed = int(cfg.get("seed", 0))
    ck_path = out / "checkpoint.json"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        hist = run_canonical_pimc(params, potential, schedule, seed,
                                  checkpoint_path=ck_path, resume_from=resume)
    non_ergodic = any(issubclass(w.category, NonErgodicWarning) for w in caught) \
        or "non_ergodic" in hist.meta.get("warnings", [])

    exact = None
    if potential.is_zero:
        exact = cycle_densities(build_table(box, beta, n))
    rows = []
    for k in range(1, n + 1):
        row = {"n": k, "count_mean": float(hist.counts_mean[k]),
               "density": float(hist.densities[k]),
               "density_err": float(hist.density_err[k])}
        if exact is not None:
            row["exact_density"] = float(exact[k])
        rows.append(row)
    fields = ["n", "count_mean", "density", "density_err"]
    if exact is not None:
        fields.append("exact_density")
    _write_csv(out / "histogram.csv", "bosecycles.pimc", fields, rows)
    acc_rows = [{"move": k, "accepted": v[0], "attempted": v[1],
                 "rate": (v[0] / v[1] if v[1] else 0.0)}
                for k, v in hist.acceptance.items()]
    _write_csv(out / "acceptance.csv", "bosecycles.pimc-acceptance",
               ["move", "accepted", "attempted", "rate"], acc_rows)
    summary = {"acceptance": hist.meta["acceptance_rates"],
               "sweeps": hist.n_sweeps, "non_ergodic": non_ergodic}
    if exact is not None:
        rep = compare_cycle_histogram(hist, exact)
        summary["chi2"] = {"chi2": rep.chi2, "dof": rep.dof, "p_value": rep.p_value}
    _write_manifest(out, "pimc", cfg,
                    ["histogram.csv", "acceptance.csv", "checkpoint.json"], summary)
    if non_ergodic and strict:
        print("non-ergodic warning escalated under --strict", file=sys.stderr)
        return 4
    return 0


def cmd_cluster_check(cfg: dict, out: Path) -> int:
    _require(cfg, "beta", "mu", "box.dim", "potential")
    dim = int(cfg["box"]["dim"])
    beta = float(cfg["beta"])
    mu = float(cfg["mu"])
    mc = cfg.get("mc", {})
    potential = potential_from_config(cfg["potential"])
    seed = int(cfg.get("seed", 0))
    samples = int(mc.get("samples", 2000))
    try:
        rep = kp_condition(beta, mu, potential, dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report: dict = {
        "lhs": rep.lhs, "minus_mu": -mu, "holds": rep.holds,
        "series_divergent": rep.series_divergent,
        "potential_integrable": rep.potential_integrable,
        "u_integral": rep.u_integral,
        "threshold_mu": (-rep.lhs if np.isfinite(rep.lhs) else None),
    }
    if rep.potential_integrable:
        report["u_integral_quadrature"] = potential.integral_quadrature(dim)
    bracket = ratio_bound(beta, mu, potential, dim, omega_winding=1)
    report["ratio_bracket_n1"] = list(bracket) if bracket is not None else None
    if rep.holds or potential.is_zero:
        tz = truncated_log_z(beta, mu, potential, dim,
                             k_max=int(mc.get("k_max", 2)),
                             mc_samples=samples, seed=seed)
        report["truncated_log_z"] = {
            "k1": tz.k1, "k1_err": tz.k1_err, "k2": tz.k2, "k2_err": tz.k2_err,
            "total": tz.total}
        if potential.is_zero:
            p = pressure(beta, mu, dim)
            if abs(tz.total - p) > 1e-10 * max(1.0, abs(p)):
                raise ContractError("zero-potential log Z does not match the "
                                    "ideal pressure series")
        if not potential.is_zero and rep.holds:
            kp = kp_integral_check(beta, mu, potential, dim, omega_winding=1,
                                   mc_samples=samples, seed=seed)
            report["kp_integral"] = {
                "sharp": kp.sharp, "sharp_err": kp.sharp_err,
                "certified": kp.certified, "budget": kp.budget,
                "certified_within_budget": kp.certified_within_budget,
                "high_variance": kp.high_variance}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    _write_manifest(out, "cluster-check", cfg, ["report.json"], report)
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bosecycles",
        description="Feynman-cycle statistics and ODLRO in the Bose gas")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--override", action="append", default=[],
                        metavar="KEY=VAL", help="config override (repeatable)")
    common.add_argument("--strict", action="store_true",
                        help="escalate non-ergodic warnings to exit code 4")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ideal-cycles", "odlro", "condensate", "grand", "cluster-check"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("pimc", parents=[common])
    p.add_argument("--resume", default=None, help="checkpoint file to resume from")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        for spec in args.override:
            apply_override(cfg, spec)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out_dir"] = args.out
        validate_config(cfg)
        _require(cfg, "out_dir")
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "ideal-cycles":
            return cmd_ideal_cycles(cfg, out)
        if args.command == "odlro":
            return cmd_odlro(cfg, out)
        if args.command == "condensate":
            return cmd_condensate(cfg, out)
        if args.command == "grand":
            return cmd_grand(cfg, out)
        if args.command == "pimc":
            return cmd_pimc(cfg, out, getattr(args, "resume", None), args.strict)
        if args.command == "cluster-check":
            return cmd_cluster_check(cfg, out)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"numeric contract violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
