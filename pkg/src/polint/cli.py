"""Command-line experiment runner.

Subcommands: ``run`` (one experiment), ``sweep`` (dt or theta sweep),
``stability`` (von Neumann root scan), ``list-presets`` and ``study``
(the full figure-feeding bundle). See the README for output schemas.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .experiments import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    execute_run,
    execute_study,
    execute_sweep,
    preset_config,
)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc


def _load_config(args) -> tuple[ExperimentConfig, str | None]:
    overrides = {
        "theta": args.theta,
        "dt": args.dt,
        "t_end": getattr(args, "t_end", None),
        "k": getattr(args, "k", None),
    }
    if args.preset:
        return preset_config(args.preset, **overrides), args.preset
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        data = {k: v for k, v in overrides.items() if v is not None}
        if data:
            merged = {**cfg.__dict__, **data}
            cfg = ExperimentConfig.from_dict(merged)
        return cfg, None
    raise ConfigError("either --preset or --config is required")


def cmd_run(args) -> int:
    cfg, preset = _load_config(args)
    summary = execute_run(cfg, args.out, preset=preset)
    status = summary["status"]
    print(f"status: {status}")
    if summary["blowup"]["flagged"]:
        print(f"blow-up flagged at step {summary['blowup']['step']}")
    cons = summary["conservation"]
    if cons["H_rel_max_dev"] is not None:
        print(f"max relative H deviation: {cons['H_rel_max_dev']:.3e}")
    if cons["polarised_H_rel_max_dev"] is not None:
        print(
            "max relative polarised-H deviation: "
            f"{cons['polarised_H_rel_max_dev']:.3e}"
        )
    print(f"artifacts in {args.out}")
    return 0 if status in ("completed", "blowup") else 1


def cmd_sweep(args) -> int:
    cfg, preset = _load_config(args)
    if (args.dt_list is None) == (args.theta_list is None):
        raise ConfigError("exactly one of --dt-list or --theta-list is required")
    param = "dt" if args.dt_list is not None else "theta"
    values = args.dt_list if param == "dt" else args.theta_list
    summary = execute_sweep(cfg, param, values, args.out, preset=preset)
    print(f"{len(values)} rows written to {args.out}/sweep.csv")
    if summary.get("endpoint_energy_slope") is not None:
        print(f"endpoint energy-error slope: {summary['endpoint_energy_slope']:.3f}")
    return 1 if summary["_all_failed"] else 0


def cmd_stability(args) -> int:
    taus = np.linspace(-args.tau_max, args.tau_max, args.samples)
    taus = taus[taus != 0.0]
    report = analysis.scan_stability(args.theta, taus)
    max_mod = float(np.max(report.root_moduli))
    print(f"theta = {args.theta}: max |zeta| = {max_mod:.12f}")
    print(f"stable (<= 1 + 1e-12): {report.stable}")
    if args.out:
        lines = ["tau,root_modulus_1,root_modulus_2"]
        for tau, (m1, m2) in zip(report.tau_samples, report.root_moduli):
            lines.append(f"{tau!r},{m1!r},{m2!r}")
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"samples written to {args.out}")
    if args.grid_n and args.grid_dt:
        from .grid import Grid1D

        grid = Grid1D(args.grid_n, args.grid_length / args.grid_n)
        tau_max = analysis.airy_tau_max(grid, args.grid_dt)
        print(f"discrete tau_max = {tau_max:.4f}")
        print(f"stability threshold theta >= {analysis.stability_threshold(tau_max):.6f}")
    return 0


def cmd_list_presets(_args) -> int:
    width = max(len(name) for name in PRESETS)
    for name in sorted(PRESETS):
        cfg = PRESETS[name]
        desc = ", ".join(
            f"{k}={v}" for k, v in cfg.items() if k in ("equation", "scheme", "dt", "t_end", "theta", "p")
        )
        print(f"{name:<{width}}  {desc}")
    return 0


def cmd_study(args) -> int:
    manifest = execute_study(args.out, fast=args.fast)
    print(f"study manifest: {Path(args.out) / 'study.json'}")
    print(json.dumps(manifest["sweeps"], indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polint",
        description="Conservative AVF / polarised-AVF integrators for "
        "polynomial Hamiltonian PDEs on periodic grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--preset", help="named preset (see list-presets)")
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--theta", type=float, help="polarisation blend weight")
        p.add_argument("--dt", type=float, help="time step override")
        p.add_argument("--t-end", dest="t_end", type=float, help="final time override")
        p.add_argument("--k", type=int, help="number of polarisation slots")
        if with_out:
            p.add_argument("--out", required=True, help="output directory")

    p_run = sub.add_parser("run", help="run one experiment")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a dt or theta sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--dt-list", type=_float_list, help="comma-separated dt values")
    p_sweep.add_argument(
        "--theta-list", type=_float_list, help="comma-separated theta values"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_stab = sub.add_parser("stability", help="von Neumann root scan")
    p_stab.add_argument("--theta", type=float, required=True)
    p_stab.add_argument("--tau-max", type=float, default=1e3)
    p_stab.add_argument("--samples", type=int, default=1001)
    p_stab.add_argument("--out", help="optional CSV output path")
    p_stab.add_argument("--grid-n", type=int, help="grid size for discrete tau_max")
    p_stab.add_argument("--grid-dt", type=float, help="time step for discrete tau_max")
    p_stab.add_argument("--grid-length", type=float, default=2 * np.pi)
    p_stab.set_defaults(func=cmd_stability)

    p_list = sub.add_parser("list-presets", help="list available presets")
    p_list.set_defaults(func=cmd_list_presets)

    p_study = sub.add_parser(
        "study", help="run the full experiment bundle for figure rendering"
    )
    p_study.add_argument("--out", required=True)
    p_study.add_argument(
        "--fast", action="store_true", help="scaled-down runs for smoke tests"
    )
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
