"""Command-line entry points.

Subcommands: simulate, sweep, lockcheck, afc-plot, calibrate.  Configs are
JSON scenario documents; ``--config`` accepts a file path or the name of a
bundled scenario.  Failures exit nonzero after printing a one-line JSON
error object, so scripts can parse outcomes either way.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .calibrate import CalibrationError, calibrate_rate, sweep, sweep_csv
from .config import (
    ScenarioError,
    bundled_scenarios,
    load_bundled_scenario,
    load_scenario_file,
    scenario_to_json,
)
from .lockchain import simulate_lock_run
from .memory import prepare_afc
from .reporting import run_scenario


def _load_config(spec: str):
    if os.path.exists(spec):
        return load_scenario_file(spec)
    try:
        return load_bundled_scenario(spec)
    except FileNotFoundError:
        raise ScenarioError("--config", f"no such file or bundled scenario: {spec!r}; "
                            f"bundled: {', '.join(bundled_scenarios())}")


def _write(out_dir: str, name: str, text: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_scenario(cfg, out_dir=args.out, workers=args.workers)
    print(report.to_json())
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    rows = sweep(cfg, args.param, values, workers=args.workers)
    csv_text = sweep_csv(rows)
    if args.out:
        _write(args.out, "sweep.csv", csv_text)
    print(csv_text, end="")
    return 0


def _cmd_lockcheck(args) -> int:
    cfg = _load_config(args.config)
    lock_cfg = cfg.lock.config
    if lock_cfg is None:
        from .lockchain import LockChainConfig

        lock_cfg = LockChainConfig()
    result = simulate_lock_run(lock_cfg, duration=args.hours * 3600.0, dt=args.dt, seed=cfg.seed)
    summary = {
        "hours": args.hours,
        "dt": args.dt,
        "seed": cfg.seed,
        "max_abs_residual_hz": result.max_abs_residual,
        "rms_residual_hz": result.rms_residual,
    }
    if args.out:
        _write(args.out, "lock_telemetry.csv", result.to_csv())
        _write(args.out, "lock_summary.json", json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_afc_plot(args) -> int:
    cfg = _load_config(args.config)
    spectrum = prepare_afc(cfg.memory.inhomogeneous, cfg.memory.afc)
    csv_text = spectrum.to_csv()
    if args.out:
        _write(args.out, "afc_spectrum.csv", csv_text)
        print(json.dumps({"points": spectrum.grid.n_points, "out": os.path.join(args.out, "afc_spectrum.csv")}))
    else:
        print(csv_text, end="")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    calibrated = calibrate_rate(
        cfg,
        target_peak_counts=args.target_peak,
        calibration_duration=args.calibration_duration,
        workers=args.workers,
    )
    out = {
        "total_pair_rate": calibrated.source.total_pair_rate,
        "target_peak": args.target_peak,
    }
    if args.out:
        _write(args.out, "calibrated_scenario.json", scenario_to_json(calibrated))
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afclink", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario JSON path or bundled name")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="parallel batch workers")

    p = sub.add_parser("simulate", help="run one scenario end to end")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="sweep one numeric config field")
    common(p)
    p.add_argument("--param", required=True, help="dotted config path, e.g. source.n_modes")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("lockcheck", help="simulate the lock chain alone")
    common(p)
    p.add_argument("--hours", type=float, required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.set_defaults(func=_cmd_lockcheck)

    p = sub.add_parser("afc-plot", help="export the prepared comb spectrum as CSV")
    common(p)
    p.set_defaults(func=_cmd_afc_plot)

    p = sub.add_parser("calibrate", help="bisect the pair rate to a target echo peak")
    common(p)
    p.add_argument("--target-peak", type=float, required=True)
    p.add_argument("--calibration-duration", type=float, default=None,
                   help="shorter duration for calibration runs (target scales linearly)")
    p.set_defaults(func=_cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(json.dumps({"error": {"kind": "config", "field": exc.field, "message": str(exc)}}))
        return 2
    except CalibrationError as exc:
        print(json.dumps({"error": {"kind": "calibration", "message": str(exc)}}))
        return 3
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": {"kind": type(exc).__name__, "message": str(exc)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
