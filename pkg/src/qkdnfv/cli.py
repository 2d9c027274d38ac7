"""Command-line entry point.

    qkdnfv fig2-sweep      [--distances 0,12.5,25] [--gnuplot]
    qkdnfv timeshare-demo
    qkdnfv transfer-demo   [--mode serve]
    qkdnfv validate

Common flags: --config PATH, --out DIR, --seed N, --mode simulate|serve.
Exit status: 0 success, 1 configuration error, 2 scenario failure.
Log verbosity comes from the QKDNFV_LOG environment variable.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import ScenarioConfig, config_from_mapping, load_config
from .errors import ConfigError, QkdNfvError
from .scenario import fig2_sweep, gnuplot_script, run_secured_provisioning, run_timeshare

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2
SCENARIOS = ("fig2-sweep", "timeshare-demo", "transfer-demo", "validate")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkdnfv", description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", "-c", help="scenario file (YAML or JSON); defaults to the built-in test-bed")
    p.add_argument("--out", "-o", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="seed override")
    p.add_argument("--mode", choices=("simulate", "serve"), help="mode override")
    p.add_argument("--distances", help="comma-separated km list for fig2-sweep")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script next to the sweep CSV")
    return p


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else config_from_mapping({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode is not None:
        cfg.mode = args.mode
    if args.out is not None:
        cfg.out_dir = args.out
    if args.distances is not None:
        try:
            cfg.sweep_distances_km = tuple(float(x) for x in args.distances.split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad distance list {args.distances!r}") from exc
    return cfg.check()


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    print(f"wrote {path}")
    return path


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("QKDNFV_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.out_dir)
    try:
        if args.scenario == "validate":
            print(yaml.safe_dump(cfg.resolved(), sort_keys=False), end="")
            print("configuration ok")
            return EXIT_OK

        if args.scenario == "fig2-sweep":
            try:
                text = fig2_sweep(cfg.model, cfg.sweep_distances_km)
            except ValueError as exc:
                print(f"configuration error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            _write(out, "fig2_sweep.csv", text)
            if args.gnuplot:
                _write(out, "fig2_sweep.gp", gnuplot_script("fig2_sweep.csv"))
            return EXIT_OK

        if args.scenario == "timeshare-demo":
            schedule, report, _ = run_timeshare(cfg)
            _write(out, "schedule.csv", schedule.to_csv())
            _write(out, "schedule_executed.csv", report.to_csv())
            _write(out, "timeshare_trace.log", report.trace.dump())
            print(f"makespan planned {schedule.makespan:.3f} s, executed {report.end_time:.3f} s")
            if not report.completed:
                print(f"scenario failed: {report.error}", file=sys.stderr)
                return EXIT_FAILED
            return EXIT_OK

        report = run_secured_provisioning(cfg)
        _write(out, "schedule.csv", report.schedule.to_csv())
        _write(out, "transfer_report.jsonl", report.to_jsonl())
        _write(out, "transfer_trace.log", report.trace.dump())
        print(report.breakdown(), end="")
        if not report.ok:
            print(f"scenario failed: {report.execution.error or 'transfer job failed'}", file=sys.stderr)
            return EXIT_FAILED
        return EXIT_OK
    except QkdNfvError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
