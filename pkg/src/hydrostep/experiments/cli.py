"""Command-line entry point: ``hydrostep run|study|report|disk``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .runner import ScenarioError, run_scenario, spinning_disk_epsilon
from .scenario import COIN_RADIUS, coin_scenario, load_scenario
from .studies import StudyError, convergence_study, tessellation_report


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(record) -> dict:
    return {"scenario": record.scenario, "dt": record.dt, "steps": record.steps,
            "rows": len(record), "retries": record.retries,
            "retry_times": record.retry_times, "stopped_early": record.stopped_early,
            "max_newton_iterations": record.max_newton_iterations,
            "mean_seconds_per_step": record.mean_times}


def cmd_run(args) -> int:
    scenario = load_scenario(args.config)
    out = _out(args)
    try:
        record = run_scenario(scenario, out, args.snapshot_every, args.dump_constraints)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        if err.record is not None:
            err.record.to_csv(out / f"{scenario.name}.partial.csv")
        return 1
    record.to_csv(out / f"{scenario.name}.csv")
    summary = _summary(record)
    (out / f"{scenario.name}.summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if record.retries:
        print(f"warning: {record.retries} step(s) retried at half the time step "
              f"(t = {', '.join(f'{t:.6g}' for t in record.retry_times)})")
    print(f"{scenario.name}: {record.steps} steps, {len(record)} rows -> {out}")
    return 2 if record.retries else 0


def cmd_study(args) -> int:
    scenario = load_scenario(args.config)
    if args.sweep_dt:
        variable, values = "dt", args.sweep_dt
    else:
        variable, values = "dx", args.sweep_dx
    reference = args.reference or min(values) / 10
    try:
        result = convergence_study(scenario, variable, values, reference, workers=args.workers)
    except StudyError as err:
        print(f"error: {err}; completed runs: {sorted(err.partial)}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    out = _out(args)
    result.to_csv(out / f"{scenario.name}_{variable}_study.csv")
    for h, e in zip(result.values, result.errors):
        print(f"{variable} = {h:.4g}  relative error = {e:.4e}")
    print(f"log-log slope = {result.slope:.3f}")
    return 0


def cmd_report(args) -> int:
    scenario = load_scenario(args.config)
    try:
        report = tessellation_report(scenario, args.steps)
    except Exception as err:   # solver or geometry failures end the report
        print(f"error: {err}", file=sys.stderr)
        return 1
    out = _out(args)
    report.to_csv(out / f"{scenario.name}_tessellation.csv")
    print(f"mean face ratio (triangulated / polygonal) = {report.mean_ratio:.3f}")
    print(f"max relative net-force difference = {report.max_force_difference:.3e}")
    return 0


def cmd_disk(args) -> int:
    out = _out(args)
    status = 0
    for eps0 in args.eps0:
        scenario = coin_scenario(eps0, omega0=args.omega0, dt=args.dt,
                                 resolution=args.resolution, stop_spin_below=args.cutoff)
        try:
            record = run_scenario(scenario)
        except ScenarioError as err:
            print(f"eps0 = {eps0:g}: error: {err}", file=sys.stderr)
            status = 1
            continue
        record.to_csv(out / f"{scenario.name}.csv")
        try:
            eps = spinning_disk_epsilon(record, COIN_RADIUS, args.cutoff)
            print(f"eps0 = {eps0:g}: eps* = {eps:.5f} after {record.steps} steps")
        except ValueError as err:
            print(f"eps0 = {eps0:g}: {err}", file=sys.stderr)
            status = 1
        if record.retries:
            status = max(status, 2)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrostep", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario config and write its trajectory")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.add_argument("--snapshot-every", type=int, default=None, metavar="N",
                   help="write a contact polygon soup every N steps")
    r.add_argument("--dump-constraints", action="store_true",
                   help="append every step's constraints to constraints.csv")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("study", help="time-step or resolution convergence sweep")
    s.add_argument("config")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--sweep-dt", type=float, nargs="+", metavar="DT")
    g.add_argument("--sweep-dx", type=float, nargs="+", metavar="DX")
    s.add_argument("--reference", type=float, default=None,
                   help="reference size (default: smallest swept value / 10)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_study)

    t = sub.add_parser("report", help="polygonal vs triangulated tessellation report")
    t.add_argument("config")
    t.add_argument("--tessellation", action="store_true", required=True)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--out", default="out")
    t.set_defaults(func=cmd_report)

    d = sub.add_parser("disk", help="spinning-coin terminal ratio for several initial ratios")
    d.add_argument("--eps0", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0, 10.0])
    d.add_argument("--omega0", type=float, default=50.0)
    d.add_argument("--dt", type=float, default=1e-3)
    d.add_argument("--resolution", type=float, default=2.4e-3)
    d.add_argument("--cutoff", type=float, default=0.5)
    d.add_argument("--out", default="out")
    d.set_defaults(func=cmd_disk)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
