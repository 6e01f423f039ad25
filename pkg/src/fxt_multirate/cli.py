"""Command-line front end: run, compare, verify and selftest modes.

Exit codes: 0 success, 1 configuration or I/O error, 2 safety or
feasibility failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .mpc import ConfigurationError
from .sim import SimReport, TrajectoryLog, check_assumptions, run_scenario

logger = logging.getLogger("fxt_multirate")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2
LOG_ENV = "FXT_MULTIRATE_LOG"


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trajectory_header(n_x: int, n_u: int) -> list[str]:
    cols = ["t"] + [f"x{k}" for k in range(n_x)] + [f"z{k}" for k in range(n_x)]
    for name in ("u_m", "u_l", "u"):
        cols += [name] if n_u == 1 else [f"{name}{k}" for k in range(n_u)]
    return cols + ["h", "delta", "ratio", "mpc_feasible"]


def interval_header(n_x: int) -> list[str]:
    return (["i", "t_start", "mpc_feasible", "mpc_status"]
            + [f"z_minus{k}" for k in range(n_x)] + [f"z_plus{k}" for k in range(n_x)]
            + ["h_end", "reached_C", "first_entry_tick", "post_entry_min_h", "max_ratio", "min_ratio",
               "start_distance", "lowlevel_failures", "boundary_ok", "boundary_margin"])


def intervals_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_intervals" + (path.suffix or ".csv"))


def export_csv(log: TrajectoryLog, path) -> None:
    """Write one row per tick to ``path`` and the interval summary next to it.

    The z columns hold the barrier centre tracked on that tick, so h can be
    recomputed from the x and z columns alone.  A run with no intervals
    produces header-only files.
    """
    path = Path(path)
    n_x, n_u = log.x.shape[1], log.u.shape[1]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(trajectory_header(n_x, n_u))
            if log.intervals:
                for j in range(log.n_rows):
                    w.writerow([_num(log.t[j])]
                               + [_num(v) for v in log.x[j]] + [_num(v) for v in log.z_end[j]]
                               + [_num(v) for v in log.u_m[j]] + [_num(v) for v in log.u_l[j]]
                               + [_num(v) for v in log.u[j]]
                               + [_num(log.h[j]), _num(log.delta[j]), _num(log.ratio[j]),
                                  _num(bool(log.mpc_feasible[j]))])
        ipath = intervals_path(path)
        with open(ipath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(interval_header(n_x))
            nan = [math.nan] * n_x
            for r in log.intervals:
                zp = r.z_plus if r.z_plus is not None else nan
                w.writerow([r.index, _num(r.t_start), _num(r.mpc_feasible), r.mpc_status]
                           + [_num(v) for v in r.z_minus] + [_num(v) for v in zp]
                           + [_num(r.h_end), _num(r.reached_C), _num(r.first_entry_tick),
                              _num(r.post_entry_min_h), _num(r.max_ratio), _num(r.min_ratio),
                              _num(r.start_distance), r.lowlevel_failures, _num(r.boundary_ok),
                              _num(r.boundary_margin)])
    except OSError as err:
        raise OSError(f"cannot write {err.filename or path}: {err.strerror}") from err


def format_report(values: dict) -> str:
    lines = []
    for key, v in values.items():
        if isinstance(v, str):
            lines.append(f"{key}={v}")
        else:
            lines.append(f"{key}={_num(v)}")
    return "\n".join(lines) + "\n"


def report_values(report: SimReport) -> dict:
    out = report.as_dict()
    out["success"] = report.success
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from err


def _run_one(cfg, out: Path, baseline: str | None, stem: str = "trajectory"):
    log, report = run_scenario(cfg, baseline)
    export_csv(log, out / f"{stem}.csv")
    _write(out / f"{stem.replace('trajectory', 'report')}.txt", format_report(report_values(report)))
    return log, report


def branch_verdict(log: TrajectoryLog, report: SimReport, T: float) -> str:
    first = log.intervals[0] if log.intervals else None
    if first is None or not first.mpc_feasible:
        return "MPC infeasible at t=0"
    if report.halted and report.halt_time > 0 and "planner" in report.halt_reason:
        return f"MPC infeasible at t={int(round(report.halt_time / T))}T"
    return "reached C1" if first.reached_C else "did not reach C1"


def mode_run(cfg, out: Path) -> int:
    _, report = _run_one(cfg, out, None)
    print(f"periodic_safety={_num(report.periodic_safety)}")
    print(f"recursive_feasibility={_num(report.recursive_feasibility)}")
    if report.halted:
        print(f"halted: {report.halt_reason}")
    return EXIT_OK if report.success else EXIT_FAILURE


def mode_compare(cfg, out: Path) -> int:
    verdicts, fxt_ok = {}, False
    for baseline in ("fxt", "esclf"):
        log, report = _run_one(cfg, out, baseline, stem=f"trajectory_{baseline}")
        verdicts[baseline] = branch_verdict(log, report, cfg.T)
        if baseline == "fxt":
            fxt_ok = bool(log.intervals) and log.intervals[0].reached_C
    verdict = "; ".join(f"{b}: {v}" for b, v in verdicts.items())
    _write(out / "comparison.txt", format_report({"verdict": verdict, "fxt_reached_C1": fxt_ok}))
    print(verdict)
    return EXIT_OK if fxt_ok else EXIT_FAILURE


def mode_verify(cfg, out: Path) -> int:
    values = check_assumptions(cfg)
    _write(out / "verify.txt", format_report(values))
    ok = all(v for v in values.values() if isinstance(v, (bool, np.bool_)))
    for key, v in values.items():
        print(f"{key}={_num(v)}")
    return EXIT_OK if ok else EXIT_FAILURE


def mode_selftest(out: Path, seed: int) -> int:
    from .selftest import run_selftest

    results = run_selftest(seed)
    _write(out / "selftest.txt", format_report({name: ok for name, ok, _ in results}))
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fxt-multirate",
                                description="Multi-rate MPC planner with a fixed-time barrier tracker.")
    p.add_argument("--config", help="scenario file (required except for selftest)")
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--mode", choices=("run", "compare", "verify", "selftest"), default="run")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value; repeatable")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise OSError(f"output directory {out} is not writable")
        if args.mode == "selftest":
            return mode_selftest(out, 0 if args.seed is None else args.seed)
        if not args.config:
            raise ConfigError("--config is required for this mode")
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.mode == "run":
            return mode_run(cfg, out)
        if args.mode == "compare":
            return mode_compare(cfg, out)
        return mode_verify(cfg, out)
    except (ConfigError, ConfigurationError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
