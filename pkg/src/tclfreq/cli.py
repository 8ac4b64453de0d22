"""Command-line entry point: single runs, the event matrix, penetration sweeps.

Every simulation writes ``<key>_seed<seed>.csv`` (the trace) and
``<key>_seed<seed>.json`` (the summary) into the output directory; matrix and
sweep commands add one combined CSV table.  Exit codes: 0 success, 2 usage,
3 configuration, 4 numerical failure, 5 I/O.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .control import ControlMode
from .grid import EventSpec
from .scenario import (DEFAULT_SWEEP_FACTORS, SCENARIO_IDS, ConfigError, SimOutput,
                       SimulationDiverged, SimulationPlan, attach_gains, load_scenario,
                       run_matrix, run_penetration_sweep, run_plans)

log = logging.getLogger("tclfreq")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5
OUTPUT_ENV = "TCLFREQ_OUTPUT_DIR"

TRACE_HEADER = ("time_s,freq_hz,rocof_hz_s,p_boilers_mw,p_fridges_mw,p_uncontrolled_mw,"
                "p_primary_mw,p_secondary_mw,alpha")
_TRACE_FIELDS = ("time", "freq", "rocof", "p_boilers", "p_fridges", "p_uncontrolled",
                 "p_primary", "p_secondary", "alpha")

TRANSIENT_WINDOW = 60.0   # s after the event kept at full resolution
DEFAULT_DECIMATION = 50


class UsageError(Exception):
    pass


def _num(x) -> str:
    x = float(x)
    if x == 0.0:
        return "0.0"  # folds -0.0
    return repr(x)


def trace_rows(trace, decimation: Optional[int] = None, event_time: Optional[float] = None):
    """Row indices kept in the CSV.

    With an explicit ``decimation`` every n-th step is kept.  Otherwise every
    step inside the post-event transient window plus every
    ``DEFAULT_DECIMATION``-th step elsewhere.
    """
    n = len(trace.time)
    idx = np.arange(n)
    if decimation is not None:
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        return idx[idx % decimation == 0]
    keep = idx % DEFAULT_DECIMATION == 0
    if event_time is not None:
        t = trace.time
        keep |= (t >= event_time - 1e-9) & (t <= event_time + TRANSIENT_WINDOW + 1e-9)
    return idx[keep]


def write_trace(trace, path: str, decimation: Optional[int] = None,
                event_time: Optional[float] = None) -> int:
    """Write the trace CSV; returns the number of data rows."""
    rows = trace_rows(trace, decimation, event_time)
    cols = [np.asarray(getattr(trace, f), dtype=float)[rows] for f in _TRACE_FIELDS]
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    for vals in zip(*(c.tolist() for c in cols)):
        buf.write(",".join(_num(v) for v in vals))
        buf.write("\n")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc.strerror or exc}") from exc
    return len(rows)


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_summary(summary: dict, path: str) -> None:
    text = json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc.strerror or exc}") from exc


def _stem(out: SimOutput) -> str:
    return f"{out.key}_seed{out.plan.seed}"


def write_run(out: SimOutput, outdir: str, decimation: Optional[int]) -> None:
    stem = os.path.join(outdir, _stem(out))
    write_trace(out.trace, stem + ".csv", decimation, out.plan.event.time)
    write_summary(out.summary(), stem + ".json")


TABLE_COLUMNS = ("scenario", "event", "control", "scale", "seed", "cp_over_pct", "cp_under_pct",
                 "delta_f_max_hz", "peak_freq_hz", "quasi_steady_dev_hz", "lambda_u_mw_hz",
                 "rocof_100_hz_s", "rocof_500_hz_s", "k_delta_f_max_pct", "k_lambda_u_pct",
                 "k_rocof_100_pct", "max_late_dev_hz", "recovery_time_s")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return _num(v) if math.isfinite(v) else ""
    return str(v)


def write_table(outputs: Sequence[SimOutput], path: str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for o in outputs:
        m, g, p = o.metrics, o.gains, o.plan
        w.writerow([_cell(v) for v in (
            p.scenario.id, p.event.kind, p.control.label, float(p.scale), p.seed,
            100 * o.penetration.over, 100 * o.penetration.under,
            m.delta_f_max, m.peak_freq, m.quasi_steady_dev, m.lambda_u, m.rocof_100, m.rocof_500,
            g.k_delta_f_max if g else None, g.k_lambda_u if g else None,
            g.k_rocof_100 if g else None, o.recovery.max_late_dev, o.recovery.recovery_time)])
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write table {path}: {exc.strerror or exc}") from exc


# --- argument handling -------------------------------------------------------

def _event_arg(text: str):
    t = text.strip().lower()
    if t in ("over", "under"):
        return t
    try:
        mw = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"event must be 'over', 'under' or a signed MW step, got {text!r}") from None
    if mw == 0 or not math.isfinite(mw):
        raise argparse.ArgumentTypeError("custom event must be a finite non-zero MW value")
    return mw


def _factors_arg(text: str):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad factor list {text!r}") from None
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise argparse.ArgumentTypeError("factors must be positive numbers")
    return vals


def _positive_int(text: str):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return v


def _mode_arg(text: str):
    try:
        return ControlMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tclfreq",
        description="Frequency control by thermostatically controlled loads "
                    "on a single-bus island grid model.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_opts(p, multi_scenario=False):
        if multi_scenario:
            p.add_argument("--scenario", action="append", default=None,
                           help="preset id or YAML path; repeatable (default: all presets)")
        else:
            p.add_argument("--scenario", required=True, help="preset id (A-F) or YAML path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=0.02, help="integration step (s)")
        p.add_argument("--duration", type=float, default=1800.0, help="simulated time (s)")
        p.add_argument("--out", default=os.environ.get(OUTPUT_ENV, "tclfreq-output"),
                       help=f"output directory (default ${OUTPUT_ENV} or ./tclfreq-output)")
        p.add_argument("--decimation", type=_positive_int, default=None,
                       help="keep every n-th step (default: full resolution for 60 s after "
                            f"the event, every {DEFAULT_DECIMATION}th step elsewhere)")
        p.add_argument("--samples", type=_positive_int, default=1000,
                       help="simulated devices per class")

    run = sub.add_parser("run", help="one simulation")
    sim_opts(run)
    run.add_argument("--event", type=_event_arg, default="over",
                     help="over, under, or a signed MW step (+ raises frequency)")
    run.add_argument("--control", type=_mode_arg, default=ControlMode.NONE,
                     help="none, si, pfr or si-pfr")

    mat = sub.add_parser("matrix", help="every event x control mode")
    sim_opts(mat, multi_scenario=True)
    mat.add_argument("--workers", type=_positive_int, default=1)

    sw = sub.add_parser("sweep", help="penetration sweep with SI-PFR")
    sim_opts(sw, multi_scenario=True)
    sw.add_argument("--factors", type=_factors_arg, default=DEFAULT_SWEEP_FACTORS,
                    help="comma-separated scale factors of the aggregate nominal power")
    sw.add_argument("--control", type=_mode_arg, default=ControlMode.SI_PFR)
    sw.add_argument("--workers", type=_positive_int, default=1)

    val = sub.add_parser("validate", help="check scenario constants against reference values")
    val.add_argument("--scenario", action="append", default=None,
                     help="preset id or YAML path; repeatable (default: all presets)")
    return parser


def _ensure_outdir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc.strerror or exc}") from None
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _plan_kw(args) -> dict:
    if not args.dt > 0 or not math.isfinite(args.dt):
        raise UsageError("--dt must be positive")
    if not args.duration > 0:
        raise UsageError("--duration must be positive")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    return dict(dt=args.dt, duration=args.duration, seed=args.seed,
                sample_count=args.samples)


def _cmd_run(args) -> int:
    kw = _plan_kw(args)
    sc = _load(args.scenario)
    if isinstance(args.event, str):
        event = sc.event(args.event)
    else:
        event = EventSpec(abs(args.event), 1 if args.event > 0 else -1, 60.0,
                          f"custom {args.event:+g} MW step")
    if kw["duration"] < event.time + 30.0:
        raise UsageError("--duration must cover at least 30 s after the event")
    outdir = _ensure_outdir(args.out)
    plans = [SimulationPlan(scenario=sc, event=event, control=args.control, **kw)]
    if args.control is not ControlMode.NONE:
        # paired no-control run for the gains
        plans.insert(0, SimulationPlan(scenario=sc, event=event, control=ControlMode.NONE, **kw))
    outs = run_plans(plans)
    attach_gains(outs)
    out = outs[-1]
    write_run(out, outdir, args.decimation)
    m = out.metrics
    print(f"{out.key}: delta_f_max={m.delta_f_max:.4f} Hz peak={m.peak_freq:.4f} Hz "
          f"rocof_100={m.rocof_100:.4f} Hz/s -> {os.path.join(outdir, _stem(out))}.*")
    return EXIT_OK


def _load(source):
    try:
        return load_scenario(source)
    except ConfigError as exc:
        if exc.field == "scenario":
            raise UsageError(str(exc)) from None
        raise


def _scenarios(args):
    items = args.scenario or list(SCENARIO_IDS)
    return [_load(s) for s in items]


def _progress(o: SimOutput):
    log.info("finished %s", o.key)


def _cmd_matrix(args) -> int:
    kw = _plan_kw(args)
    scs = _scenarios(args)
    if kw["duration"] < 90.0:
        raise UsageError("--duration must cover at least 30 s after the event")
    outdir = _ensure_outdir(args.out)
    outs = run_matrix(scs, workers=args.workers, on_result=_progress, **kw)
    for o in outs:
        write_run(o, outdir, args.decimation)
    path = os.path.join(outdir, f"matrix_seed{args.seed}.csv")
    write_table(outs, path)
    print(f"{len(outs)} runs -> {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    kw = _plan_kw(args)
    scs = _scenarios(args)
    if kw["duration"] < 90.0:
        raise UsageError("--duration must cover at least 30 s after the event")
    outdir = _ensure_outdir(args.out)
    points, outs = run_penetration_sweep(scs, factors=args.factors, mode=args.control,
                                         workers=args.workers, on_result=_progress, **kw)
    for o in outs:
        write_run(o, outdir, args.decimation)
    path = os.path.join(outdir, f"sweep_seed{args.seed}.csv")
    write_table(outs, path)
    print(f"{len(points)} sweep points -> {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scs = _scenarios(args)
    print(f"{'scenario':<10}{'quantity':<20}{'computed':>12}{'reference':>12}{'delta':>10}")
    for sc in scs:
        cc = sc.cross_check()
        for key, label in (("nominal_power", "P_N [MW]"), ("start_up_time", "T_a [s]"),
                           ("regulating_energy", "E_r [MW/Hz]")):
            comp = cc["computed"][key]
            if "reference" in cc:
                ref, d = cc["reference"][key], cc["delta"][key]
                print(f"{sc.id:<10}{label:<20}{comp:>12.3f}{ref:>12.3f}{d:>+10.3f}")
            else:
                print(f"{sc.id:<10}{label:<20}{comp:>12.3f}{'-':>12}{'-':>10}")
        print(f"{sc.id:<10}{'balance [MW]':<20}{sc.balance_residual:>12.3f}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "matrix": _cmd_matrix, "sweep": _cmd_sweep,
             "validate": _cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tclfreq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"tclfreq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"tclfreq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"tclfreq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"tclfreq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"tclfreq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
