"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

import argparse
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import AdaptrackError, ConfigError, EmptyOrDegenerateLog

log = logging.getLogger("adaptrack")


def _deltas(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("deltas must be non-negative")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="adaptrack", description="Adapt-then-switch MSAC/MPC experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="full adaptation + MPC run")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: output.dir)")
    run.add_argument("--no-plots", action="store_true")

    sw = sub.add_parser("sweep-delta", help="injected-error optimality-gap sweep")
    sw.add_argument("config")
    sw.add_argument("--deltas", type=_deltas, default=_deltas("0.2,0.1,0.05,0.025"))
    sw.add_argument("--out", help="CSV path (default: stdout)")

    ric = sub.add_parser("riccati", help="dump S-tables of the first MPC window")
    ric.add_argument("config")
    ric.add_argument("--out", help="CSV path (default: stdout)")
    ric.add_argument("--stride", type=int, default=1)

    pe = sub.add_parser("pe-check", help="persistent-excitation levels of the adaptation run")
    pe.add_argument("config")
    pe.add_argument("--out", help="CSV path (default: stdout)")

    pl = sub.add_parser("plot", help="render SVG figures from log CSVs")
    pl.add_argument("logs", nargs="+", metavar="log.csv")
    pl.add_argument("out_dir")
    pl.add_argument("--u-max", type=float)
    return p


def _emit(path, write):
    """Run ``write(path)``; without a path, route the file to stdout."""
    if path:
        write(Path(path))
        print(path)
        return
    with tempfile.TemporaryDirectory() as d:
        f = Path(d) / "out.csv"
        write(f)
        sys.stdout.write(f.read_text())


def _cmd_run(args, cfg):
    from .pipeline import run_pipeline

    rep = run_pipeline(cfg, out_dir=args.out, plots=False if args.no_plots else None)
    print(f"theta error: {rep.theta_err_initial:.6g} -> {rep.theta_err_switch:.6g} at t={rep.t_switch:.6g}")
    pe = "n/a" if rep.pe_verdict is None else ("pass" if rep.pe_verdict else "fail")
    print(f"PE: {pe} (min eig {rep.pe_min_eig:.6g})")
    if not rep.learning_guaranteed:
        print("warning: learning not guaranteed")
    print(f"V_mpc={rep.V_mpc:.10g} V_star={rep.V_star:.10g} gap={rep.gap:.6g}")
    print(f"report: {rep.artifacts['report']}")


def _cmd_sweep(args, cfg):
    from .pipeline import sweep_delta, write_gap_csv

    rows, slope = sweep_delta(cfg, args.deltas)
    _emit(args.out, lambda p: write_gap_csv(p, rows, slope))
    log.info("slope %.6g", slope)


def _cmd_riccati(args, cfg):
    from .pipeline import riccati_tables, write_riccati_csv

    if args.stride < 1:
        raise ConfigError("--stride", "must be a positive integer")
    ctg = riccati_tables(cfg)
    _emit(args.out, lambda p: write_riccati_csv(ctg, p, args.stride))


def _cmd_pe(args, cfg):
    from .pipeline import adapt, pe_report

    rep = pe_report(cfg, adapt(cfg))
    if rep is None:
        print("PE: n/a (adaptation log shorter than one window)")
        return
    _emit(args.out, rep.to_csv)
    print(f"PE: {'pass' if rep.verdict else 'fail'} (min eig {rep.min_level:.6g}, alpha {rep.alpha:g})",
          file=sys.stderr)


def _cmd_plot(args):
    from .plant import SimLog
    from .plots import emit_plots

    logs = [SimLog.from_csv(p) for p in args.logs]
    full = logs[0]
    for nxt in logs[1:]:
        full = SimLog.concat(full, nxt)
    for f in emit_plots(full, args.out_dir, u_max=args.u_max):
        print(f)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "plot":
            _cmd_plot(args)
            return 0
        from .config import parse_config

        try:
            cfg = parse_config(args.config)
        except OSError as exc:
            raise ConfigError(args.config, f"cannot be read ({exc.strerror})")
        {"run": _cmd_run, "sweep-delta": _cmd_sweep, "riccati": _cmd_riccati,
         "pe-check": _cmd_pe}[args.cmd](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EmptyOrDegenerateLog, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AdaptrackError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0
