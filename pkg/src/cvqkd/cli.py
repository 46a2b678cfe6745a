"""Command line entry point.

Exit status: 0 on success (a zero key rate is still success), 2 for
configuration errors, 3 for pipeline errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .config import bundled_names, load_scenario
from .errors import ConfigError, PipelineError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file or bundled name (%s)" % ", ".join(bundled_names()))
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit), overrides the file")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes outputs")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--fast", action="store_true", help="skip waveform simulation (math path)")
    common.add_argument("--frames", type=int, help="override run.frames")
    common.add_argument("--frame-len", type=int, help="override tx.frame_len_samples")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cvqkd", description="CV-QKD link simulator and key-rate calculator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("calibrate", "vacuum and electronic noise calibration"),
        ("simulate", "transmit and propagate frames, write raw waveforms"),
        ("dsp", "receiver DSP on stored frames"),
        ("estimate", "parameter estimation on stored symbol blocks"),
        ("keyrate", "key rate from estimates (or scenario values with --fast)"),
        ("sweep", "loss sweep and block-size/efficiency grid"),
        ("run", "full pipeline without storing waveforms"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    rp = sub.add_parser("report", help="aggregate output directories into one JSON summary")
    rp.add_argument("dirs", nargs="+", help="output directories")
    rp.add_argument("--output", default=None, help="report path (default: stdout)")
    rp.add_argument("-v", "--verbose", action="store_true")
    return p


def _scenario(args):
    if not args.scenario:
        raise ConfigError("required", "--scenario")
    ov = {}
    if args.seed is not None:
        ov["run.master_seed"] = args.seed
    if args.frames is not None:
        ov["run.frames"] = args.frames
    if args.frame_len is not None:
        ov["tx.frame_len_samples"] = args.frame_len
    if args.threads < 1:
        raise ConfigError("must be at least 1", "--threads")
    return load_scenario(args.scenario, ov)


def _dispatch(args):
    if args.command == "report":
        rep = harness.emit_report(args.dirs, args.output)
        if args.output is None:
            print(json.dumps(rep, indent=1, sort_keys=True))
        return
    sc = _scenario(args)
    cmd = args.command
    if cmd == "calibrate":
        cal = harness.stage_calibrate(sc, args.out)
        print(f"V_el = {cal.v_el * 1e3:.4f} mSNU")
    elif cmd == "simulate":
        harness.stage_simulate(sc, args.out, args.threads)
    elif cmd == "dsp":
        harness.stage_dsp(sc, args.out, args.threads)
    elif cmd == "estimate":
        s, _ = harness.stage_estimate(sc, args.out)
        print(f"xi_hat = {s['xi_hat_snu'] * 1e3:.4f} mSNU over {s['n_symbols']} symbols")
    elif cmd == "keyrate":
        _print_rate(harness.stage_keyrate(sc, args.out, args.fast))
    elif cmd == "sweep":
        sw, grid = harness.stage_sweep(sc, args.out, fast=args.fast, threads=args.threads)
        print(f"loss cutoff: {sw.cutoff_db}")
    elif cmd == "run":
        _print_rate(harness.run_scenario(sc, args.out, args.threads, args.fast))


def _print_rate(rep):
    a, f = rep["asymptotic"], rep["finite"]
    print(f"asymptotic {a['rate_asymptotic']:.4e} bit/use ({a['skr_bps']:.4g} bit/s); "
          f"finite(N={rep['N']:g}) {f['rate_finite']:.4e} bit/use")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as e:
        print(f"pipeline error: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
