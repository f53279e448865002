"""Command-line interface.

Subcommands map one-to-one onto the pipeline stages: simulate a series,
fit it, invert a fit, run the whole chain, batch random ensembles, and
sweep a parameter. All outputs are plain CSV/JSON for external plotting.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime or
flagged fit/inversion failure (unless --allow-flagged).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .fitting import fit_cosines, select_mode_count
from .hilbert import ProtocolSimulator, read_series_csv, write_series_csv, write_series_meta
from .inversion import (lanczos_reconstruct, spectral_data_from_fit,
                        IllPosedSpectrumError, LanczosBreakdownError)
from .model import (ConfigError, EXACT, config_hash, load_config_file)
from .pipeline import (batch_random, resolve_spurious, run_tomography, sweep,
                       write_report_bundle)

log = logging.getLogger("fluxtomo")


def _load(args):
    spec, noise, plan = load_config_file(args.config)
    if getattr(args, "seed", None) is not None:
        plan = replace(plan, seed=args.seed)
    return spec, noise, plan


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_simulate(args) -> int:
    spec, noise, plan = _load(args)
    out = _out_dir(args)
    run_spec = resolve_spurious(spec, plan.seed)
    series = ProtocolSimulator(run_spec, noise, plan).run()
    write_series_csv(series, os.path.join(out, "series.csv"))
    write_series_meta(series, os.path.join(out, "series.meta.json"),
                      config_hash(spec, noise, plan))
    log.info("wrote %s", os.path.join(out, "series.csv"))
    return 0


def cmd_fit(args) -> int:
    meta = args.series + ".meta.json" if os.path.exists(args.series + ".meta.json") else None
    if meta is None:
        alt = args.series.replace(".csv", ".meta.json")
        meta = alt if os.path.exists(alt) else None
    series = read_series_csv(args.series, meta)
    n_modes, dc = select_mode_count(args.n_sites)
    fit = fit_cosines(series, n_modes, damped=args.damped, dc=dc)
    out = _out_dir(args)
    path = os.path.join(out, "fit.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)
    if fit.flags and not args.allow_flagged:
        log.error("fit flagged: %s", ", ".join(fit.flags))
        return 2
    return 0


def cmd_invert(args) -> int:
    with open(args.fit, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    class _Fit:
        frequencies = np.array([m["frequency"] for m in doc["modes"]])
        amplitudes = np.array([m["amplitude"] for m in doc["modes"]])
        dc = float(doc.get("dc", 0.0))
        damping = float(doc.get("damping", 0.0))

    spectrum = spectral_data_from_fit(_Fit, args.n_sites)
    recon = lanczos_reconstruct(spectrum, args.n_sites)
    out = _out_dir(args)
    path = os.path.join(out, "couplings.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"couplings": recon.off_diagonals.tolist(),
                   "diagonal_residual": recon.diagonal_residual},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)
    return 0


def cmd_run(args) -> int:
    spec, noise, plan = _load(args)
    report = run_tomography(spec, noise, plan)
    write_report_bundle(report, _out_dir(args), spec, noise, plan)
    log.info("report bundle in %s (max rel error %s)", args.out, report.max_rel_error)
    if report.flags and not args.allow_flagged:
        log.error("run flagged: %s", ", ".join(report.flags))
        return 2
    return 0


def cmd_batch(args) -> int:
    spec, noise, plan = _load(args)
    result = batch_random(args.n_trials, spec.n_sites, plan, noise,
                          variant=spec.variant, seed=plan.seed)
    out = _out_dir(args)
    path = os.path.join(out, "batch.csv")
    rows = result.to_rows()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        import csv as _csv

        writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    with open(os.path.join(out, "batch_summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"n_trials": args.n_trials,
                   "mean_rel_error": result.mean_rel_error,
                   "max_rel_error": result.max_rel_error}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)
    flagged = any(r.flags for r in result.reports)
    if flagged and not args.allow_flagged:
        return 2
    return 0


def cmd_sweep(args) -> int:
    spec, noise, plan = _load(args)
    values = [EXACT if v == EXACT else float(v) for v in args.values.split(",")]
    if args.dimension == "n_meas":
        values = [v if v == EXACT else int(v) for v in values]
    result = sweep(args.dimension, values, spec, noise, plan, repeats=args.repeats,
                   seed=plan.seed)
    out = _out_dir(args)
    path = os.path.join(out, "sweep.csv")
    result.to_csv(path)
    log.info("wrote %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxtomo",
        description="Spin-chain coupling tomography from single-spin time series.")
    parser.add_argument("--quiet", action="store_true", help="suppress log output")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="config document path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--allow-flagged", action="store_true",
                       help="exit 0 even when results carry quality flags")

    p = sub.add_parser("simulate", help="produce a measured series")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("fit", help="fit a harmonic model to a series file")
    p.add_argument("--series", required=True, help="series CSV path")
    p.add_argument("--n-sites", type=int, required=True)
    p.add_argument("--damped", action="store_true")
    common(p, config=False)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("invert", help="recover couplings from a fit JSON")
    p.add_argument("--fit", required=True, help="fit JSON path")
    p.add_argument("--n-sites", type=int, required=True)
    common(p, config=False)
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("run", help="full tomography run")
    common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="random-ensemble statistics")
    p.add_argument("--n-trials", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("sweep", help="error versus one swept parameter")
    p.add_argument("--dimension", required=True,
                   choices=("n_meas", "gamma", "big_gamma", "spurious"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--repeats", type=int, default=5)
    common(p)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for violation in exc.violations:
            log.error("config: %s", violation)
        return 1
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 1
    except (IllPosedSpectrumError, LanczosBreakdownError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
