"""End-to-end experiment orchestration.

Single tomography runs (with the two-pass procedure for the xy variant),
random-ensemble batches, and parameter sweeps. Every report is a pure
function of (configuration, master seed); batch trials derive their own
seeds by index so execution order never matters.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng as _rng
from .fitting import fit_cosines, select_mode_count
from .hilbert import ProtocolSimulator, write_series_csv, write_series_meta
from .inversion import (EstimationResult, IllPosedSpectrumError,
                        LanczosBreakdownError, deinterleave_h2,
                        lanczos_reconstruct, refine_couplings,
                        spectral_data_from_fit, write_estimation_csv,
                        write_estimation_json)
from .model import (EXACT, HamiltonianSpec, NoiseModel, SamplingPlan,
                    SpuriousTerms, RANDOM_SPURIOUS, config_hash, require_valid,
                    save_config, xx_chain, xy_chain)

DEFAULT_SPURIOUS_MAGNITUDE = 0.1


def worker_count() -> int:
    """Worker cap from FLUXTOMO_THREADS (default 1, serial)."""
    try:
        return max(int(os.environ.get("FLUXTOMO_THREADS", "1")), 1)
    except ValueError:
        return 1


def resolve_spurious(spec: HamiltonianSpec, seed: int,
                     magnitude: float = DEFAULT_SPURIOUS_MAGNITUDE) -> HamiltonianSpec:
    """Replace "random" spurious sentinels with concrete uniform draws."""
    if spec.spurious is None or spec.spurious.concrete:
        return spec
    gen = _rng.stream("spurious", seed)
    n = spec.n_sites
    z = spec.spurious.z_fields
    zz = spec.spurious.zz_couplings
    if z == RANDOM_SPURIOUS:
        z = tuple(gen.uniform(-magnitude, magnitude, n))
    if zz == RANDOM_SPURIOUS:
        zz = tuple(gen.uniform(-magnitude, magnitude, n - 1))
    return replace(spec, spurious=SpuriousTerms(z, zz))


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """Everything one tomography run produced, reproducible from
    (config, seed). Wall time is informational and excluded from the
    canonical byte representation."""

    config_hash: str
    seed: int
    estimates: tuple
    series: dict
    fits: dict
    flags: tuple
    wall_time_s: float

    @property
    def max_rel_error(self):
        errs = [e.max_rel_error for e in self.estimates if e.max_rel_error is not None]
        return max(errs) if errs else None

    @property
    def mean_rel_error(self):
        errs = [e.rel_errors for e in self.estimates if e.rel_errors is not None]
        return float(np.concatenate(errs).mean()) if errs else None

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "flags": list(self.flags),
            "estimates": [e.to_json_dict() for e in self.estimates],
            "fits": {k: f.to_json_dict() for k, f in self.fits.items()},
            "series": {k: {"times": s.times.tolist(), "values": s.values.tolist(),
                           "std_errors": s.std_errors.tolist()}
                       for k, s in self.series.items()},
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time_s
        return out

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")


def _single_pass(spec, noise, plan, basis, rest_state, refine):
    """Simulate, fit, and invert one measurement basis.

    Returns (couplings, series, fit, flags, diagnostics)."""
    plan_b = replace(plan, basis=basis)
    series = ProtocolSimulator(spec, noise, plan_b, rest_state).run()
    n = spec.n_sites
    n_modes, dc = select_mode_count(n)
    damped = noise.active
    fit = fit_cosines(series, n_modes, damped=damped, dc=dc)
    flags = [f"fit-{basis}:{f}" for f in fit.flags]
    spectrum = spectral_data_from_fit(fit, n)
    recon = lanczos_reconstruct(spectrum, n)
    couplings = recon.off_diagonals
    diagnostics = {"diagonal_residual": recon.diagonal_residual,
                   "fit_converged": fit.converged}
    if refine:
        refined = refine_couplings(series, couplings, damped=damped,
                                   damping=fit.damping)
        couplings = refined.couplings
        diagnostics["refinement_residual"] = refined.residual_rms
        diagnostics["refinement_improved"] = refined.improved
        if not refined.converged:
            flags.append(f"refine-{basis}:non-convergence")
    return couplings, series, fit, flags, diagnostics


def run_tomography(spec: HamiltonianSpec, noise: NoiseModel | None = None,
                   plan: SamplingPlan | None = None, refine: bool | None = None,
                   rest_state: str = "haar",
                   spurious_magnitude: float = DEFAULT_SPURIOUS_MAGNITUDE) -> ExperimentReport:
    """Full single-configuration tomography.

    The xx variant runs one pass in the plan's basis; the xy variant runs
    the protocol twice (X then Y) and de-interleaves the two effective
    coupling sequences. Refinement defaults to on exactly when the series
    carries statistical noise (channels active or finite shot counts).
    """
    noise = noise if noise is not None else NoiseModel()
    plan = plan if plan is not None else SamplingPlan()
    require_valid(spec, noise, plan)
    if refine is None:
        refine = noise.active or plan.n_meas != EXACT

    started = time.perf_counter()
    cfg_hash = config_hash(spec, noise, plan)
    run_spec = resolve_spurious(spec, plan.seed, spurious_magnitude)

    series: dict = {}
    fits: dict = {}
    flags: list = []
    estimates: list = []
    try:
        if spec.variant == "xx":
            b, ser, fit, fl, diag = _single_pass(run_spec, noise, plan, plan.basis,
                                                 rest_state, refine)
            series[plan.basis] = ser
            fits[plan.basis] = fit
            flags += fl
            estimates.append(EstimationResult("J", b, spec.couplings.array, diag))
        else:
            per_basis = {}
            for basis in ("x", "y"):
                bb, ser, fit, fl, diag = _single_pass(run_spec, noise, plan, basis,
                                                      rest_state, refine)
                series[basis] = ser
                fits[basis] = fit
                flags += fl
                per_basis[basis] = (bb, diag)
            j_x, j_y = deinterleave_h2(per_basis["x"][0], per_basis["y"][0])
            estimates.append(EstimationResult("J_X", j_x, spec.couplings.array,
                                              per_basis["x"][1]))
            estimates.append(EstimationResult("J_Y", j_y, spec.couplings_y.array,
                                              per_basis["y"][1]))
    except (IllPosedSpectrumError, LanczosBreakdownError) as exc:
        flags.append(f"inversion:{exc}")

    return ExperimentReport(cfg_hash, plan.seed, tuple(estimates), series, fits,
                            tuple(flags), time.perf_counter() - started)


# ---------------------------------------------------------------------------
# batches and sweeps

@dataclass(frozen=True, eq=False)
class BatchResult:
    reports: tuple
    mean_rel_error: float
    max_rel_error: float

    def to_rows(self) -> list:
        rows = []
        for i, rep in enumerate(self.reports):
            rows.append({"trial": i, "seed": rep.seed,
                         "mean_rel_error": rep.mean_rel_error,
                         "max_rel_error": rep.max_rel_error,
                         "flags": ";".join(rep.flags)})
        return rows


def _batch_trial(args):
    (variant, n_sites, lo, hi, noise, plan, seed, index, refine, rest_state) = args
    gen = _rng.stream("trial", seed, index)
    couplings = gen.uniform(lo, hi, n_sites - 1)
    if variant == "xx":
        spec = xx_chain(couplings)
    else:
        spec = xy_chain(couplings, gen.uniform(lo, hi, n_sites - 1))
    trial_plan = replace(plan, seed=_rng.child_seed(seed, "plan", index))
    return run_tomography(spec, noise, trial_plan, refine=refine, rest_state=rest_state)


def batch_random(n_trials: int, n_sites: int, plan: SamplingPlan | None = None,
                 noise: NoiseModel | None = None, coupling_range=(0.5, 1.5),
                 variant: str = "xx", seed: int = 0, refine: bool | None = None,
                 rest_state: str = "haar") -> BatchResult:
    """Tomography over randomly drawn coupling sets.

    Per-trial couplings, plan seeds, and noise streams all derive from the
    master seed by trial index; results are order-independent and a fixed
    seed reproduces the batch bit for bit.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    noise = noise if noise is not None else NoiseModel()
    plan = plan if plan is not None else SamplingPlan()
    lo, hi = coupling_range
    jobs = [(variant, n_sites, lo, hi, noise, plan, seed, i, refine, rest_state)
            for i in range(n_trials)]
    reports = list(_map_jobs(_batch_trial, jobs))
    rel = [r.mean_rel_error for r in reports if r.mean_rel_error is not None]
    mx = [r.max_rel_error for r in reports if r.max_rel_error is not None]
    return BatchResult(tuple(reports), float(np.mean(rel)) if rel else float("nan"),
                       float(np.max(mx)) if mx else float("nan"))


def _map_jobs(fn, jobs):
    workers = worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


SWEEP_DIMENSIONS = ("n_meas", "gamma", "big_gamma", "spurious")


@dataclass(frozen=True, eq=False)
class SweepResult:
    dimension: str
    rows: tuple  # dicts: value, mean/max/median statistics

    def to_csv(self, path):
        fields = ["value", "mean_rel_error", "max_rel_error",
                  "median_max_rel_error", "repeats"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in fields})


def _sweep_point(args):
    (dimension, value, spec, noise, plan, seed, repeat, rest_state) = args
    if dimension == "n_meas":
        plan = replace(plan, n_meas=value if value == EXACT else int(value))
    elif dimension == "gamma":
        noise = replace(noise, gamma=float(value))
    elif dimension == "big_gamma":
        noise = replace(noise, big_gamma=float(value))
    elif dimension == "spurious":
        if spec.spurious is None:
            spec = replace(spec, spurious=SpuriousTerms())
    magnitude = float(value) if dimension == "spurious" else DEFAULT_SPURIOUS_MAGNITUDE
    plan = replace(plan, seed=_rng.child_seed(seed, dimension, str(value), repeat))
    report = run_tomography(spec, noise, plan, rest_state=rest_state,
                            spurious_magnitude=magnitude)
    return report


def sweep(dimension: str, values, spec: HamiltonianSpec,
          noise: NoiseModel | None = None, plan: SamplingPlan | None = None,
          repeats: int = 5, seed: int = 0, rest_state: str = "haar") -> SweepResult:
    """Error statistics along one configuration dimension.

    Each swept value is repeated with derived seeds; rows report the mean
    relative error, the worst relative error, and the median over repeats
    of the per-run worst error, sorted by value.
    """
    if dimension not in SWEEP_DIMENSIONS:
        raise ValueError(f"dimension must be one of {SWEEP_DIMENSIONS}")
    noise = noise if noise is not None else NoiseModel()
    plan = plan if plan is not None else SamplingPlan()
    jobs = [(dimension, v, spec, noise, plan, seed, r, rest_state)
            for v in values for r in range(repeats)]
    reports = _map_jobs(_sweep_point, jobs)

    rows = []
    for i, v in enumerate(values):
        chunk = reports[i * repeats:(i + 1) * repeats]
        means = [r.mean_rel_error for r in chunk if r.mean_rel_error is not None]
        maxes = [r.max_rel_error for r in chunk if r.max_rel_error is not None]
        rows.append({
            "value": v,
            "mean_rel_error": float(np.mean(means)) if means else float("nan"),
            "max_rel_error": float(np.max(maxes)) if maxes else float("nan"),
            "median_max_rel_error": float(np.median(maxes)) if maxes else float("nan"),
            "repeats": repeats,
        })
    key = {v: i for i, v in enumerate(sorted(values, key=_sweep_sort_key))}
    rows.sort(key=lambda row: key[row["value"]])
    return SweepResult(dimension, tuple(rows))


def _sweep_sort_key(value):
    return (1, 0.0) if value == EXACT else (0, float(value))


# ---------------------------------------------------------------------------
# report bundles

def write_report_bundle(report: ExperimentReport, outdir, spec, noise, plan):
    """Write the full artifact set for one run into a directory."""
    os.makedirs(outdir, exist_ok=True)
    join = lambda name: os.path.join(outdir, name)
    with open(join("config.toml"), "w", encoding="utf-8") as fh:
        fh.write(save_config(spec, noise, plan))
    for basis, ser in report.series.items():
        write_series_csv(ser, join(f"series_{basis}.csv"))
        write_series_meta(ser, join(f"series_{basis}.meta.json"), report.config_hash)
    for basis, fit in report.fits.items():
        with open(join(f"fit_{basis}.json"), "w", encoding="utf-8") as fh:
            json.dump(fit.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    for est in report.estimates:
        suffix = est.label.lower().replace("_", "")
        write_estimation_csv(est, join(f"result_{suffix}.csv"))
        write_estimation_json(est, join(f"result_{suffix}.json"))
    with open(join("result.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary = {"config_hash": report.config_hash, "seed": report.seed,
               "max_rel_error": report.max_rel_error,
               "mean_rel_error": report.mean_rel_error,
               "flags": list(report.flags), "wall_time_s": report.wall_time_s}
    with open(join("summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
