"""Harmonic estimation from a measured series.

Fits a sum of cosines (optionally with a constant term for odd chains and
a global exponential damping factor) to a SampleSeries:

    f(t) = (sum_k A_k cos(w_k t) + dc) * exp(-damping * t)

Frequency seeding evaluates several candidate sources, a zero-padded
periodogram peak pick, a matrix-pencil estimate, a Chebyshev-basis cosine
recurrence, and matching pursuit over a damped-cosine dictionary (the
root-finding estimators are exact on clean data but fragile when a slow
mode covers a fraction of a cycle), and keeps whichever explains the data
best at fixed frequencies. The nonlinear stage is damped least squares
with an analytic Jacobian and a small multi-start over perturbed seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares

from .hilbert import SampleSeries

# deterministic multi-start perturbations are drawn from this fixed stream
_MULTISTART_SEED = 0x5EED
_N_STARTS = 5


@dataclass(frozen=True)
class ModeSeeds:
    """Starting point for the nonlinear fit."""

    frequencies: tuple
    amplitudes: tuple
    dc: float = 0.0
    damping: float = 0.0
    multiplicity_flagged: bool = False


@dataclass(frozen=True, eq=False)
class HarmonicFit:
    """Fitted cosine modes, sorted by increasing frequency."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    dc: float
    damping: float
    residual_rms: float
    covariance: np.ndarray | None
    converged: bool
    n_iterations: int
    flags: tuple = ()

    @property
    def modes(self) -> list:
        return list(zip(self.amplitudes.tolist(), self.frequencies.tolist()))

    def to_json_dict(self) -> dict:
        return {
            "modes": [{"amplitude": a, "frequency": w} for a, w in self.modes],
            "dc": self.dc,
            "damping": self.damping,
            "residual_rms": self.residual_rms,
            "iterations": self.n_iterations,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def select_mode_count(n_sites: int):
    """(number of cosine modes, whether a constant term is present)."""
    if n_sites < 2:
        raise ValueError("n_sites must be >= 2")
    return n_sites // 2, n_sites % 2 == 1


def matrix_pencil(values: np.ndarray, dt: float, n_modes: int, dc: bool = False):
    """Frequency and decay estimates for uniformly sampled damped cosines.

    Returns (frequencies, decay) with up to n_modes positive frequencies
    in ascending order. Standard pencil: two shifted Hankel matrices, an
    SVD-truncated shift operator, eigenvalues z = exp((-decay +/- i w) dt).
    """
    n = len(values)
    rank = 2 * n_modes + (1 if dc else 0)
    pencil = max(rank, n // 2)
    if n - pencil < rank:
        pencil = n - rank
    if pencil < 1:
        return np.array([]), 0.0

    h = scipy.linalg.hankel(values[: n - pencil], values[n - pencil - 1:])
    y0 = h[:, :-1]
    y1 = h[:, 1:]
    u, s, vt = np.linalg.svd(y0, full_matrices=False)
    keep = min(rank, np.sum(s > 1e-12 * s[0]) if s.size else 0)
    if keep == 0:
        return np.array([]), 0.0
    shift = (u[:, :keep].conj().T @ y1) @ vt[:keep].conj().T / s[:keep][:, None]
    z = np.linalg.eigvals(shift)

    angles = np.angle(z)
    mags = np.abs(z)
    # physical modes neither grow nor die within one sample interval
    pos = (angles > 1e-9) & (mags < 1.002) & (mags > 0.01)
    if not np.any(pos):
        return np.array([]), 0.0
    freqs = angles[pos] / dt

    # amplitude of each exponential, to rank candidate frequencies
    zsel = z[pos]
    j = np.arange(1, n + 1)
    vander = zsel[None, :] ** j[:, None]
    amps, *_ = np.linalg.lstsq(np.column_stack([vander.real, vander.imag]),
                               values, rcond=None)
    weight = np.hypot(amps[: len(zsel)], amps[len(zsel):])
    order = np.argsort(weight)[::-1][:n_modes]
    freqs = np.sort(freqs[order])
    decay = float(np.mean(-np.log(np.clip(mags[pos][order], 1e-12, None)) / dt))
    return freqs, max(decay, 0.0)


def _envelope_decay(times, values) -> float:
    """Crude global decay-rate estimate from the RMS of the two half-windows."""
    n = len(values)
    half = n // 2
    r1 = np.sqrt(np.mean(values[:half] ** 2))
    r2 = np.sqrt(np.mean(values[half:] ** 2))
    if r1 <= 0 or r2 <= 0:
        return 0.0
    span = times[half:].mean() - times[:half].mean()
    return max(float(np.log(r1 / r2) / span), 0.0)


def greedy_cosine_seeds(times, values, n_modes: int, dc: bool, decay: float,
                        n_grid: int = 400, exclusion: float = 0.25) -> list:
    """Orthogonal matching pursuit over a dense damped-cosine dictionary.

    Picks frequencies one at a time by largest residual reduction, with a
    joint linear refit after each pick. Coarse (grid-limited) but far more
    noise-tolerant than root-finding estimators when a slow mode covers
    only a fraction of a cycle.
    """
    dt = times[1] - times[0]
    nyquist = math.pi / dt
    grid = np.linspace(nyquist / n_grid, nyquist * 0.99, n_grid)
    env = np.exp(-decay * times)
    dictionary = np.cos(np.outer(times, grid)) * env[:, None]
    norms = (dictionary ** 2).sum(axis=0)

    chosen: list = []
    resid = values.copy()
    for _ in range(n_modes):
        scores = (dictionary.T @ resid) ** 2 / norms
        for w in chosen:
            scores[np.abs(grid - w) < exclusion] = -1.0
        chosen.append(float(grid[int(np.argmax(scores))]))
        cols = [np.cos(w * times) * env for w in chosen]
        if dc:
            cols.append(env)
        design = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(design, values, rcond=None)
        resid = values - design @ coef
    return sorted(chosen)


def cosine_prony(values: np.ndarray, dt: float, n_modes: int, dc: bool = False):
    """Frequency estimates for undamped cosine sums on the grid t_j = j dt.

    A sum of m cosines sampled at integer multiples of dt satisfies the
    symmetric recurrence sum_{k=0..m} c_k (s_{j+k} + s_{j-k}) = 0 whose
    characteristic polynomial, written in the Chebyshev basis, has roots
    cos(w_k dt). Needs only 3m+1 samples, well below the matrix-pencil
    requirement, which is what makes ten-point windows workable.
    """
    n = len(values)
    m = n_modes + (1 if dc else 0)  # a constant term is the w=0 mode
    if m == 0 or n - 2 * m < m:
        return []
    rows = np.empty((n - 2 * m, m))
    rhs = np.empty(n - 2 * m)
    for i, j in enumerate(range(m, n - m)):
        rows[i, 0] = 2.0 * values[j]
        for k in range(1, m):
            rows[i, k] = values[j + k] + values[j - k]
        rhs[i] = -(values[j + m] + values[j - m])
    coef, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    cheb = np.concatenate([coef, [1.0]])
    roots = np.polynomial.chebyshev.chebroots(cheb)
    roots = roots[np.abs(roots.imag) < 1e-6].real
    roots = np.clip(roots[np.abs(roots) <= 1.0 + 1e-9], -1.0, 1.0)
    thetas = np.sort(np.arccos(roots))  # ascending; a dc mode lands at 0
    out: list = []
    for th in thetas:
        w = float(th / dt)
        if th > 1e-9 and all(abs(w - q) > 1e-9 for q in out):
            out.append(w)
    return out[:n_modes]


def _periodogram_peaks(times, values, n_modes, oversample=16):
    t_max = times[-1]
    dt = times[1] - times[0]
    nyquist = math.pi / dt
    n_grid = oversample * len(values)
    omega = np.linspace(nyquist / n_grid, nyquist, n_grid)
    power = np.abs(np.exp(-1j * omega[:, None] * times[None, :]) @ values)

    interior = (power[1:-1] > power[:-2]) & (power[1:-1] >= power[2:])
    idx = np.nonzero(interior)[0] + 1
    idx = idx[np.argsort(power[idx])[::-1]]

    # greedy pick with a separation of about half a coarse Fourier bin
    min_sep = 0.45 * 2.0 * math.pi / t_max
    picked: list = []
    for i in idx:
        w = omega[i]
        if all(abs(w - q) > min_sep for q in picked):
            picked.append(float(w))
        if len(picked) == n_modes:
            break
    return sorted(picked)


def _linear_amplitudes(times, values, freqs, dc, damping):
    cols = [np.cos(w * times) * np.exp(-damping * times) for w in freqs]
    if dc:
        cols.append(np.exp(-damping * times))
    design = np.column_stack(cols) if cols else np.zeros((len(times), 0))
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    amps = coef[: len(freqs)]
    dc_val = float(coef[-1]) if dc else 0.0
    return amps, dc_val


def _seed_residual(times, values, freqs, dc, damping):
    amps, dc_val = _linear_amplitudes(times, values, freqs, dc, damping)
    cols = [np.cos(w * times) * np.exp(-damping * times) for w in freqs]
    if dc:
        cols.append(np.exp(-damping * times))
    design = np.column_stack(cols)
    coef = np.concatenate([amps, [dc_val]]) if dc else amps
    return float(np.linalg.norm(design @ coef - values)), amps, dc_val


def initial_guess(series: SampleSeries, n_modes: int, dc: bool = False,
                  damped: bool = False) -> ModeSeeds:
    """Seed frequencies/amplitudes for the nonlinear fit.

    Candidate frequency sets come from periodogram peak picking, a
    matrix-pencil estimate, the cosine recurrence, and matching pursuit,
    the last two over a small grid of trial decay rates when the fit is
    damped; the candidate with the smallest linear-least-squares residual
    at fixed frequencies wins. Flagged when no source yields the
    requested number of distinct frequencies (the remainder is padded).
    """
    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.values, dtype=float)
    if n_modes < 0:
        raise ValueError("n_modes must be >= 0")
    if len(values) < 2 * n_modes + 2:
        raise ValueError(f"series of length {len(values)} is too short "
                         f"for {n_modes} modes")
    if n_modes == 0:
        return ModeSeeds((), (), float(values.mean()), 0.0, False)

    dt = times[1] - times[0]
    centred = values - values.mean() if dc else values
    pg_freqs = _periodogram_peaks(times, centred, n_modes)
    pc_freqs, pc_decay = matrix_pencil(values, dt, n_modes, dc)

    # the envelope estimate is only a scale; scanning multiples of it and
    # letting the linear-LS residual decide is what makes damped seeding
    # robust (the recurrence is exact only at the true decay)
    if damped:
        env = _envelope_decay(times, values)
        max_decay = 20.0 / times[-1]
        decays = {0.0, min(pc_decay, max_decay)}
        decays.update(min(f * env, max_decay) for f in (0.3, 0.6, 1.0, 1.5))
    else:
        decays = {0.0}

    candidates = []  # (frequencies, damping seed)
    all_freq_sources = [pg_freqs, pc_freqs]
    for decay in sorted(decays):
        cp = cosine_prony(values * np.exp(decay * times), dt, n_modes, dc)
        all_freq_sources.append(cp)
        if len(cp) == n_modes:
            candidates.append((list(cp), decay))
        gd = greedy_cosine_seeds(times, values, n_modes, dc, decay)
        all_freq_sources.append(gd)
        if len(set(np.round(gd, 9))) == n_modes:
            candidates.append((list(gd), decay))
    if len(pc_freqs) == n_modes:
        candidates.append((list(pc_freqs), min(pc_decay, 20.0 / times[-1]) if damped else 0.0))
    if len(pg_freqs) == n_modes:
        candidates.append((list(pg_freqs), min(decays) if damped else 0.0))

    if not candidates:
        # merge what the sources found, then pad; the fit is flagged
        merged: list = []
        for source in all_freq_sources:
            for w in source:
                if all(abs(w - q) > 1e-6 for q in merged):
                    merged.append(float(w))
        merged = sorted(merged)[:n_modes]
        base = merged[-1] if merged else math.pi / dt / 2.0
        while len(merged) < n_modes:
            merged.append(base * (1.0 + 0.05 * (len(merged) + 1)))
        candidates.append((sorted(merged), _envelope_decay(times, values) if damped else 0.0))
        flagged = True
    else:
        flagged = False

    best = None
    for freqs, decay in candidates:
        resid, amps, dc_val = _seed_residual(times, values, np.asarray(freqs), dc, decay)
        if best is None or resid < best[0]:
            best = (resid, freqs, amps, dc_val, decay)
    _, freqs, amps, dc_val, damping0 = best
    return ModeSeeds(tuple(freqs), tuple(amps), dc_val, damping0, flagged)


def _unpack(params, n_modes, dc, damped):
    amps = params[:n_modes]
    freqs = params[n_modes: 2 * n_modes]
    i = 2 * n_modes
    dc_val = params[i] if dc else 0.0
    damping = params[i + (1 if dc else 0)] if damped else 0.0
    return amps, freqs, dc_val, damping


def _model(params, times, n_modes, dc, damped):
    amps, freqs, dc_val, damping = _unpack(params, n_modes, dc, damped)
    y = np.cos(times[:, None] * freqs[None, :]) @ amps + dc_val
    if damped:
        y = y * np.exp(-damping * times)
    return y


def _jacobian(params, times, n_modes, dc, damped, sigma):
    amps, freqs, dc_val, damping = _unpack(params, n_modes, dc, damped)
    env = np.exp(-damping * times) if damped else np.ones_like(times)
    cos_block = np.cos(times[:, None] * freqs[None, :]) * env[:, None]
    dw_block = -amps[None, :] * times[:, None] * np.sin(times[:, None] * freqs[None, :]) \
        * env[:, None]
    cols = [cos_block, dw_block]
    if dc:
        cols.append(env[:, None])
    if damped:
        y = _model(params, times, n_modes, dc, damped)
        cols.append(-(times * y)[:, None])
    jac = np.hstack(cols)
    return jac / sigma[:, None]


def fit_cosines(series: SampleSeries, n_modes: int, damped: bool = False,
                dc: bool = False) -> HarmonicFit:
    """Nonlinear least-squares fit of the cosine-sum model.

    Weighted by 1/std_error^2 when the series carries uncertainties.
    Runs a multi-start over perturbed frequency seeds (best residual wins,
    ties broken by the smaller frequency norm). A non-converged or
    negative-amplitude result is returned flagged, never silently.
    """
    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.values, dtype=float)
    stds = np.asarray(series.std_errors, dtype=float)
    sigma = stds if np.all(stds > 0) else np.ones_like(values)

    seeds = initial_guess(series, n_modes, dc=dc, damped=damped)
    dt = times[1] - times[0] if len(times) > 1 else times[0]
    nyquist = math.pi / dt

    def residual(params):
        return (_model(params, times, n_modes, dc, damped) - values) / sigma

    def jac(params):
        return _jacobian(params, times, n_modes, dc, damped, sigma)

    n_params = 2 * n_modes + (1 if dc else 0) + (1 if damped else 0)
    max_damping = 20.0 / times[-1]  # stronger decay leaves no signal to fit
    lower = np.concatenate([np.full(n_modes, -np.inf), np.full(n_modes, 1e-12),
                            [-np.inf] if dc else [], [0.0] if damped else []])
    upper = np.concatenate([np.full(n_modes, np.inf), np.full(n_modes, nyquist),
                            [np.inf] if dc else [], [max_damping] if damped else []])

    gen = np.random.default_rng(_MULTISTART_SEED)
    starts = []
    base_f = np.asarray(seeds.frequencies, dtype=float)
    base_a = np.asarray(seeds.amplitudes, dtype=float)
    for k in range(_N_STARTS):
        f = base_f if k == 0 else base_f * (1.0 + gen.uniform(-0.1, 0.1, n_modes))
        f = np.clip(np.sort(f), 1e-9, nyquist)
        a, dc0 = (base_a, seeds.dc) if k == 0 else _linear_amplitudes(
            times, values, f, dc, seeds.damping)
        x0 = np.concatenate([a, f, [dc0] if dc else [], [seeds.damping] if damped else []])
        starts.append(np.clip(x0, lower, upper))

    best = None
    for x0 in starts:
        res = least_squares(residual, x0, jac=jac, bounds=(lower, upper),
                            xtol=1e-10, ftol=1e-12, gtol=1e-12, max_nfev=200)
        key = (res.cost, float(np.linalg.norm(res.x[n_modes: 2 * n_modes])))
        if best is None or key < best[0]:
            best = (key, res)
    res = best[1]

    amps, freqs, dc_val, damping = _unpack(res.x, n_modes, dc, damped)
    order = np.argsort(freqs)
    amps, freqs = amps[order], freqs[order]

    flags = list(seeds.multiplicity_flagged * ("seed-multiplicity",))
    converged = res.status > 0
    if not converged:
        flags.append("non-convergence")
    if np.any(amps < -1e-6):
        flags.append("negative-amplitude")
    if n_modes and np.max(np.abs(amps)) < 1e-12 and abs(dc_val) < 1e-12:
        flags.append("degenerate")
    if n_modes > 1 and np.min(np.diff(freqs)) < 1e-9:
        flags.append("frequency-collision")

    fitted = _model(res.x, times, n_modes, dc, damped)
    residual_rms = float(np.sqrt(np.mean((fitted - values) ** 2)))

    covariance = None
    try:
        jtj = res.jac.T @ res.jac
        dof = max(len(values) - n_params, 1)
        scale = 2.0 * res.cost / dof
        cov = scale * np.linalg.pinv(jtj)
        # reorder to the sorted-frequency parameter layout
        perm = np.concatenate([order, n_modes + order,
                               np.arange(2 * n_modes, n_params)]).astype(int)
        covariance = cov[np.ix_(perm, perm)]
    except np.linalg.LinAlgError:
        flags.append("covariance-failure")

    return HarmonicFit(amps, freqs, float(dc_val), float(damping), residual_rms,
                       covariance, converged, int(res.nfev), tuple(flags))
