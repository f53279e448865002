import math

import numpy as np
import pytest

from fluxtomo import flux
from fluxtomo.fitting import (cosine_prony, fit_cosines, initial_guess,
                              matrix_pencil, select_mode_count)
from fluxtomo.hilbert import SampleSeries, protocol_series
from fluxtomo.model import EXACT, NoiseModel, SamplingPlan, xx_chain


def make_series(values, times, stds=None, n_meas=EXACT):
    values = np.asarray(values, dtype=float)
    stds = np.zeros_like(values) if stds is None else np.asarray(stds)
    return SampleSeries(np.asarray(times), values, stds, "x", n_meas, 1, 0)


def grid(n=25, t_max=math.pi):
    return np.arange(1, n + 1) * t_max / n


def test_mode_count_follows_chain_length():
    assert select_mode_count(6) == (3, False)
    assert select_mode_count(2) == (1, False)
    assert select_mode_count(3) == (1, True)
    assert select_mode_count(9) == (4, True)


def test_single_cosine_seed():
    t = grid()
    seeds = initial_guess(make_series(np.cos(2.0 * t), t), 1)
    assert len(seeds.frequencies) == 1
    assert seeds.frequencies[0] == pytest.approx(2.0, rel=0.05)


def test_three_cosine_seeds_within_five_percent():
    t = grid()
    v = 0.3 * np.cos(2.0 * t) + 0.5 * np.cos(5.0 * t) + 0.2 * np.cos(7.5 * t)
    seeds = initial_guess(make_series(v, t), 3)
    assert np.allclose(sorted(seeds.frequencies), [2.0, 5.0, 7.5], rtol=0.05)


def test_constant_series_yields_dc_only_seed():
    t = grid()
    seeds = initial_guess(make_series(np.ones_like(t), t), 0, dc=True)
    assert seeds.frequencies == ()
    assert seeds.dc == pytest.approx(1.0)


def test_initial_guess_rejects_too_short_series():
    t = grid(6)
    with pytest.raises(ValueError, match="too short"):
        initial_guess(make_series(np.cos(t), t), 3)


def test_matrix_pencil_exact_on_damped_cosines():
    t = grid()
    w = np.array([0.514, 2.681, 4.009])
    a = np.array([0.571, 0.325, 0.104])
    v = (np.cos(np.outer(t, w)) @ a) * np.exp(-0.4 * t)
    freqs, decay = matrix_pencil(v, t[1] - t[0], 3)
    np.testing.assert_allclose(freqs, w, atol=1e-8)
    assert decay == pytest.approx(0.4, abs=1e-8)


def test_cosine_prony_exact_at_ten_points():
    t = grid(10)
    w = np.array([0.514, 2.681, 4.009])
    v = np.cos(np.outer(t, w)) @ np.array([0.571, 0.325, 0.104])
    freqs = cosine_prony(v, t[1] - t[0], 3)
    np.testing.assert_allclose(freqs, w, atol=1e-6)


def test_fit_round_trip_case1(case1):
    spectrum = flux.spectrum_from_couplings(case1)
    series = protocol_series(xx_chain(case1), NoiseModel(), SamplingPlan(seed=5))
    fit = fit_cosines(series, 3)
    assert fit.converged
    assert fit.residual_rms < 1e-8
    np.testing.assert_allclose(fit.frequencies, 2.0 * np.asarray(spectrum.frequencies),
                               atol=1e-6)
    np.testing.assert_allclose(fit.amplitudes, spectrum.weights, atol=1e-6)


def test_damped_fit_recovers_rate_without_moving_modes(case1):
    spectrum = flux.spectrum_from_couplings(case1)
    t = grid()
    clean = flux.alpha1(t, spectrum)
    fit = fit_cosines(make_series(clean * np.exp(-0.4 * t), t), 3, damped=True)
    assert fit.damping == pytest.approx(0.4, abs=1e-6)
    np.testing.assert_allclose(fit.frequencies, 2.0 * np.asarray(spectrum.frequencies),
                               atol=1e-6)
    np.testing.assert_allclose(fit.amplitudes, spectrum.weights, atol=1e-6)


def test_zero_series_is_flagged_degenerate():
    t = grid()
    fit = fit_cosines(make_series(np.zeros_like(t), t), 2)
    assert "degenerate" in fit.flags
    np.testing.assert_allclose(fit.amplitudes, 0.0, atol=1e-10)


def test_time_rescaling_moves_frequencies_only(case1):
    spectrum = flux.spectrum_from_couplings(case1)
    scale = 2.5
    t = grid()
    fit_base = fit_cosines(make_series(flux.alpha1(t, spectrum), t), 3)
    fit_scaled = fit_cosines(make_series(flux.alpha1(t, spectrum), t * scale), 3)
    np.testing.assert_allclose(fit_scaled.frequencies, fit_base.frequencies / scale,
                               atol=1e-9)
    np.testing.assert_allclose(fit_scaled.amplitudes, fit_base.amplitudes, atol=1e-9)


def test_amplitudes_sum_to_initial_value(case1):
    for n_sites, js in ((6, case1), (5, (1.3, 0.7, 1.1, 0.9))):
        series = protocol_series(xx_chain(js), NoiseModel(), SamplingPlan(seed=8))
        n_modes, dc = select_mode_count(n_sites)
        fit = fit_cosines(series, n_modes, dc=dc)
        assert np.sum(fit.amplitudes) + fit.dc == pytest.approx(1.0, abs=1e-6)


def test_round_trip_for_separated_spectra():
    """Any spectrum with decent gaps and weights is recovered exactly."""
    gen = np.random.default_rng(12)
    accepted = 0
    while accepted < 12:
        n = int(gen.integers(4, 9))
        js = tuple(gen.uniform(0.5, 1.5, n - 1))
        spectrum = flux.spectrum_from_couplings(js)
        freqs = np.asarray(spectrum.frequencies)
        gaps = np.diff(np.concatenate([[0.0], freqs]))
        if np.min(gaps) <= 0.2 or np.min(spectrum.weights) <= 0.02:
            continue
        if n % 2 == 1 and spectrum.dc_weight <= 0.02:
            continue
        accepted += 1
        t = grid()
        series = make_series(flux.alpha1(t, spectrum), t)
        n_modes, dc = select_mode_count(n)
        fit = fit_cosines(series, n_modes, dc=dc)
        np.testing.assert_allclose(fit.frequencies, 2.0 * freqs, atol=1e-6)
        np.testing.assert_allclose(fit.amplitudes, spectrum.weights, atol=1e-6)


def test_parameter_errors_shrink_with_shots(case1):
    """Frequency scatter should drop by about 2x when shots quadruple."""
    spec = xx_chain(case1)
    true_freqs = 2.0 * np.asarray(flux.spectrum_from_couplings(case1).frequencies)
    scatter = {}
    for n_meas in (256, 1024):
        devs = []
        for seed in range(20):
            series = protocol_series(spec, NoiseModel(),
                                     SamplingPlan(n_meas=n_meas, seed=seed))
            fit = fit_cosines(series, 3)
            devs.append(np.linalg.norm(np.sort(fit.frequencies) - true_freqs))
        scatter[n_meas] = np.mean(devs)
    ratio = scatter[256] / scatter[1024]
    assert 1.4 < ratio < 2.6


def test_weighted_fit_uses_uncertainties(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(),
                             SamplingPlan(n_meas=2000, seed=4))
    fit = fit_cosines(series, 3)
    assert fit.converged
    assert fit.covariance is not None
    assert fit.covariance.shape == (6, 6)


def test_fit_report_json_shape(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(), SamplingPlan(seed=5))
    doc = fit_cosines(series, 3).to_json_dict()
    assert set(doc) == {"modes", "dc", "damping", "residual_rms", "iterations",
                        "converged", "flags"}
    assert len(doc["modes"]) == 3
    assert set(doc["modes"][0]) == {"amplitude", "frequency"}
