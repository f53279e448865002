import math

import numpy as np
import pytest

from fluxtomo import flux
from fluxtomo.fitting import fit_cosines
from fluxtomo.hilbert import SampleSeries, protocol_series
from fluxtomo.inversion import (EstimationResult, IllPosedSpectrumError,
                                deinterleave_h2, lanczos_reconstruct,
                                refine_couplings, spectral_data_from_fit,
                                write_estimation_csv)
from fluxtomo.model import NoiseModel, SamplingPlan, xx_chain

from conftest import random_couplings


class FitStub:
    def __init__(self, amplitudes, frequencies, dc=0.0, damping=0.0):
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.frequencies = np.asarray(frequencies, dtype=float)
        self.dc = dc
        self.damping = damping


def test_two_spin_spectral_data():
    spectrum = spectral_data_from_fit(FitStub([1.0], [2.0]), 2)
    assert spectrum.frequencies == pytest.approx((1.0,))
    assert spectrum.weights == pytest.approx((1.0,))


def test_case1_fit_maps_back_to_flux_spectrum(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(), SamplingPlan(seed=5))
    fit = fit_cosines(series, 3)
    spectrum = spectral_data_from_fit(fit, 6)
    reference = flux.spectrum_from_couplings(case1)
    np.testing.assert_allclose(spectrum.frequencies, reference.frequencies, atol=1e-6)
    np.testing.assert_allclose(spectrum.weights, reference.weights, atol=1e-6)


def test_negative_amplitude_is_ill_posed():
    with pytest.raises(IllPosedSpectrumError, match="nonpositive"):
        spectral_data_from_fit(FitStub([0.6, -0.05, 0.45], [1.0, 2.0, 3.0]), 6)


def test_wrong_mode_count_is_ill_posed():
    with pytest.raises(IllPosedSpectrumError, match="expected"):
        spectral_data_from_fit(FitStub([1.0], [2.0]), 6)


def test_two_spin_reconstruction():
    recon = lanczos_reconstruct(flux.FluxSpectrum((1.0,), (1.0,)), 2)
    np.testing.assert_allclose(recon.couplings, [1.0], atol=1e-12)
    assert recon.diagonal_residual < 1e-12


def test_three_spin_closed_form_reconstruction():
    spectrum = flux.FluxSpectrum((math.sqrt(2.0),), (0.5,), dc_weight=0.5)
    recon = lanczos_reconstruct(spectrum, 3)
    np.testing.assert_allclose(recon.couplings, [1.0, 1.0], atol=1e-12)


def test_case1_round_trip_through_reconstruction(case1):
    spectrum = flux.spectrum_from_couplings(case1)
    recon = lanczos_reconstruct(spectrum, 6)
    np.testing.assert_allclose(recon.couplings, case1, atol=1e-8)
    assert recon.diagonal_residual < 1e-8


def test_pure_math_round_trip_many_chains():
    gen = np.random.default_rng(6)
    for _ in range(40):
        n = int(gen.integers(2, 11))
        b = np.asarray(random_couplings(gen, n))
        recon = lanczos_reconstruct(flux.spectrum_from_couplings(b), n)
        np.testing.assert_allclose(recon.couplings, b, atol=1e-10)
        assert recon.diagonal_residual < 1e-8


def test_diagonal_residual_grows_smoothly_with_perturbation(case1):
    spectrum = flux.spectrum_from_couplings(case1)
    residuals = []
    for eps in (0.0, 1e-4, 1e-3, 1e-2):
        freqs = tuple(f * (1.0 + eps) ** (i + 1) for i, f in enumerate(spectrum.frequencies))
        w = np.asarray(spectrum.weights)
        w = tuple((w + eps * np.array([1.0, -0.6, -0.4])) / (1.0 + 0.0 * eps))
        recon = lanczos_reconstruct(flux.FluxSpectrum(freqs, w), 6)
        residuals.append(recon.diagonal_residual)
    assert residuals[0] < 1e-10
    assert all(residuals[i] <= residuals[i + 1] * 1.5 + 1e-9 for i in range(3))
    assert residuals[-1] < 0.5  # no cliff at the percent level


def test_coupling_scaling_covariance(case1):
    c = 1.7
    base = flux.spectrum_from_couplings(case1)
    scaled = flux.spectrum_from_couplings(tuple(c * j for j in case1))
    np.testing.assert_allclose(scaled.frequencies, c * np.asarray(base.frequencies),
                               atol=1e-12)
    np.testing.assert_allclose(scaled.weights, base.weights, atol=1e-12)
    recon = lanczos_reconstruct(scaled, 6)
    np.testing.assert_allclose(recon.couplings, c * np.asarray(case1), atol=1e-9)


def test_refinement_is_a_fixed_point_on_exact_data(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(), SamplingPlan(seed=5))
    b0 = np.asarray(case1)
    result = refine_couplings(series, b0)
    assert result.improved
    np.testing.assert_allclose(result.couplings, b0, atol=1e-9)


def test_refinement_recovers_from_perturbed_start(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(), SamplingPlan(seed=5))
    b0 = np.asarray(case1).copy()
    b0[2] *= 1.05
    result = refine_couplings(series, b0)
    np.testing.assert_allclose(result.couplings, case1, atol=1e-7)


def test_refinement_never_degrades_noisy_start(case1):
    series = protocol_series(xx_chain(case1), NoiseModel(),
                             SamplingPlan(n_meas=500, seed=3))
    fit = fit_cosines(series, 3)
    recon = lanczos_reconstruct(spectral_data_from_fit(fit, 6), 6)
    initial = refine_couplings(series, recon.couplings, damped=False)
    assert initial.residual_rms <= np.sqrt(np.mean(
        (flux.alpha1(series.times, flux.spectrum_from_couplings(recon.couplings))
         - series.values) ** 2 / np.where(series.std_errors > 0,
                                          series.std_errors ** 2, 1.0))) + 1e-12


def test_deinterleave_identity_for_equal_sequences():
    b = np.array([1.0, 1.2, 0.8])
    j_x, j_y = deinterleave_h2(b, b)
    np.testing.assert_array_equal(j_x, b)
    np.testing.assert_array_equal(j_y, b)


def test_deinterleave_inverts_alternation():
    a = np.array([0.9, 1.1, 1.3])
    c = np.array([0.6, 0.8, 1.4])
    b_x = np.array([c[0], a[1], c[2]])
    b_y = np.array([a[0], c[1], a[2]])
    j_x, j_y = deinterleave_h2(b_x, b_y)
    np.testing.assert_array_equal(j_x, a)
    np.testing.assert_array_equal(j_y, c)


def test_deinterleave_round_trip_with_effective_sequences():
    gen = np.random.default_rng(9)
    for n in (2, 5, 8):
        from fluxtomo.model import xy_chain

        jx = np.asarray(random_couplings(gen, n))
        jy = np.asarray(random_couplings(gen, n))
        seqs = flux.effective_sequences(xy_chain(jx, jy))
        back_x, back_y = deinterleave_h2(seqs.b_x, seqs.b_y)
        np.testing.assert_array_equal(back_x, jx)
        np.testing.assert_array_equal(back_y, jy)


def test_estimation_result_errors_and_csv(tmp_path, case1):
    hat = np.asarray(case1) * (1.0 + np.array([0.01, -0.02, 0.0, 0.005, -0.01]))
    result = EstimationResult("J", hat, np.asarray(case1))
    assert result.max_rel_error == pytest.approx(0.02)
    assert result.mean_rel_error == pytest.approx(np.mean([0.01, 0.02, 0.0, 0.005, 0.01]))
    path = tmp_path / "result.csv"
    write_estimation_csv(result, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,J_true,J_hat,rel_error"
    assert len(lines) == 6
