import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fluxtomo.flux import (FluxMatrix, SpuriousTermsError, alpha1,
                           alpha1_series, build_flux_matrix,
                           coefficient_vector, effective_sequences,
                           spectral_decompose, spectrum_from_couplings)
from fluxtomo.model import SpuriousTerms, xx_chain, xy_chain

from conftest import random_couplings

# case-1 spectrum frozen from an independent complex eigendecomposition of
# the dense skew matrix (np.linalg.eig), reproduced inline below
CASE1_FREQS = (0.25697793862280405, 1.3403178254695702, 2.0042730517047085)
CASE1_WEIGHTS = (0.5707606880656054, 0.3249456875212079, 0.10429362441318665)


def dense_skew_oracle(b):
    """Independent spectral oracle: eig of the dense skew matrix."""
    n = len(b) + 1
    m = np.zeros((n, n))
    for j in range(1, n):
        m[j - 1, j] = (-1.0) ** j * b[j - 1]
        m[j, j - 1] = -m[j - 1, j]
    evals, evecs = np.linalg.eig(m)
    lam = evals.imag
    freqs = np.sort(lam[lam > 1e-12])
    weights = [float(np.sum(np.abs(evecs[0, np.abs(np.abs(lam) - f) < 1e-10]) ** 2))
               for f in freqs]
    dc = float(np.sum(np.abs(evecs[0, np.abs(lam) < 1e-12]) ** 2))
    return freqs, np.array(weights), dc


def test_two_spin_matrix_entries():
    m = build_flux_matrix(xx_chain((1.0,)))
    np.testing.assert_array_equal(m.to_dense(), [[0.0, -1.0], [1.0, 0.0]])


def test_case1_off_diagonals_alternate_signs(case1):
    dense = build_flux_matrix(xx_chain(case1)).to_dense()
    upper = np.diag(dense, 1)
    np.testing.assert_allclose(np.abs(upper), case1)
    assert np.all(np.sign(upper) == [-1, 1, -1, 1, -1])
    np.testing.assert_array_equal(dense, -dense.T)


def test_xy_two_spin_basis_rule():
    spec = xy_chain((0.7,), (1.3,))
    assert build_flux_matrix(spec, "x").off_diagonals == (1.3,)
    assert build_flux_matrix(spec, "y").off_diagonals == (0.7,)


def test_spurious_specs_are_rejected():
    spec = xx_chain((1.0, 1.0), spurious=SpuriousTerms((0.1, 0.0, -0.1), (0.0, 0.0)))
    with pytest.raises(SpuriousTermsError):
        build_flux_matrix(spec)
    with pytest.raises(SpuriousTermsError):
        effective_sequences(spec)


def test_two_spin_spectrum():
    s = spectral_decompose(FluxMatrix(2, (1.0,)))
    assert s.frequencies == pytest.approx((1.0,))
    assert s.weights == pytest.approx((1.0,))
    assert s.dc_weight == 0.0
    assert alpha1(math.pi / 4.0, s) == pytest.approx(0.0, abs=1e-12)


def test_three_spin_uniform_spectrum():
    s = spectral_decompose(FluxMatrix(3, (1.0, 1.0)))
    assert s.dc_weight == pytest.approx(0.5, abs=1e-12)
    assert s.frequencies == pytest.approx((math.sqrt(2.0),))
    assert s.weights == pytest.approx((0.5,))
    # value(t) = 1/2 + cos(2 sqrt2 t)/2 vanishes at pi / (2 sqrt2)
    assert alpha1(math.pi / (2.0 * math.sqrt(2.0)), s) == pytest.approx(0.0, abs=1e-12)


def test_case1_spectrum_against_independent_oracle(case1):
    s = spectral_decompose(build_flux_matrix(xx_chain(case1)))
    assert s.frequencies == pytest.approx(CASE1_FREQS, abs=1e-12)
    assert s.weights == pytest.approx(CASE1_WEIGHTS, abs=1e-12)
    freqs, weights, dc = dense_skew_oracle(case1)
    assert s.frequencies == pytest.approx(freqs, abs=1e-10)
    assert s.weights == pytest.approx(weights, abs=1e-10)
    assert dc == pytest.approx(0.0, abs=1e-12)


def test_spectrum_weights_sum_to_one():
    gen = np.random.default_rng(4)
    for _ in range(20):
        n = int(gen.integers(2, 11))
        s = spectrum_from_couplings(random_couplings(gen, n))
        assert sum(s.weights) + s.dc_weight == pytest.approx(1.0, abs=1e-12)
        assert all(w >= 0 for w in s.weights)
        assert len(s.frequencies) == n // 2


def test_degenerate_frequencies_are_merged_and_flagged():
    # middle coupling zero decouples the chain; the +/-1 pair doubles up
    s = spectral_decompose(FluxMatrix(4, (1.0, 0.0, 1.0)))
    assert s.merged_degenerate
    assert s.frequencies == pytest.approx((1.0,))
    assert s.weights == pytest.approx((1.0,))


def test_alpha1_at_time_zero_is_one():
    gen = np.random.default_rng(0)
    for n in (2, 5, 8):
        s = spectrum_from_couplings(random_couplings(gen, n))
        assert alpha1(0.0, s) == pytest.approx(1.0, abs=1e-12)


def test_alpha1_two_spin_zero_crossing():
    s = spectrum_from_couplings((1.0,))
    assert alpha1(math.pi / 4, s) == pytest.approx(0.0, abs=1e-12)


def test_series_order_zero_and_one():
    m = FluxMatrix(4, (1.1, 0.9, 1.3))
    assert alpha1_series(0.7, m, 0) == 1.0
    # the l=1 contribution vanishes identically
    assert alpha1_series(0.7, m, 1) == 1.0


def test_series_two_spin_matches_closed_form():
    m = FluxMatrix(2, (1.0,))
    assert alpha1_series(math.pi, m, 40) == pytest.approx(math.cos(2 * math.pi), abs=1e-10)


def test_series_agrees_with_spectral_path():
    gen = np.random.default_rng(11)
    for _ in range(10):
        n = int(gen.integers(2, 8))
        b = random_couplings(gen, n)
        m = FluxMatrix(n, b)
        s = spectral_decompose(m)
        for t in np.linspace(0.1, math.pi, 5):
            assert alpha1_series(t, m, 60) == pytest.approx(alpha1(t, s), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0),
       st.floats(min_value=0.0, max_value=math.pi))
def test_coefficient_vector_is_normalized(n, seed, t):
    gen = np.random.default_rng(seed)
    m = FluxMatrix(n, random_couplings(gen, n))
    col = coefficient_vector(t, m)
    assert np.linalg.norm(col) == pytest.approx(1.0, abs=1e-10)


def test_coefficient_vector_matches_expm_oracle():
    gen = np.random.default_rng(3)
    for n in (2, 4, 5, 7):
        m = FluxMatrix(n, random_couplings(gen, n))
        for t in (0.3, 1.7):
            ref = scipy.linalg.expm(2.0 * t * m.to_dense())[:, 0]
            np.testing.assert_allclose(coefficient_vector(t, m), ref, atol=1e-12)


def test_effective_sequences_xx_degenerate(case1):
    seqs = effective_sequences(xx_chain(case1))
    assert seqs.b_x == case1
    assert seqs.b_y == case1


def test_effective_sequences_alternation_rule():
    a = (0.9, 1.1, 1.3)
    c = (0.6, 0.8, 1.4)
    seqs = effective_sequences(xy_chain(a, c))
    assert seqs.b_x == (c[0], a[1], c[2])
    assert seqs.b_y == (a[0], c[1], a[2])


def test_effective_sequences_equal_sets_reduce_to_xx():
    a = (0.9, 1.1, 1.3)
    seqs = effective_sequences(xy_chain(a, a))
    assert seqs.b_x == a
    assert seqs.b_y == a
