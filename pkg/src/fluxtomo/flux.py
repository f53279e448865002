"""Exact coefficient dynamics of the first-site signal.

For the chain models handled here, the Heisenberg evolution of the
first-site X (or Y) operator closes on an N-dimensional linear system.
Its generator is a real skew-symmetric tridiagonal matrix M built from
the couplings, entries M[j, j+1] = (-1)^j b_j (1-based j), and the
measured signal is the (1,1) entry of exp(2 t M):

    value(t) = dc + sum_k w_k cos(2 lambda_k t)

where i*lambda_k are the eigenvalues of M and the weights w_k are squared
first components of the eigenvectors (the +/- pair merged; a zero mode
appears for odd N only). The decomposition is obtained from the
equivalent symmetric tridiagonal matrix with off-diagonals |b_j|, which
is diagonally similar to -i M and numerically well behaved.

A truncated series evaluation driven by the underlying two-term
recurrence is kept as an independent cross-check of the spectral path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HamiltonianSpec

#: frequencies closer than this (in units of J) are merged into one mode
DEGENERACY_GAP = 1e-9


class EigensolverError(RuntimeError):
    """The tridiagonal eigensolver produced residuals above tolerance."""


class SpuriousTermsError(ValueError):
    """The closed-form coefficient dynamics requires a spurious-free chain."""


@dataclass(frozen=True)
class FluxMatrix:
    """Skew-symmetric tridiagonal generator of the coefficient dynamics."""

    dim: int
    off_diagonals: tuple

    def __post_init__(self):
        object.__setattr__(self, "off_diagonals",
                           tuple(float(b) for b in self.off_diagonals))
        if len(self.off_diagonals) != self.dim - 1:
            raise ValueError(f"expected {self.dim - 1} off-diagonals, "
                             f"got {len(self.off_diagonals)}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.off_diagonals, dtype=float)

    def to_dense(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for j, b in enumerate(self.off_diagonals, start=1):  # 1-based row index
            m[j - 1, j] = (-1.0) ** j * b
            m[j, j - 1] = -m[j - 1, j]
        return m


@dataclass(frozen=True)
class FluxSpectrum:
    """Frequencies and first-component weights of a FluxMatrix.

    value(t) = dc_weight + sum_k weights[k] * cos(2 * frequencies[k] * t).
    """

    frequencies: tuple
    weights: tuple
    dc_weight: float = 0.0
    merged_degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def frequency_array(self) -> np.ndarray:
        return np.asarray(self.frequencies, dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class EffectiveSequences:
    """Per-measurement-basis effective coupling sequences."""

    b_x: tuple
    b_y: tuple


def _reject_spurious(spec: HamiltonianSpec, op: str):
    if spec.spurious is not None:
        raise SpuriousTermsError(
            f"{op}: closed-form dynamics is exact only without spurious terms")


def effective_sequences(spec: HamiltonianSpec) -> EffectiveSequences:
    """Coupling sequence driving each measurement basis.

    For the xx variant both bases see the plain couplings. For the xy
    variant the X-basis signal depends on JY at odd link index and JX at
    even link index (1-based), and the Y-basis signal on the complement.
    """
    _reject_spurious(spec, "effective_sequences")
    jx = spec.couplings.couplings
    if spec.variant == "xx":
        return EffectiveSequences(jx, jx)
    jy = spec.couplings_y.couplings
    b_x = tuple(jy[i] if i % 2 == 0 else jx[i] for i in range(len(jx)))
    b_y = tuple(jx[i] if i % 2 == 0 else jy[i] for i in range(len(jx)))
    return EffectiveSequences(b_x, b_y)


def build_flux_matrix(spec: HamiltonianSpec, basis: str = "x") -> FluxMatrix:
    """Flux matrix for the signal measured in the given basis."""
    _reject_spurious(spec, "build_flux_matrix")
    seqs = effective_sequences(spec)
    if basis == "x":
        return FluxMatrix(spec.n_sites, seqs.b_x)
    if basis == "y":
        return FluxMatrix(spec.n_sites, seqs.b_y)
    raise ValueError(f"basis must be 'x' or 'y', got {basis!r}")


def _symmetric_eigh(m: FluxMatrix):
    n = m.dim
    t = np.zeros((n, n))
    absb = np.abs(m.array)
    idx = np.arange(n - 1)
    t[idx, idx + 1] = absb
    t[idx + 1, idx] = absb
    evals, evecs = np.linalg.eigh(t)
    scale = max(np.max(absb, initial=0.0), 1e-300)
    residual = np.max(np.abs(t @ evecs - evecs * evals))
    if residual > 1e-10 * max(scale, 1.0):
        raise EigensolverError(f"eigen-residual {residual:.3e} exceeds tolerance")
    return evals, evecs


def spectral_decompose(m: FluxMatrix) -> FluxSpectrum:
    """Frequencies and weights reproducing the first-site signal exactly."""
    evals, evecs = _symmetric_eigh(m)
    first_sq = evecs[0, :] ** 2

    n = m.dim
    half = n // 2
    # eigh returns ascending eigenvalues; the spectrum is symmetric about 0,
    # so position i pairs with n-1-i and the middle entry (odd n) is the
    # zero mode.
    freqs = evals[n - half:]
    weights = first_sq[n - half:] + first_sq[:half][::-1]
    dc = float(first_sq[half]) if n % 2 == 1 else 0.0

    order = np.argsort(freqs)
    freqs = freqs[order]
    weights = weights[order]

    merged = False
    out_f: list = []
    out_w: list = []
    for f, w in zip(freqs, weights):
        if out_f and f - out_f[-1] < DEGENERACY_GAP:
            out_w[-1] += w
            merged = True
        else:
            out_f.append(float(f))
            out_w.append(float(w))
    return FluxSpectrum(tuple(out_f), tuple(out_w), dc, merged)


def alpha1(t, spectrum: FluxSpectrum):
    """First-site signal value(s) at time(s) ``t`` from a spectrum."""
    t = np.asarray(t, dtype=float)
    w = spectrum.weight_array
    f = spectrum.frequency_array
    vals = spectrum.dc_weight + np.cos(2.0 * t[..., None] * f) @ w
    return float(vals) if vals.ndim == 0 else vals


def alpha1_series(t: float, m: FluxMatrix, order: int) -> float:
    """Truncated series evaluation of the first-site signal.

    Partial sum over l <= order of (2t)^l / l! times the first component
    of the coefficient recurrence

        d_j^(l) = (-1)^j [ b_{j-1} d_{j-1}^(l-1) + b_j d_{j+1}^(l-1) ]

    with b_0 = b_N = 0 and d_j^(0) = 1 for j = 1, else 0. Independent of
    the eigendecomposition path; the caller owns the truncation error.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    n = m.dim
    b = np.zeros(n + 1)
    b[1:n] = m.array  # b[j] = b_j, b[0] = b[n] = 0
    signs = (-1.0) ** np.arange(1, n + 1)

    d = np.zeros(n + 2)  # padded so d[j-1], d[j+1] are always in range
    d[1] = 1.0
    total = 1.0
    factor = 1.0  # (2t)^l / l!
    for level in range(1, order + 1):
        new = np.zeros(n + 2)
        j = np.arange(1, n + 1)
        new[1:n + 1] = signs * (b[j - 1] * d[j - 1] + b[j] * d[j + 1])
        d = new
        factor *= 2.0 * t / level
        total += factor * d[1]
    return float(total)


def _phase_similarity(m: FluxMatrix) -> np.ndarray:
    """Unitary diagonal D with M = D (i T) D^dagger, T symmetric tridiagonal
    with off-diagonals |b_j|."""
    n = m.dim
    d = np.ones(n, dtype=complex)
    for j, b in enumerate(m.off_diagonals, start=1):
        sign = -1.0 if b < 0 else 1.0
        d[j] = d[j - 1] * 1j * (-1.0) ** j * sign
    return d


def coefficient_vector(t: float, m: FluxMatrix) -> np.ndarray:
    """All N coefficients at time t, the first column of exp(2 t M).

    exp(2 t M) is orthogonal, so the result has unit norm for every t.
    """
    evals, evecs = _symmetric_eigh(m)
    d = _phase_similarity(m)
    # exp(2tM) e1 = D V exp(2it diag) V^T D^* e1, and D[0] = 1
    phases = np.exp(2j * t * evals)
    col = d * (evecs @ (phases * evecs[0, :]))
    if np.max(np.abs(col.imag)) > 1e-10:
        raise EigensolverError("coefficient vector has non-real entries")
    return col.real


def spectrum_from_couplings(couplings) -> FluxSpectrum:
    """Spectral decomposition of the chain with the given couplings."""
    couplings = tuple(float(b) for b in couplings)
    return spectral_decompose(FluxMatrix(len(couplings) + 1, couplings))
