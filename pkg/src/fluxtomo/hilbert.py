"""Ground-truth simulator on the full 2^N Hilbert space.

Builds the chain Hamiltonian as a dense matrix, evolves density matrices
unitarily or with dephasing/amplitude-damping Kraus channels interspersed
between short unitary segments, performs projective single-spin
measurements, and runs the no-initialization sampling protocol that
produces a measured time series of the first spin.

The protocol estimator: at each grid time, a fresh hidden state is drawn
(spin 1 maximally mixed, the rest arbitrary), spin 1 is measured once
(outcome s0, which also prepares it), the chain evolves, spin 1 is
measured again (outcome s1), and the reported value is the average of
s0*s1. Because spin 1 starts maximally mixed, correlating with s0
isolates exactly the part of the evolved observable that carries an X
(or Y) on spin 1, so the rest of the chain never needs initialization.

Internally the protocol evolves the measured observable (adjoint picture)
once per time point and noise pattern; shot sampling then costs only
inner products against the hidden states. Random streams are keyed by
(purpose, basis, seed, time index, run index) via :mod:`fluxtomo.rng`,
making every number reproducible regardless of execution order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Union

import numpy as np

from . import rng as _rng
from .model import (EXACT, ConfigError, HamiltonianSpec, NoiseModel,
                    SamplingPlan, require_valid)

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

log = logging.getLogger(__name__)

PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}
IDENTITY2 = np.eye(2, dtype=complex)


def _kron_all(ops) -> np.ndarray:
    return reduce(np.kron, ops)


def pauli_on_site(label: str, site: int, n_sites: int) -> np.ndarray:
    """Pauli operator on one site (1-based, site 1 is the leftmost factor)."""
    ops = [IDENTITY2] * n_sites
    ops[site - 1] = PAULI[label]
    return _kron_all(ops)


def total_z(n_sites: int) -> np.ndarray:
    return sum(pauli_on_site("z", s, n_sites) for s in range(1, n_sites + 1))


def build_hamiltonian(spec: HamiltonianSpec, n_max: int = 10) -> np.ndarray:
    """Dense chain Hamiltonian, a real symmetric 2^N x 2^N matrix.

    Includes the nearest-neighbour X and Y coupling terms of the chosen
    variant plus any concrete spurious z-fields / ZZ couplings.
    """
    n = spec.n_sites
    if n > n_max:
        raise ValueError(f"N={n} exceeds the configured cap {n_max}")
    if spec.spurious is not None and not spec.spurious.concrete:
        raise ConfigError("spurious terms must be resolved to concrete values "
                          "before building the Hamiltonian")

    dim = 2 ** n
    xx = np.kron(PAULI["x"], PAULI["x"]).real
    yy = np.kron(PAULI["y"], PAULI["y"]).real
    jx = spec.couplings.array
    jy = jx if spec.variant == "xx" else spec.couplings_y.array

    h = np.zeros((dim, dim))
    for i in range(n - 1):  # link between sites i+1 and i+2
        left = np.eye(2 ** i)
        right = np.eye(2 ** (n - i - 2))
        pair = jx[i] * xx + jy[i] * yy
        h += _kron_all([left, pair, right])

    if spec.spurious is not None:
        z = PAULI["z"].real
        zz = np.kron(z, z)
        for i, field in enumerate(spec.spurious.z_fields):
            if field != 0.0:
                h += field * _kron_all([np.eye(2 ** i), z, np.eye(2 ** (n - i - 1))])
        for i, g in enumerate(spec.spurious.zz_couplings):
            if g != 0.0:
                h += g * _kron_all([np.eye(2 ** i), zz, np.eye(2 ** (n - i - 2))])
    return h


def evolve_unitary(rho: np.ndarray, h: np.ndarray, t: float) -> np.ndarray:
    """rho -> U rho U^dagger with U = exp(-i h t)."""
    evals, evecs = np.linalg.eigh(h)
    u = (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T
    return u @ rho @ u.conj().T


# ---------------------------------------------------------------------------
# Kraus channels

def dephasing_kraus(gamma_tau: float) -> list:
    """Phase-damping Kraus pair for one qubit over an interval gamma*tau."""
    if gamma_tau < 0:
        raise ValueError("gamma_tau must be >= 0")
    e = math.exp(-gamma_tau)
    return [math.sqrt((1.0 + e) / 2.0) * IDENTITY2,
            math.sqrt((1.0 - e) / 2.0) * PAULI["z"]]


def amplitude_damping_kraus(big_gamma_tau: float, nbar: float) -> list:
    """Finite-temperature amplitude-damping Kraus set for one qubit.

    The branching probability p = (nbar+1)/(2 nbar+1) splits decay toward
    the ground and excited states.
    """
    if big_gamma_tau < 0 or nbar < 0:
        raise ValueError("big_gamma_tau and nbar must be >= 0")
    p = (nbar + 1.0) / (2.0 * nbar + 1.0)
    e = math.exp(-big_gamma_tau)
    r = math.sqrt(e)
    k0 = math.sqrt(p) * np.array([[1.0, 0.0], [0.0, r]], dtype=complex)
    k1 = math.sqrt(p * (1.0 - e)) * np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    k2 = math.sqrt(1.0 - p) * np.array([[r, 0.0], [0.0, 1.0]], dtype=complex)
    k3 = math.sqrt((1.0 - p) * (1.0 - e)) * np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
    return [k0, k1, k2, k3]


def apply_single_qubit_channel(rho: np.ndarray, kraus, site: int) -> np.ndarray:
    """Apply sum_k K rho K^dagger with 2x2 Kraus operators on one site."""
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    dl = 2 ** (site - 1)
    dr = 2 ** (n - site)
    r6 = rho.reshape(dl, 2, dr, dl, 2, dr)
    k = np.stack(kraus)
    out = np.einsum("kax,lxrmys,kby->larmbs", k, r6, k.conj())
    return out.reshape(dim, dim)


def apply_dephasing(rho: np.ndarray, site: int, gamma_tau: float) -> np.ndarray:
    return apply_single_qubit_channel(rho, dephasing_kraus(gamma_tau), site)


def apply_amplitude_damping(rho: np.ndarray, site: int, big_gamma_tau: float,
                            nbar: float) -> np.ndarray:
    return apply_single_qubit_channel(rho, amplitude_damping_kraus(big_gamma_tau, nbar), site)


# ---------------------------------------------------------------------------
# interspersed noisy evolution

@dataclass(frozen=True)
class NoisePattern:
    """Per-step channel targets for one noise run (0-based site indices).

    ``None`` site arrays mean the all-spins policy. ``channel_choice`` is
    used by the one-channel-per-interval policy: 0 applies dephasing only,
    1 applies damping only for that step.
    """

    n_steps: int
    deph_sites: Union[np.ndarray, None]
    damp_sites: Union[np.ndarray, None]
    channel_choice: Union[np.ndarray, None]


def draw_noise_pattern(gen: np.random.Generator, n_steps: int, n_sites: int,
                       policy: str) -> NoisePattern:
    if policy == "all-spins":
        return NoisePattern(n_steps, None, None, None)
    deph = gen.integers(0, n_sites, size=n_steps)
    damp = gen.integers(0, n_sites, size=n_steps)
    choice = None
    if policy == "random-one-channel":
        choice = gen.integers(0, 2, size=n_steps)
    return NoisePattern(n_steps, deph, damp, choice)


def _step_count(t: float, dt: float) -> int:
    n = int(math.ceil(t / dt - 1e-9))
    return max(n, 0)


def noisy_evolve(rho: np.ndarray, spec: HamiltonianSpec, noise: NoiseModel,
                 t: float, gen: np.random.Generator) -> np.ndarray:
    """Alternate U(dt) and channel application for a total time t.

    Each interval applies, in order: the unitary segment, the dephasing
    channel, the amplitude-damping channel, with tau = dt. Site targets
    follow noise.policy and are drawn from ``gen`` via
    :func:`draw_noise_pattern`. If t is not an integer multiple of dt the
    step count is rounded up and the actual evolved time logged.
    """
    n = spec.n_sites
    n_steps = _step_count(t, noise.dt)
    actual = n_steps * noise.dt
    if abs(actual - t) > 1e-9 * max(t, 1.0):
        log.debug("noisy_evolve: t=%g rounded up to %d steps (%g)", t, n_steps, actual)

    h = build_hamiltonian(spec)
    evals, evecs = np.linalg.eigh(h)
    u = (evecs * np.exp(-1j * evals * noise.dt)) @ evecs.T
    uh = u.conj().T

    pattern = draw_noise_pattern(gen, n_steps, n, noise.policy)
    deph_k = dephasing_kraus(noise.gamma * noise.dt)
    damp_k = amplitude_damping_kraus(noise.big_gamma * noise.dt, noise.nbar)

    for k in range(n_steps):
        rho = u @ rho @ uh
        do_deph = pattern.channel_choice is None or pattern.channel_choice[k] == 0
        do_damp = pattern.channel_choice is None or pattern.channel_choice[k] == 1
        if noise.gamma > 0 and do_deph:
            if pattern.deph_sites is None:
                for site in range(1, n + 1):
                    rho = apply_single_qubit_channel(rho, deph_k, site)
            else:
                rho = apply_single_qubit_channel(rho, deph_k, int(pattern.deph_sites[k]) + 1)
        if noise.big_gamma > 0 and do_damp:
            if pattern.damp_sites is None:
                for site in range(1, n + 1):
                    rho = apply_single_qubit_channel(rho, damp_k, site)
            else:
                rho = apply_single_qubit_channel(rho, damp_k, int(pattern.damp_sites[k]) + 1)
    return rho


# ---------------------------------------------------------------------------
# measurement

def measure_spin1(rho: np.ndarray, basis: str, gen: np.random.Generator):
    """Projective measurement of spin 1, Born-rule sampled.

    Returns (outcome, collapsed density matrix) with outcome +/-1.
    """
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    bop = pauli_on_site(basis, 1, n)
    expectation = float(np.trace(bop @ rho).real)
    p_plus = min(max((1.0 + expectation) / 2.0, 0.0), 1.0)
    outcome = 1 if gen.random() < p_plus else -1
    proj = (np.eye(dim) + outcome * bop) / 2.0
    prob = p_plus if outcome == 1 else 1.0 - p_plus
    collapsed = proj @ rho @ proj / prob
    return outcome, collapsed


def check_density_matrix(rho: np.ndarray):
    """Raise if rho is not Hermitian/normalized/positive within tolerance."""
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-12:
        raise ValueError("density matrix trace differs from 1")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-10:
        raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")


def haar_rest_state(gen: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-random pure state of the given dimension."""
    v = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
    return v / np.linalg.norm(v)


def plus_state(basis: str, sign: int = 1) -> np.ndarray:
    """Single-qubit eigenstate of X or Y with eigenvalue ``sign``."""
    phase = 1.0 if basis == "x" else 1.0j
    return np.array([1.0, sign * phase], dtype=complex) / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# sample series

@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Estimated first-spin expectation values on a time grid."""

    times: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    basis: str
    n_meas: Union[int, str]
    runs: int
    seed: int

    def __len__(self):
        return len(self.times)


def write_series_csv(series: SampleSeries, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value", "std_error"])
        for t, v, s in zip(series.times, series.values, series.std_errors):
            writer.writerow([repr(float(t)), repr(float(v)), repr(float(s))])


def write_series_meta(series: SampleSeries, path, config_hash: str | None = None):
    meta = {"seed": series.seed, "basis": series.basis, "n_meas": series.n_meas,
            "runs": series.runs, "config_hash": config_hash}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_series_csv(path, meta_path=None) -> SampleSeries:
    times, values, stds = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["t", "value", "std_error"]:
            raise ValueError(f"unexpected series header {header!r}")
        for row in reader:
            times.append(float(row[0]))
            values.append(float(row[1]))
            stds.append(float(row[2]))
    meta = {}
    if meta_path is not None:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    stds_arr = np.asarray(stds)
    default_n_meas = EXACT if np.all(stds_arr == 0.0) else None
    return SampleSeries(np.asarray(times), np.asarray(values), stds_arr,
                        basis=meta.get("basis", "x"),
                        n_meas=meta.get("n_meas", default_n_meas),
                        runs=meta.get("runs", 1),
                        seed=meta.get("seed", 0))


# ---------------------------------------------------------------------------
# the sampling protocol

if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _channel_pass(o, deph_sites, damp_sites, deph_on, damp_on, n_bits,
                      e_d, w00, w11, eh, c_up, c_dn, do_deph, do_damp):
        """Fused Heisenberg dephasing+damping over per-run sites.

        o has layout (dim, runs, dim). Each site splits the operator into
        four blocks addressed by the site bit of the row/column indices;
        iterating over cleared-bit pairs touches every element once.
        """
        dim, runs, _ = o.shape
        for r in range(runs):
            if do_damp and damp_on[r]:
                shift = n_bits - 1 - damp_sites[r]
                mask = 1 << shift
                for i in range(dim):
                    if (i >> shift) & 1:
                        continue
                    i2 = i | mask
                    for j in range(dim):
                        if (j >> shift) & 1:
                            continue
                        j2 = j | mask
                        a = o[i, r, j]
                        b = o[i2, r, j2]
                        o[i, r, j] = w00 * a + c_dn * b
                        o[i2, r, j2] = w11 * b + c_up * a
                        o[i, r, j2] *= eh
                        o[i2, r, j] *= eh
            if do_deph and deph_on[r]:
                shift = n_bits - 1 - deph_sites[r]
                mask = 1 << shift
                for i in range(dim):
                    if (i >> shift) & 1:
                        continue
                    i2 = i | mask
                    for j in range(dim):
                        if (j >> shift) & 1:
                            continue
                        j2 = j | mask
                        o[i, r, j2] *= e_d
                        o[i2, r, j] *= e_d


class ProtocolSimulator:
    """Runs the no-initialization protocol for one configuration.

    Heavy per-configuration work (Hamiltonian diagonalization, the dt
    propagator) happens once in the constructor; :meth:`run` can then be
    called with different master seeds cheaply in the noise-free case.

    Stream keys (see :mod:`fluxtomo.rng`): hidden states use
    ("hidden", basis, seed, time_index, run_index) and noise patterns
    ("pattern", basis, seed, time_index, run_index), with 0-based time
    and run indices.

    rest_state selects the hidden state of spins 2..N: "haar" (fresh
    Haar-random pure state), "zeros" (all spins down... the |0..0>
    product state) or "mixed" (maximally mixed). Spin 1 always starts
    maximally mixed; the first projective measurement prepares it.
    """

    def __init__(self, spec: HamiltonianSpec, noise: NoiseModel | None = None,
                 plan: SamplingPlan | None = None, rest_state: str = "haar"):
        noise = noise if noise is not None else NoiseModel()
        plan = plan if plan is not None else SamplingPlan()
        require_valid(spec, noise, plan)
        if rest_state not in ("haar", "zeros", "mixed"):
            raise ValueError(f"unknown rest_state {rest_state!r}")
        self.spec = spec
        self.noise = noise
        self.plan = plan
        self.rest_state = rest_state

        self.n = spec.n_sites
        self.dim = 2 ** self.n
        self.d_rest = self.dim // 2

        self._h = build_hamiltonian(spec)
        self._evals, self._evecs = np.linalg.eigh(self._h)
        bop = pauli_on_site(plan.basis, 1, self.n)
        # observable rotated into the energy eigenbasis (V is real)
        self._b_eig = self._evecs.T @ bop @ self._evecs
        self._bop = bop.astype(complex)

        grid = plan.times()
        if noise.active:
            self._steps = np.array([_step_count(t, noise.dt) for t in grid])
            self._times = self._steps * noise.dt
            u = (self._evecs * np.exp(-1j * self._evals * noise.dt)) @ self._evecs.T
            self._u_dt = np.ascontiguousarray(u)
            self._u_dt_h = np.ascontiguousarray(u.conj().T)
            self._deph_factor = math.exp(-noise.gamma * noise.dt)
            e2 = math.exp(-noise.big_gamma * noise.dt)
            p = noise.p
            # Heisenberg-picture block coefficients of the damping channel:
            # diagonal site blocks mix, off-diagonal blocks shrink by sqrt(e2)
            self._damp_coeffs = (p + (1.0 - p) * e2,      # w00
                                 p * e2 + (1.0 - p),      # w11
                                 math.sqrt(e2),           # off-block factor
                                 p * (1.0 - e2),          # (0,0) -> (1,1) feed
                                 (1.0 - p) * (1.0 - e2))  # (1,1) -> (0,0) feed
        else:
            self._steps = None
            self._times = grid
        # noise-free blocks depend only on t; caching pays off when the same
        # configuration is rerun over many master seeds (kept small-N only)
        self._unitary_cache = {} if self.dim <= 256 else None

    # -- observable evolution ------------------------------------------------

    def _unitary_blocks(self, t: float):
        # O(t) = U^dag X U = V diag(e^{iEt}) B diag(e^{-iEt}) V^T with B in
        # the eigenbasis; the inner conjugation is an elementwise phase.
        if self._unitary_cache is not None and t in self._unitary_cache:
            return self._unitary_cache[t]
        phases = np.exp(1j * self._evals * t)
        core = self._b_eig * (phases[:, None] * phases.conj()[None, :])
        o = self._evecs @ core @ self._evecs.T
        blocks = self._split_blocks_single(o)
        if self._unitary_cache is not None:
            self._unitary_cache[t] = blocks
        return blocks

    def _split_blocks_single(self, o: np.ndarray):
        d = self.d_rest
        p = (o[:d, :d] + o[d:, d:]) / 2.0
        if self.plan.basis == "x":
            q = (o[:d, d:] + o[d:, :d]) / 2.0
        else:
            q = 1j * (o[:d, d:] - o[d:, :d]) / 2.0
        return p, q

    def _site_views(self, o: np.ndarray) -> list:
        """Per-site 7-axis views of the (dim, runs, dim) buffer.

        Both operator indices are split around one site's qubit, so all
        four site blocks of any run are addressable without copies.
        """
        runs = o.shape[1]
        return [o.reshape(2 ** s, 2, 2 ** (self.n - 1 - s), runs,
                          2 ** s, 2, 2 ** (self.n - 1 - s))
                for s in range(self.n)]

    def _apply_channels_adjoint(self, o, deph_sites, damp_sites, deph_on, damp_on):
        """Heisenberg-picture dephasing and damping on per-run random sites.

        The two maps act on site blocks only, so they commute with each
        other and one pass over the runs suffices.
        """
        e_d = self._deph_factor
        w00, w11, eh, c_up, c_dn = self._damp_coeffs
        do_damp = self.noise.big_gamma > 0
        do_deph = self.noise.gamma > 0
        if _HAVE_NUMBA:
            _channel_pass(o, np.asarray(deph_sites, dtype=np.int64),
                          np.asarray(damp_sites, dtype=np.int64),
                          np.asarray(deph_on, dtype=np.bool_),
                          np.asarray(damp_on, dtype=np.bool_),
                          self.n, e_d, w00, w11, eh, c_up, c_dn,
                          do_deph, do_damp)
            return
        views = self._site_views(o)
        for r in range(o.shape[1]):
            if do_damp and damp_on[r]:
                v = views[damp_sites[r]]
                b00 = v[:, 0, :, r, :, 0, :]
                b11 = v[:, 1, :, r, :, 1, :]
                new00 = w00 * b00 + c_dn * b11
                new11 = w11 * b11 + c_up * b00
                v[:, 0, :, r, :, 1, :] *= eh
                v[:, 1, :, r, :, 0, :] *= eh
                b00[...] = new00
                b11[...] = new11
            if do_deph and deph_on[r]:
                v = views[deph_sites[r]]
                v[:, 0, :, r, :, 1, :] *= e_d
                v[:, 1, :, r, :, 0, :] *= e_d

    def _apply_channels_adjoint_all_spins(self, o):
        views = self._site_views(o)
        e_d = self._deph_factor
        w00, w11, eh, c_up, c_dn = self._damp_coeffs
        for v in views:
            if self.noise.big_gamma > 0:
                b00 = v[:, 0, :, :, :, 0, :]
                b11 = v[:, 1, :, :, :, 1, :]
                new00 = w00 * b00 + c_dn * b11
                new11 = w11 * b11 + c_up * b00
                v[:, 0, :, :, :, 1, :] *= eh
                v[:, 1, :, :, :, 0, :] *= eh
                b00[...] = new00
                b11[...] = new11
            if self.noise.gamma > 0:
                v[:, 0, :, :, :, 1, :] *= e_d
                v[:, 1, :, :, :, 0, :] *= e_d

    def _noisy_blocks(self, t_idx: int, seed: int):
        """Adjoint-evolve the observable through every run's noise pattern."""
        n_steps = int(self._steps[t_idx])
        runs = self.noise.runs
        dim = self.dim
        patterns = [draw_noise_pattern(_rng.stream("pattern", self.plan.basis, seed,
                                                   t_idx, r),
                                       n_steps, self.n, self.noise.policy)
                    for r in range(runs)]
        all_spins = self.noise.policy == "all-spins"

        o = np.ascontiguousarray(
            np.broadcast_to(self._bop[:, None, :], (dim, runs, dim)).copy())

        on = np.ones(runs, dtype=bool)
        if not all_spins and n_steps:
            deph = np.stack([p.deph_sites for p in patterns])
            damp = np.stack([p.damp_sites for p in patterns])
            if self.noise.policy == "random-one-channel":
                choice = np.stack([p.channel_choice for p in patterns])
            else:
                choice = None

        # adjoint of (damping o dephasing o unitary) applied in reverse; the
        # two channel adjoints commute, so a single fused pass is exact
        for k in reversed(range(n_steps)):
            if all_spins:
                self._apply_channels_adjoint_all_spins(o)
            elif choice is None:
                self._apply_channels_adjoint(o, deph[:, k], damp[:, k], on, on)
            else:
                self._apply_channels_adjoint(o, deph[:, k], damp[:, k],
                                             choice[:, k] == 0, choice[:, k] == 1)
            o = (self._u_dt_h @ o.reshape(dim, runs * dim)).reshape(dim, runs, dim)
            o = (o.reshape(dim * runs, dim) @ self._u_dt).reshape(dim, runs, dim)

        d = self.d_rest
        p = (o[:d, :, :d] + o[d:, :, d:]) / 2.0
        if self.plan.basis == "x":
            q = (o[:d, :, d:] + o[d:, :, :d]) / 2.0
        else:
            q = 1j * (o[:d, :, d:] - o[d:, :, :d]) / 2.0
        return p, q

    # -- estimation ----------------------------------------------------------

    def _rest_forms(self, mat: np.ndarray, phi):
        """Quadratic form of the rest state against a (d x d) block."""
        if self.rest_state == "mixed":
            return float(np.trace(mat).real) / self.d_rest
        if self.rest_state == "zeros":
            return float(mat[0, 0].real)
        return float((phi.conj() @ mat @ phi).real)

    def _shot_forms(self, mat: np.ndarray, phis: np.ndarray) -> np.ndarray:
        if self.rest_state == "haar":
            return np.einsum("sd,de,se->s", phis.conj(), mat, phis).real
        n_shots = phis.shape[0] if phis is not None else 0
        if self.rest_state == "mixed":
            return np.full(n_shots, np.trace(mat).real / self.d_rest)
        return np.full(n_shots, mat[0, 0].real)

    def _estimate_point(self, t_idx: int, seed: int, p_blocks, q_blocks, shared: bool):
        runs = self.noise.runs
        if self.plan.exact:
            vals = []
            for r in range(runs):
                q = q_blocks if shared else q_blocks[:, r, :]
                phi = None
                if self.rest_state == "haar":
                    gen = _rng.stream("hidden", self.plan.basis, seed, t_idx, r)
                    phi = haar_rest_state(gen, self.d_rest)
                vals.append(self._rest_forms(q, phi))
            return float(np.mean(vals)), 0.0

        n_meas = int(self.plan.n_meas)
        products = np.empty((runs, n_meas))
        for r in range(runs):
            gen = _rng.stream("hidden", self.plan.basis, seed, t_idx, r)
            p = p_blocks if shared else p_blocks[:, r, :]
            q = q_blocks if shared else q_blocks[:, r, :]
            phis = None
            if self.rest_state == "haar":
                raw = gen.standard_normal((n_meas, self.d_rest)) \
                    + 1j * gen.standard_normal((n_meas, self.d_rest))
                phis = raw / np.linalg.norm(raw, axis=1, keepdims=True)
            a = self._shot_forms(p, phis)
            b = self._shot_forms(q, phis)
            s0 = gen.integers(0, 2, size=n_meas) * 2.0 - 1.0
            m = np.clip(a + s0 * b, -1.0, 1.0)
            u = gen.random(n_meas)
            s1 = np.where(u < (1.0 + m) / 2.0, 1.0, -1.0)
            products[r] = s0 * s1
        value = float(products.mean())
        n_total = runs * n_meas
        std = math.sqrt(max(1.0 - value * value, 0.0) / n_total)
        return value, std

    def run(self, seed: int | None = None) -> SampleSeries:
        """Produce the measured series for one master seed."""
        seed = self.plan.seed if seed is None else int(seed)
        values = np.empty(len(self._times))
        stds = np.empty(len(self._times))
        for j, t in enumerate(self._times):
            if self.noise.active:
                p_blocks, q_blocks = self._noisy_blocks(j, seed)
                shared = False
            else:
                p_blocks, q_blocks = self._unitary_blocks(t)
                shared = True
            values[j], stds[j] = self._estimate_point(j, seed, p_blocks, q_blocks, shared)
        return SampleSeries(self._times.copy(), values, stds, self.plan.basis,
                            self.plan.n_meas, self.noise.runs, seed)


def protocol_series(spec: HamiltonianSpec, noise: NoiseModel | None = None,
                    plan: SamplingPlan | None = None,
                    rest_state: str = "haar") -> SampleSeries:
    """One-shot convenience wrapper around :class:`ProtocolSimulator`."""
    return ProtocolSimulator(spec, noise, plan, rest_state).run()
