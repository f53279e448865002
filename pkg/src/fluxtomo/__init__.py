"""Coupling tomography for spin-1/2 chains from single-spin measurements.

Simulates time-resolved measurements of one end spin (no state
initialization required), fits the resulting signal to a damped cosine
sum, and inverts the fit into the full set of nearest-neighbour coupling
constants, with optional dephasing/amplitude-damping noise, shot noise,
and spurious field terms.
"""

from .model import (EXACT, RANDOM_SPURIOUS, ConfigError, CouplingSet,
                    HamiltonianSpec, NoiseModel, SamplingPlan, SpuriousTerms,
                    config_hash, load_config, load_config_file, require_valid,
                    save_config, validate, xx_chain, xy_chain)
from .flux import (EffectiveSequences, FluxMatrix, FluxSpectrum, alpha1,
                   alpha1_series, build_flux_matrix, coefficient_vector,
                   effective_sequences, spectral_decompose,
                   spectrum_from_couplings)
from .hilbert import (ProtocolSimulator, SampleSeries, apply_amplitude_damping,
                      apply_dephasing, build_hamiltonian, evolve_unitary,
                      measure_spin1, noisy_evolve, protocol_series,
                      read_series_csv, write_series_csv, write_series_meta)
from .fitting import (HarmonicFit, ModeSeeds, fit_cosines, initial_guess,
                      select_mode_count)
from .inversion import (EstimationResult, IllPosedSpectrumError,
                        LanczosBreakdownError, RefinementResult,
                        TridiagonalReconstruction, deinterleave_h2,
                        lanczos_reconstruct, refine_couplings,
                        spectral_data_from_fit)
from .pipeline import (BatchResult, ExperimentReport, SweepResult, batch_random,
                       resolve_spurious, run_tomography, sweep,
                       write_report_bundle)

__version__ = "0.1.0"
