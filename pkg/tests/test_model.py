import math

import pytest
from hypothesis import given, strategies as st

from fluxtomo import model
from fluxtomo.model import (ConfigError, CouplingSet, EXACT, NoiseModel,
                            SamplingPlan, SpuriousTerms, load_config,
                            save_config, validate, xx_chain, xy_chain)


def test_case1_config_is_valid(case1):
    spec = xx_chain(case1)
    assert validate(spec, NoiseModel(), SamplingPlan()) == []


def test_coupling_length_mismatch_is_reported():
    spec = model.HamiltonianSpec("xx", CouplingSet(2, (1.0, 1.0)))
    violations = validate(spec, NoiseModel(), SamplingPlan())
    assert any("dimension mismatch" in v for v in violations)


def test_dt_exceeding_sampling_step_is_reported():
    spec = xx_chain((1.0,))
    noise = NoiseModel(dt=math.pi / 10)
    violations = validate(spec, noise, SamplingPlan(n_points=25))
    assert any("exceeds the sampling step" in v for v in violations)


def test_nonpositive_coupling_under_antiferromagnetic_flag():
    violations = validate(xx_chain((1.0, -0.5)), NoiseModel(), SamplingPlan())
    assert any("anti-ferromagnetic" in v for v in violations)
    # with the flag off, negative couplings are allowed
    assert validate(xx_chain((1.0, -0.5), antiferromagnetic=False),
                    NoiseModel(), SamplingPlan()) == []


def test_xy_requires_matching_chain_lengths():
    spec = model.HamiltonianSpec("xy", CouplingSet(4, (1.0, 1.0, 1.0)),
                                 CouplingSet(3, (1.0, 1.0)))
    violations = validate(spec, NoiseModel(), SamplingPlan())
    assert any("same N" in v for v in violations)


def test_spurious_dimension_checks():
    spec = xx_chain((1.0, 1.0), spurious=SpuriousTerms((0.1,), (0.0, 0.0)))
    violations = validate(spec, NoiseModel(), SamplingPlan())
    assert any("spurious_z" in v for v in violations)


def test_validate_is_pure():
    spec = xx_chain((1.0, 1.2))
    noise, plan = NoiseModel(), SamplingPlan()
    assert validate(spec, noise, plan) == validate(spec, noise, plan)


@given(st.floats(min_value=0.0, max_value=1e6, allow_nan=False))
def test_thermal_probability_range(nbar):
    p = NoiseModel(nbar=nbar).p
    assert 0.5 < p <= 1.0


def test_thermal_probability_limits():
    assert NoiseModel(nbar=0.0).p == 1.0
    assert abs(NoiseModel(nbar=1e9).p - 0.5) < 1e-9


def test_sampling_grid_excludes_time_zero():
    plan = SamplingPlan(t_max=math.pi, n_points=25)
    times = plan.times()
    assert len(times) == 25
    assert times[0] == pytest.approx(math.pi / 25)
    assert times[-1] == pytest.approx(math.pi)


MINIMAL = """
[chain]
variant = "xx"
couplings = [1.02, 1.26, 0.94, 1.36, 0.72]
"""


def test_minimal_document_fills_defaults():
    spec, noise, plan = load_config(MINIMAL)
    assert spec.variant == "xx"
    assert plan.t_max == pytest.approx(math.pi)
    assert plan.n_points == 25
    assert plan.n_meas == EXACT
    assert not noise.active
    assert noise.runs == 1


def test_case2_document_round_trip(case_sets):
    text = """
[chain]
variant = "xx"
couplings = [1.49, 0.80, 1.02, 0.69, 1.28]
"""
    spec, _, _ = load_config(text)
    assert spec.couplings.couplings == case_sets[2]


def test_save_load_canonical_fixed_point(case1):
    spec = xx_chain(case1)
    noise = NoiseModel(gamma=0.5, big_gamma=0.2, nbar=0.01, runs=100)
    plan = SamplingPlan(n_meas=500, seed=42)
    text = save_config(spec, noise, plan)
    spec2, noise2, plan2 = load_config(text)
    assert save_config(spec2, noise2, plan2) == text
    assert (spec2, noise2, plan2) == (spec, noise, plan)


def test_save_load_xy_with_spurious():
    spec = xy_chain((1.0, 1.1, 0.9), (0.8, 1.2, 1.0),
                    spurious=SpuriousTerms("random", "random"))
    text = save_config(spec, NoiseModel(), SamplingPlan())
    spec2, _, _ = load_config(text)
    assert spec2 == spec


def test_unknown_key_rejected_with_line():
    bad = MINIMAL + "j_total = 3\n"
    with pytest.raises(ConfigError) as err:
        load_config(bad)
    assert "unknown key" in str(err.value)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(MINIMAL + "\n[plotting]\ncolor = \"red\"\n")


def test_negative_coupling_document_fails_validation():
    bad = """
[chain]
variant = "xx"
couplings = [1.0, -1.0]
"""
    with pytest.raises(ConfigError, match="anti-ferromagnetic"):
        load_config(bad)


def test_parse_error_carries_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        load_config("[chain]\nwhat is this\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(MINIMAL + "couplings = [1.0]\n")


def test_noise_runs_default_is_100_when_noise_active():
    text = MINIMAL + "\n[noise]\ngamma = 0.5\n"
    _, noise, _ = load_config(text)
    assert noise.runs == 100
    assert noise.policy == "random-single-spin"


def test_exact_sentinel_and_integer_n_meas():
    _, _, plan = load_config(MINIMAL + '\n[sampling]\nn_meas = "exact"\n')
    assert plan.exact
    _, _, plan = load_config(MINIMAL + "\n[sampling]\nn_meas = 500\n")
    assert plan.n_meas == 500


def test_comments_and_blank_lines_are_ignored():
    text = "# header\n" + MINIMAL + "\n[sampling]  # trailing\nseed = 3 # why not\n"
    _, _, plan = load_config(text)
    assert plan.seed == 3
