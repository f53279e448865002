"""Chain and experiment configuration.

Defines the spin-chain model under test (couplings, optional spurious
terms), the incoherent-noise parameters, and the sampling plan for the
single-spin measurement protocol. All quantities are dimensionless:
couplings and rates in units of a reference energy J, times in 1/J.

The on-disk format is a small TOML-style document with three sections,
``[chain]``, ``[noise]`` and ``[sampling]``. Unknown keys are hard
errors; ``save_config`` emits a canonical form that ``load_config``
round-trips byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

EXACT = "exact"
RANDOM_SPURIOUS = "random"

BASES = ("x", "y")
POLICIES = ("random-single-spin", "all-spins", "random-one-channel")

_SpuriousField = Union[tuple, str]


class ConfigError(ValueError):
    """Raised for malformed documents or invariant violations."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _as_float_tuple(values) -> tuple:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class CouplingSet:
    """Nearest-neighbour couplings J_1..J_{N-1} for a chain of N sites."""

    n_sites: int
    couplings: tuple
    antiferromagnetic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "couplings", _as_float_tuple(self.couplings))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.couplings, dtype=float)


@dataclass(frozen=True)
class SpuriousTerms:
    """Unwanted z-fields h_i and ZZ couplings g_i added to the chain.

    Either field may be the string ``"random"``, meaning the concrete
    values are drawn uniformly from [-magnitude, magnitude] at experiment
    time (per run, from the master seed).
    """

    z_fields: _SpuriousField = RANDOM_SPURIOUS
    zz_couplings: _SpuriousField = RANDOM_SPURIOUS

    def __post_init__(self):
        if self.z_fields != RANDOM_SPURIOUS:
            object.__setattr__(self, "z_fields", _as_float_tuple(self.z_fields))
        if self.zz_couplings != RANDOM_SPURIOUS:
            object.__setattr__(self, "zz_couplings", _as_float_tuple(self.zz_couplings))

    @property
    def concrete(self) -> bool:
        return self.z_fields != RANDOM_SPURIOUS and self.zz_couplings != RANDOM_SPURIOUS


@dataclass(frozen=True)
class HamiltonianSpec:
    """The chain Hamiltonian under test.

    variant "xx": H = sum_i J_i (X_i X_{i+1} + Y_i Y_{i+1}), couplings = J.
    variant "xy": H = sum_i (JX_i X_i X_{i+1} + JY_i Y_i Y_{i+1}), with
    couplings = JX and couplings_y = JY.
    """

    variant: str
    couplings: CouplingSet
    couplings_y: CouplingSet | None = None
    spurious: SpuriousTerms | None = None

    @property
    def n_sites(self) -> int:
        return self.couplings.n_sites


def xx_chain(couplings: Sequence[float], *, spurious: SpuriousTerms | None = None,
             antiferromagnetic: bool = True) -> HamiltonianSpec:
    cs = CouplingSet(len(tuple(couplings)) + 1, tuple(couplings), antiferromagnetic)
    return HamiltonianSpec("xx", cs, None, spurious)


def xy_chain(couplings_x: Sequence[float], couplings_y: Sequence[float], *,
             spurious: SpuriousTerms | None = None,
             antiferromagnetic: bool = True) -> HamiltonianSpec:
    cx = CouplingSet(len(tuple(couplings_x)) + 1, tuple(couplings_x), antiferromagnetic)
    cy = CouplingSet(len(tuple(couplings_y)) + 1, tuple(couplings_y), antiferromagnetic)
    return HamiltonianSpec("xy", cx, cy, spurious)


@dataclass(frozen=True)
class NoiseModel:
    """Dephasing/damping channel parameters for the interspersed evolution.

    gamma and big_gamma are the phase- and amplitude-damping rates, nbar
    the mean phonon number of the bath, dt the length of one
    unitary-plus-channel interval, runs the number of noise-pattern
    averages. policy selects which spins the channels hit each interval.
    """

    gamma: float = 0.0
    big_gamma: float = 0.0
    nbar: float = 0.0
    dt: float = math.pi / 250.0
    runs: int = 1
    policy: str = "random-single-spin"

    @property
    def p(self) -> float:
        """Thermal branching probability (nbar+1)/(2 nbar+1)."""
        return (self.nbar + 1.0) / (2.0 * self.nbar + 1.0)

    @property
    def active(self) -> bool:
        return self.gamma > 0.0 or self.big_gamma > 0.0


@dataclass(frozen=True)
class SamplingPlan:
    """Time grid and measurement budget for one protocol pass.

    The grid is t_j = j * t_max / n_points for j = 1..n_points (the j=0
    point carries no information, both outcomes always coincide there).
    n_meas is the number of shots per time point or EXACT for analytic
    branch averaging.
    """

    t_max: float = math.pi
    n_points: int = 25
    n_meas: Union[int, str] = EXACT
    basis: str = "x"
    seed: int = 0

    @property
    def exact(self) -> bool:
        return self.n_meas == EXACT

    @property
    def step(self) -> float:
        return self.t_max / self.n_points

    def times(self) -> np.ndarray:
        return np.arange(1, self.n_points + 1) * self.step


# ---------------------------------------------------------------------------
# validation

def _check_coupling_set(cs: CouplingSet, label: str, out: list):
    if cs.n_sites < 2:
        out.append(f"{label}: n_sites must be >= 2, got {cs.n_sites}")
    if len(cs.couplings) != cs.n_sites - 1:
        out.append(f"{label}: dimension mismatch, expected {cs.n_sites - 1} couplings "
                   f"for N={cs.n_sites}, got {len(cs.couplings)}")
    if not all(math.isfinite(j) for j in cs.couplings):
        out.append(f"{label}: couplings must be finite")
    elif cs.antiferromagnetic and any(j <= 0.0 for j in cs.couplings):
        out.append(f"{label}: non-positive coupling under the anti-ferromagnetic flag")


def validate(spec: HamiltonianSpec, noise: NoiseModel, plan: SamplingPlan) -> list:
    """Return a list of invariant violations (empty when valid)."""
    out: list = []

    if spec.variant not in ("xx", "xy"):
        out.append(f"chain: unknown variant {spec.variant!r}")
    _check_coupling_set(spec.couplings, "chain.couplings", out)
    if spec.variant == "xy":
        if spec.couplings_y is None:
            out.append("chain: variant 'xy' requires couplings_y")
        else:
            _check_coupling_set(spec.couplings_y, "chain.couplings_y", out)
            if spec.couplings_y.n_sites != spec.couplings.n_sites:
                out.append("chain: couplings and couplings_y must share the same N")
    elif spec.couplings_y is not None:
        out.append("chain: couplings_y only allowed for variant 'xy'")

    n = spec.n_sites
    if spec.spurious is not None:
        sp = spec.spurious
        if sp.z_fields != RANDOM_SPURIOUS:
            if len(sp.z_fields) != n:
                out.append(f"chain.spurious_z: expected {n} fields, got {len(sp.z_fields)}")
            elif not all(math.isfinite(h) for h in sp.z_fields):
                out.append("chain.spurious_z: fields must be finite")
        if sp.zz_couplings != RANDOM_SPURIOUS:
            if len(sp.zz_couplings) != n - 1:
                out.append(f"chain.spurious_zz: expected {n - 1} couplings, "
                           f"got {len(sp.zz_couplings)}")
            elif not all(math.isfinite(g) for g in sp.zz_couplings):
                out.append("chain.spurious_zz: couplings must be finite")

    if noise.gamma < 0.0 or not math.isfinite(noise.gamma):
        out.append("noise.gamma must be finite and >= 0")
    if noise.big_gamma < 0.0 or not math.isfinite(noise.big_gamma):
        out.append("noise.big_gamma must be finite and >= 0")
    if noise.nbar < 0.0 or not math.isfinite(noise.nbar):
        out.append("noise.nbar must be finite and >= 0")
    if noise.dt <= 0.0 or not math.isfinite(noise.dt):
        out.append("noise.dt must be finite and > 0")
    if noise.runs < 1:
        out.append("noise.runs must be >= 1")
    if noise.policy not in POLICIES:
        out.append(f"noise.policy must be one of {POLICIES}, got {noise.policy!r}")

    if plan.n_points < 2:
        out.append("sampling.n_points must be >= 2")
    if plan.t_max <= 0.0 or not math.isfinite(plan.t_max):
        out.append("sampling.t_max must be finite and > 0")
    if plan.n_meas != EXACT and (not isinstance(plan.n_meas, int) or plan.n_meas < 1):
        out.append("sampling.n_meas must be a positive integer or \"exact\"")
    if plan.basis not in BASES:
        out.append(f"sampling.basis must be one of {BASES}, got {plan.basis!r}")
    if not (0 <= plan.seed < 2 ** 64):
        out.append("sampling.seed must fit in 64 bits")

    if plan.n_points >= 2 and plan.t_max > 0 and noise.dt > 0:
        if noise.dt > plan.step * (1.0 + 1e-12):
            out.append(f"noise.dt ({noise.dt!r}) exceeds the sampling step ({plan.step!r})")

    return out


def require_valid(spec: HamiltonianSpec, noise: NoiseModel, plan: SamplingPlan):
    violations = validate(spec, noise, plan)
    if violations:
        raise ConfigError(violations)


# ---------------------------------------------------------------------------
# config document parsing (TOML subset: sections, scalars, flat arrays)

_SCHEMA = {
    "chain": ("variant", "couplings", "couplings_y", "spurious_z", "spurious_zz"),
    "noise": ("gamma", "big_gamma", "nbar", "dt", "runs", "policy"),
    "sampling": ("t_max", "n_points", "n_meas", "basis", "seed"),
}


def _parse_scalar(token: str, lineno: int):
    token = token.strip()
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError([f"line {lineno}: cannot parse value {token!r}"])


def _parse_value(token: str, lineno: int):
    token = token.strip()
    if token.startswith("["):
        if not token.endswith("]"):
            raise ConfigError([f"line {lineno}: unterminated array"])
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, lineno) for part in inner.split(",")]
    return _parse_scalar(token, lineno)


def _strip_comment(line: str) -> str:
    in_string = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            return line[:i]
    return line


def parse_document(text: str) -> dict:
    """Parse a config document into {section: {key: value}}, rejecting
    unknown sections/keys with line diagnostics."""
    doc: dict = {}
    section = None
    errors: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {raw.strip()!r}")
                continue
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            elif section in doc:
                errors.append(f"line {lineno}: duplicate section [{section}]")
            else:
                doc[section] = {}
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside a known section")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {section}.{key}")
            continue
        if key in doc[section]:
            errors.append(f"line {lineno}: duplicate key {section}.{key}")
            continue
        try:
            doc[section][key] = _parse_value(value, lineno)
        except ConfigError as exc:
            errors.extend(exc.violations)
    if errors:
        raise ConfigError(errors)
    return doc


def _spurious_from_doc(value, key: str):
    if value is None:
        return None
    if value == RANDOM_SPURIOUS:
        return RANDOM_SPURIOUS
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    raise ConfigError([f"chain.{key} must be an array or \"random\""])


def load_config(text: str):
    """Parse and validate a config document.

    Returns (HamiltonianSpec, NoiseModel, SamplingPlan) with defaults
    filled in for absent keys.
    """
    doc = parse_document(text)
    chain = doc.get("chain", {})
    noise_doc = doc.get("noise", {})
    sampling = doc.get("sampling", {})

    if "variant" not in chain or "couplings" not in chain:
        raise ConfigError(["[chain] must define variant and couplings"])
    variant = chain["variant"]
    if variant not in ("xx", "xy"):
        raise ConfigError([f"chain.variant must be \"xx\" or \"xy\", got {variant!r}"])

    couplings = tuple(float(v) for v in chain["couplings"])
    n = len(couplings) + 1
    cs = CouplingSet(n, couplings)
    cs_y = None
    if "couplings_y" in chain:
        cy = tuple(float(v) for v in chain["couplings_y"])
        cs_y = CouplingSet(len(cy) + 1, cy)

    spurious = None
    z = _spurious_from_doc(chain.get("spurious_z"), "spurious_z")
    zz = _spurious_from_doc(chain.get("spurious_zz"), "spurious_zz")
    if z is not None or zz is not None:
        spurious = SpuriousTerms(z if z is not None else (0.0,) * n,
                                 zz if zz is not None else (0.0,) * (n - 1))
    spec = HamiltonianSpec(variant, cs, cs_y, spurious)

    gamma = float(noise_doc.get("gamma", 0.0))
    big_gamma = float(noise_doc.get("big_gamma", 0.0))
    default_runs = 100 if (gamma > 0.0 or big_gamma > 0.0) else 1
    noise = NoiseModel(
        gamma=gamma,
        big_gamma=big_gamma,
        nbar=float(noise_doc.get("nbar", 0.0)),
        dt=float(noise_doc.get("dt", math.pi / 250.0)),
        runs=int(noise_doc.get("runs", default_runs)),
        policy=noise_doc.get("policy", "random-single-spin"),
    )

    n_meas = sampling.get("n_meas", EXACT)
    if isinstance(n_meas, str) and n_meas != EXACT:
        raise ConfigError([f"sampling.n_meas must be an integer or \"exact\", got {n_meas!r}"])
    plan = SamplingPlan(
        t_max=float(sampling.get("t_max", math.pi)),
        n_points=int(sampling.get("n_points", 25)),
        n_meas=n_meas,
        basis=sampling.get("basis", "x"),
        seed=int(sampling.get("seed", 0)),
    )

    require_valid(spec, noise, plan)
    return spec, noise, plan


def load_config_file(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(float(v)) for v in value) + "]"
    return str(value)


def save_config(spec: HamiltonianSpec, noise: NoiseModel, plan: SamplingPlan) -> str:
    """Emit the canonical document (all keys explicit, fixed order)."""
    lines = ["[chain]", f"variant = {_fmt(spec.variant)}",
             f"couplings = {_fmt(spec.couplings.couplings)}"]
    if spec.couplings_y is not None:
        lines.append(f"couplings_y = {_fmt(spec.couplings_y.couplings)}")
    if spec.spurious is not None:
        for key, val in (("spurious_z", spec.spurious.z_fields),
                         ("spurious_zz", spec.spurious.zz_couplings)):
            lines.append(f"{key} = {_fmt(val)}")
    lines += [
        "",
        "[noise]",
        f"gamma = {_fmt(float(noise.gamma))}",
        f"big_gamma = {_fmt(float(noise.big_gamma))}",
        f"nbar = {_fmt(float(noise.nbar))}",
        f"dt = {_fmt(float(noise.dt))}",
        f"runs = {noise.runs}",
        f"policy = {_fmt(noise.policy)}",
        "",
        "[sampling]",
        f"t_max = {_fmt(float(plan.t_max))}",
        f"n_points = {plan.n_points}",
        f"n_meas = {_fmt(plan.n_meas)}",
        f"basis = {_fmt(plan.basis)}",
        f"seed = {plan.seed}",
        "",
    ]
    return "\n".join(lines)


def config_hash(spec: HamiltonianSpec, noise: NoiseModel, plan: SamplingPlan) -> str:
    return hashlib.sha256(save_config(spec, noise, plan).encode("utf-8")).hexdigest()
