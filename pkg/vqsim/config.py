"""
Experiment configuration: pydantic models plus the flat ``key = value`` format.

A config file looks like::

    # harmonic damping at a softer cutoff
    experiment = "harmonic-damping"
    physics.omega_max = 2.0
    numerics.dim = 48
    constants.e_charge = 0.30282212

Dotted keys name their section. A bare key is resolved to the first section
that declares it (physics, then numerics, then decoherence); top-level keys are
``experiment``, ``output_dir``, ``jobs`` and ``debug``. Right-hand sides are
read with ``yaml.safe_load``, so strings, numbers, booleans and ``[a, b]`` lists
all work.
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .decoherence import ProfileKind
from .errors import ConfigError, DomainError
from .units import CODATA_2018, CutoffConfig, PhysicalContext, UnitSystem, de_broglie_cutoff


class ExperimentName(str, Enum):
    KERNELS_DUMP = "kernels-dump"
    FREE_PARTICLE = "free-particle"
    HARMONIC_DAMPING = "harmonic-damping"
    CLASSICAL_RUNAWAY = "classical-runaway"
    VEM_CANCEL = "vem-cancel"
    COHERENCE_LENGTH = "coherence-length"
    FALSE_DECOHERENCE = "false-decoherence"
    COLLISIONAL_CONTRAST = "collisional-contrast"


class PhysicsSection(BaseModel):
    """Physical parameters of the particle, the field cutoff and the external potential."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    unit_system: UnitSystem = Field(
        UnitSystem.NATURAL,
        alias="unit-system",
        description="'natural' (ħ = c = ε0 = 1) or 'si' (CODATA 2018 electron).",
    )
    omega_max: float = Field(1.0, gt=0.0, alias="omega-max", description="UV cutoff frequency ω_max.")
    omega0: float = Field(0.05, gt=0.0, description="Frequency of the harmonic potential.")
    mass: Optional[float] = Field(
        None,
        gt=0.0,
        description="Bare mass; defaults to 1 in natural units and the electron mass in SI.",
    )
    alpha: float = Field(
        CODATA_2018["alpha"],
        gt=0.0,
        description="Coupling strength in natural units (e² = 4πα). Derived from the constants in SI.",
    )
    de_broglie_momentum: Optional[float] = Field(
        None,
        gt=0.0,
        alias="de-broglie-momentum",
        description="If set, fixes k_max = 1/λ_db for this momentum and overrides omega_max.",
    )


class NumericsSection(BaseModel):
    """Discretization and integration settings."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dim: int = Field(32, ge=16, description="Oscillator-basis truncation.")
    basis_frequency: Optional[float] = Field(
        None, gt=0.0, alias="basis-frequency", description="Frequency of the oscillator basis (defaults to omega0)."
    )
    grid_points: int = Field(241, ge=16, alias="grid-points")
    grid_extent: float = Field(12.0, gt=0.0, alias="grid-extent", description="Grid covers [-extent, extent].")
    dt: Optional[float] = Field(None, gt=0.0, description="Time step; the stability rule applies when absent.")
    t_end: Optional[float] = Field(None, gt=0.0, alias="t-end")
    periods: float = Field(10.0, gt=0.0, description="Run length in periods 2π/omega0 when t_end is absent.")
    record_every: int = Field(1, ge=1, alias="record-every")
    markov: bool = Field(False, description="Use the plateau (Markov) coefficients.")
    decoherence_only: bool = Field(False, alias="decoherence-only")
    epsilon_sweep: List[float] = Field(
        default_factory=lambda: [1e-2, 1e-3, 1e-4],
        alias="epsilon-sweep",
        description="Values of ω0·ε for cutoff refinement sweeps.",
    )


class DecoherenceSection(BaseModel):
    """Switching profile and collisional-environment parameters."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    ramp_kind: ProfileKind = Field(ProfileKind.RAISED_COSINE_RAMP, alias="ramp-kind")
    ramp_durations: List[float] = Field(
        default_factory=lambda: [1e2, 3e2, 1e3],
        alias="ramp-durations",
        description="Ramp durations in units of ε.",
    )
    total_duration_factor: float = Field(
        5.0, ge=2.0, alias="total-duration-factor", description="Profile length T in units of the ramp duration."
    )
    f_start: float = Field(0.0, ge=0.0, le=1.0, alias="f-start")
    f_end: float = Field(0.0, ge=0.0, le=1.0, alias="f-end")
    collision_rate: float = Field(1.0, ge=0.0, alias="collision-rate", description="Λ in rate per length².")
    separation: float = Field(1.0, ge=0.0, description="Superposition separation Δx.")


class ConstantsSection(BaseModel):
    """Overrides for the constants of the chosen unit system."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    hbar: Optional[float] = Field(None, gt=0.0)
    c: Optional[float] = Field(None, gt=0.0)
    eps0: Optional[float] = Field(None, gt=0.0)
    e_charge: Optional[float] = Field(None, gt=0.0, alias="e-charge")
    mass: Optional[float] = Field(None, gt=0.0)


class ExperimentConfig(BaseModel):
    """
    Complete, validated configuration of one experiment run.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    experiment: ExperimentName = Field(..., description="Named experiment to dispatch.")
    output_dir: Optional[str] = Field(
        None, alias="output-dir", description="Output root; VQS_OUTPUT_DIR or ./runs when absent."
    )
    jobs: int = Field(1, ge=1, description="Worker processes for sweeps.")
    debug: bool = Field(False, description="Enable DEBUG logging.")
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    numerics: NumericsSection = Field(default_factory=NumericsSection)
    decoherence: DecoherenceSection = Field(default_factory=DecoherenceSection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)


TOP_LEVEL_KEYS = ("experiment", "output_dir", "jobs", "debug")
SECTIONS: Dict[str, Type[BaseModel]] = {
    "physics": PhysicsSection,
    "numerics": NumericsSection,
    "decoherence": DecoherenceSection,
    "constants": ConstantsSection,
}
BARE_KEY_SECTIONS = ("physics", "numerics", "decoherence")


def _field_name(model: Type[BaseModel], name: str) -> Optional[str]:
    normalized = name.replace("-", "_")
    return normalized if normalized in model.model_fields else None


def _resolve_key(key: str, line: int) -> Tuple[Optional[str], str]:
    if "." in key:
        section, _, name = key.partition(".")
        model = SECTIONS.get(section)
        field = _field_name(model, name) if model is not None else None
        if field is None:
            raise ConfigError("unknown key", key=key, line=line)
        return section, field
    normalized = key.replace("-", "_")
    if normalized in TOP_LEVEL_KEYS:
        return None, normalized
    for section in BARE_KEY_SECTIONS:
        field = _field_name(SECTIONS[section], key)
        if field is not None:
            return section, field
    raise ConfigError("unknown key", key=key, line=line)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate the ``key = value`` format; errors name the key and line."""
    data: Dict[str, Any] = {}
    seen: Dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=line_no)
        key, _, value_text = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", line=line_no)
        section, field = _resolve_key(key, line_no)
        dotted = f"{section}.{field}" if section else field
        if dotted in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[dotted]})", key=dotted, line=line_no)
        seen[dotted] = line_no
        try:
            value = yaml.safe_load(value_text.strip()) if value_text.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value {value_text.strip()!r}: {exc}", key=dotted, line=line_no)
        if section is None:
            data[field] = value
        else:
            data.setdefault(section, {})[field] = value

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        dotted = ".".join(str(part).replace("-", "_") for part in error["loc"])
        line = seen.get(dotted)
        if line is None and error["loc"]:
            line = seen.get(str(error["loc"][0]))
        raise ConfigError(error["msg"], key=dotted, line=line) from exc


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return f'"{value.value}"'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        mantissa, sep, exponent = text.partition("e")
        # the YAML resolver only reads 1.0e-3 as a float when the mantissa has a dot
        if sep and "." not in mantissa:
            text = f"{mantissa}.0e{exponent}"
        return text
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(item) for item in value) + "]"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_config(config: ExperimentConfig) -> str:
    """Canonical text form: every set value, dotted keys, one per line.

    In SI units alpha follows from the constants and is left out.
    """
    lines = []
    for key in TOP_LEVEL_KEYS:
        value = getattr(config, key)
        if value is not None:
            lines.append(f"{key} = {_format_value(value)}")
    for section in SECTIONS:
        body = getattr(config, section)
        for field in type(body).model_fields:
            value = getattr(body, field)
            if section == "physics" and field == "alpha" and body.unit_system is UnitSystem.SI:
                continue
            if value is not None:
                lines.append(f"{section}.{field} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def load_config_file(path: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text)


def build_context(config: ExperimentConfig) -> PhysicalContext:
    """Physical constants for ``config``, overrides applied."""
    physics, constants = config.physics, config.constants
    mass = constants.mass or physics.mass
    if physics.unit_system is UnitSystem.NATURAL:
        for name in ("hbar", "c", "eps0"):
            if getattr(constants, name) is not None:
                raise ConfigError("natural units fix this constant to 1", key=f"constants.{name}")
        ctx = PhysicalContext.natural(alpha=physics.alpha, mass=mass or 1.0)
        if constants.e_charge is not None:
            ctx = ctx.with_charge(constants.e_charge)
        return ctx

    if "alpha" in physics.model_fields_set:
        raise ConfigError("alpha is derived from the constants in SI units", key="physics.alpha")
    base = PhysicalContext.si_electron()
    try:
        return PhysicalContext(
            hbar=constants.hbar or base.hbar,
            c=constants.c or base.c,
            eps0=constants.eps0 or base.eps0,
            e_charge=constants.e_charge or base.e_charge,
            mass_bare=mass or base.mass_bare,
            unit_system=UnitSystem.SI,
        )
    except DomainError as exc:
        raise ConfigError(str(exc), key="constants") from exc


def build_cutoff(config: ExperimentConfig, ctx: PhysicalContext) -> CutoffConfig:
    if config.physics.de_broglie_momentum is not None:
        return de_broglie_cutoff(ctx, config.physics.de_broglie_momentum)
    return CutoffConfig.from_omega(config.physics.omega_max, ctx)


def run_length(config: ExperimentConfig) -> float:
    """``t_end`` if given, else ``periods`` periods of the harmonic frequency."""
    if config.numerics.t_end is not None:
        return config.numerics.t_end
    return config.numerics.periods * 2.0 * math.pi / config.physics.omega0
