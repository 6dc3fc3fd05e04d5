"""
Physical constants, unit systems and derived quantities.

Everything in the library is written with explicit ħ, c, ε0 and e so the same
formulas serve SI and natural units. Natural units (ħ = c = ε0 = 1) with
ω_max-scaled time are the working default; SI only shows up at the I/O edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Union

from .errors import DomainError, UnitError

CUTOFF_CONSISTENCY_TOL = 1e-12

# ============================================================================
# CODATA 2018
# ============================================================================

CODATA_2018: Dict[str, float] = {
    "hbar": 1.054571817e-34,  # J s
    "c": 299792458.0,  # m / s
    "eps0": 8.8541878128e-12,  # F / m
    "e_charge": 1.602176634e-19,  # C
    "electron_mass": 9.1093837015e-31,  # kg
    "alpha": 7.2973525693e-3,
}


class UnitSystem(str, Enum):
    SI = "si"
    NATURAL = "natural"


class Dimension(str, Enum):
    """Dimension tags understood by :func:`nondimensionalize`."""

    TIME = "time"
    LENGTH = "length"
    ENERGY = "energy"
    FREQUENCY = "frequency"
    MASS = "mass"
    MOMENTUM = "momentum"
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"
    KERNEL = "kernel"
    KERNEL_MOMENT1 = "kernel_moment1"
    KERNEL_MOMENT2 = "kernel_moment2"


# ============================================================================
# Contexts
# ============================================================================


@dataclass(frozen=True)
class PhysicalContext:
    """Constants describing one charged particle and the unit system they live in."""

    hbar: float
    c: float
    eps0: float
    e_charge: float
    mass_bare: float
    unit_system: UnitSystem = UnitSystem.NATURAL

    def __post_init__(self) -> None:
        for name in ("hbar", "c", "eps0", "e_charge", "mass_bare"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be strictly positive, got {value!r}")
        if self.unit_system is UnitSystem.NATURAL:
            if (self.hbar, self.c, self.eps0) != (1.0, 1.0, 1.0):
                raise DomainError("natural units require hbar = c = eps0 = 1 exactly")

    @classmethod
    def si_electron(cls) -> "PhysicalContext":
        return cls(
            hbar=CODATA_2018["hbar"],
            c=CODATA_2018["c"],
            eps0=CODATA_2018["eps0"],
            e_charge=CODATA_2018["e_charge"],
            mass_bare=CODATA_2018["electron_mass"],
            unit_system=UnitSystem.SI,
        )

    @classmethod
    def natural(cls, alpha: float = CODATA_2018["alpha"], mass: float = 1.0) -> "PhysicalContext":
        """Natural units with the charge fixed through e² = 4πα."""
        if alpha <= 0.0:
            raise DomainError(f"alpha must be positive, got {alpha!r}")
        return cls(
            hbar=1.0,
            c=1.0,
            eps0=1.0,
            e_charge=math.sqrt(4.0 * math.pi * alpha),
            mass_bare=mass,
            unit_system=UnitSystem.NATURAL,
        )

    def with_charge(self, e_charge: float) -> "PhysicalContext":
        return replace(self, e_charge=e_charge)

    def with_mass(self, mass: float) -> "PhysicalContext":
        return replace(self, mass_bare=mass)


@dataclass(frozen=True)
class CutoffConfig:
    """UV cutoff: ω_max together with the smoothing time ε and wavenumber k_max."""

    omega_max: float
    epsilon: float
    k_max: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.omega_max) and self.omega_max > 0.0):
            raise DomainError(f"omega_max must be positive, got {self.omega_max!r}")
        if not (math.isfinite(self.k_max) and self.k_max > 0.0):
            raise DomainError(f"k_max must be positive, got {self.k_max!r}")
        if abs(self.epsilon * self.omega_max - 1.0) > CUTOFF_CONSISTENCY_TOL:
            raise DomainError(f"epsilon={self.epsilon!r} is not 1/omega_max for omega_max={self.omega_max!r}")

    def check_against(self, ctx: PhysicalContext) -> None:
        """k_max·c must equal ω_max in the units of ``ctx``."""
        if abs(self.k_max * ctx.c / self.omega_max - 1.0) > CUTOFF_CONSISTENCY_TOL:
            raise DomainError(f"k_max={self.k_max!r} does not match omega_max={self.omega_max!r} at c={ctx.c!r}")

    @classmethod
    def from_omega(cls, omega_max: float, ctx: PhysicalContext) -> "CutoffConfig":
        if not omega_max > 0.0:
            raise DomainError(f"omega_max must be positive, got {omega_max!r}")
        return cls(omega_max=omega_max, epsilon=1.0 / omega_max, k_max=omega_max / ctx.c)


def de_broglie_cutoff(ctx: PhysicalContext, momentum: float) -> CutoffConfig:
    """Cutoff preset k_max = 1/λ_db for a particle carrying ``momentum`` (λ_db = 2πħ/p)."""
    if momentum <= 0.0:
        raise DomainError(f"momentum must be positive, got {momentum!r}")
    wavelength = 2.0 * math.pi * ctx.hbar / momentum
    return CutoffConfig.from_omega(ctx.c / wavelength, ctx)


# ============================================================================
# Derived quantities
# ============================================================================


def fine_structure(ctx: PhysicalContext) -> float:
    return ctx.e_charge**2 / (4.0 * math.pi * ctx.eps0 * ctx.hbar * ctx.c)


def mass_shift(ctx: PhysicalContext, omega_max: float) -> float:
    """Electromagnetic mass 4αħω_max/(3πc²); zero cutoff gives zero shift."""
    if omega_max < 0.0:
        raise DomainError(f"omega_max must be non-negative, got {omega_max!r}")
    return 4.0 * fine_structure(ctx) * ctx.hbar * omega_max / (3.0 * math.pi * ctx.c**2)


def renormalized_mass(ctx: PhysicalContext, cut: CutoffConfig) -> float:
    return ctx.mass_bare + mass_shift(ctx, cut.omega_max)


def runaway_time(ctx: PhysicalContext, cut: CutoffConfig) -> float:
    """t0 = 2αħ/(3 m_R c²), the e-folding time of the runaway solution."""
    m_r = renormalized_mass(ctx, cut)
    return 2.0 * fine_structure(ctx) * ctx.hbar / (3.0 * m_r * ctx.c**2)


def coulomb_self_energy(ctx: PhysicalContext, cut: CutoffConfig) -> float:
    """Cutoff-dependent Coulomb self-energy αħω_max/π (a constant energy offset)."""
    return fine_structure(ctx) * ctx.hbar * cut.omega_max / math.pi


def constant_table(ctx: PhysicalContext, cut: CutoffConfig) -> Dict[str, float]:
    """Every constant a run depends on, for the run manifest."""
    return {
        "hbar": ctx.hbar,
        "c": ctx.c,
        "eps0": ctx.eps0,
        "e_charge": ctx.e_charge,
        "mass_bare": ctx.mass_bare,
        "alpha": fine_structure(ctx),
        "omega_max": cut.omega_max,
        "epsilon": cut.epsilon,
        "k_max": cut.k_max,
        "mass_renormalized": renormalized_mass(ctx, cut),
        "runaway_time": runaway_time(ctx, cut),
        "coulomb_self_energy": coulomb_self_energy(ctx, cut),
    }


# ============================================================================
# Nondimensionalization
# ============================================================================


def _scale(dimension: Dimension, ctx: PhysicalContext, cut: CutoffConfig) -> float:
    w, k = cut.omega_max, cut.k_max
    scales = {
        Dimension.TIME: 1.0 / w,
        Dimension.LENGTH: 1.0 / k,
        Dimension.ENERGY: ctx.hbar * w,
        Dimension.FREQUENCY: w,
        Dimension.MASS: ctx.hbar * w / ctx.c**2,
        Dimension.MOMENTUM: ctx.hbar * k,
        Dimension.VELOCITY: ctx.c,
        Dimension.ACCELERATION: ctx.c * w,
        Dimension.KERNEL: ctx.hbar * k**2 * w**2,
        Dimension.KERNEL_MOMENT1: ctx.hbar * k**2 * w,
        Dimension.KERNEL_MOMENT2: ctx.hbar * k**2,
    }
    return scales[dimension]


def _as_dimension(tag: Union[str, Dimension]) -> Dimension:
    try:
        return Dimension(tag)
    except ValueError as exc:
        raise UnitError(f"unknown dimension tag: {tag!r}") from exc


def nondimensionalize(value, dimension: Union[str, Dimension], ctx: PhysicalContext, cut: CutoffConfig):
    """Express ``value`` in units built from ħ, c and ω_max (works on arrays too)."""
    return value / _scale(_as_dimension(dimension), ctx, cut)


def dimensionalize(value, dimension: Union[str, Dimension], ctx: PhysicalContext, cut: CutoffConfig):
    return value * _scale(_as_dimension(dimension), ctx, cut)
