"""Tests for vqsim.units."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vqsim.errors import DomainError, UnitError
from vqsim.units import (
    CODATA_2018,
    CutoffConfig,
    Dimension,
    PhysicalContext,
    UnitSystem,
    coulomb_self_energy,
    constant_table,
    de_broglie_cutoff,
    dimensionalize,
    fine_structure,
    mass_shift,
    nondimensionalize,
    renormalized_mass,
    runaway_time,
)


@pytest.mark.unit
class TestPhysicalContext:
    """Construction and validation of the constant sets."""

    def test_natural_units_reproduce_alpha(self, natural_ctx):
        """e² = 4πα gives back the requested coupling."""
        assert fine_structure(natural_ctx) == pytest.approx(CODATA_2018["alpha"], rel=1e-14)

    def test_si_electron_alpha(self, si_ctx):
        """The CODATA constants give α ≈ 1/137.036."""
        assert si_ctx.unit_system is UnitSystem.SI
        assert fine_structure(si_ctx) == pytest.approx(7.2973525693e-3, rel=1e-8)

    def test_natural_units_reject_other_constants(self):
        """Natural units pin ħ = c = ε0 = 1."""
        with pytest.raises(DomainError):
            PhysicalContext(hbar=2.0, c=1.0, eps0=1.0, e_charge=1.0, mass_bare=1.0)

    def test_non_positive_constant(self):
        """Every constant must be strictly positive."""
        with pytest.raises(DomainError):
            PhysicalContext(hbar=1.0, c=1.0, eps0=1.0, e_charge=1.0, mass_bare=0.0)

    def test_with_mass_and_charge(self, natural_ctx):
        """Replacements keep the rest of the context."""
        heavy = natural_ctx.with_mass(1e6)
        assert heavy.mass_bare == 1e6
        assert heavy.e_charge == natural_ctx.e_charge
        charged = natural_ctx.with_charge(0.5)
        assert fine_structure(charged) == pytest.approx(0.25 / (4.0 * math.pi))


@pytest.mark.unit
class TestDerivedQuantities:
    """Mass shift, runaway time and the cutoff presets."""

    def test_zero_cutoff_gives_bare_mass(self, natural_ctx):
        """No modes, no electromagnetic mass."""
        assert mass_shift(natural_ctx, 0.0) == 0.0

    def test_negative_cutoff_rejected(self, natural_ctx):
        """ω_max < 0 is outside the domain."""
        with pytest.raises(DomainError):
            mass_shift(natural_ctx, -1.0)

    def test_renormalized_mass(self, natural_ctx, cutoff):
        """m_R = m + 4αħω_max/(3πc²)."""
        alpha = fine_structure(natural_ctx)
        assert renormalized_mass(natural_ctx, cutoff) == pytest.approx(1.0 + 4.0 * alpha / (3.0 * math.pi), rel=1e-15)

    def test_runaway_time_natural(self, natural_ctx, cutoff):
        """t0 = 2αħ/(3 m_R c²)."""
        alpha = fine_structure(natural_ctx)
        expected = 2.0 * alpha / (3.0 * renormalized_mass(natural_ctx, cutoff))
        assert runaway_time(natural_ctx, cutoff) == pytest.approx(expected, rel=1e-15)

    def test_runaway_time_electron(self, si_ctx):
        """For the electron at a modest cutoff t0 is the classical 6.27e-24 s."""
        cut = CutoffConfig.from_omega(1e15, si_ctx)
        assert runaway_time(si_ctx, cut) == pytest.approx(6.266e-24, rel=1e-3)

    def test_cutoff_scales(self, natural_ctx):
        """ε = 1/ω_max and k_max = ω_max/c."""
        cut = CutoffConfig.from_omega(4.0, natural_ctx)
        assert cut.epsilon == 0.25
        assert cut.k_max == 4.0

    def test_invalid_cutoff(self, natural_ctx):
        with pytest.raises(DomainError):
            CutoffConfig.from_omega(0.0, natural_ctx)

    def test_de_broglie_preset(self, natural_ctx):
        """k_max = p/(2πħ)."""
        cut = de_broglie_cutoff(natural_ctx, 2.0 * math.pi)
        assert cut.k_max == pytest.approx(1.0)
        with pytest.raises(DomainError):
            de_broglie_cutoff(natural_ctx, 0.0)

    def test_coulomb_self_energy(self, natural_ctx, cutoff):
        """αħω_max/π."""
        assert coulomb_self_energy(natural_ctx, cutoff) == pytest.approx(fine_structure(natural_ctx) / math.pi)

    def test_constant_table(self, natural_ctx, cutoff):
        """The manifest table names every constant a run depends on."""
        table = constant_table(natural_ctx, cutoff)
        for key in ("hbar", "c", "eps0", "e_charge", "mass_bare", "alpha", "omega_max", "mass_renormalized", "runaway_time"):
            assert key in table
        assert table["runaway_time"] == runaway_time(natural_ctx, cutoff)


@pytest.mark.unit
class TestNondimensionalize:
    """Scales built from ħ, c and ω_max."""

    def test_time_in_units_of_epsilon(self, natural_ctx):
        cut = CutoffConfig.from_omega(2.0, natural_ctx)
        assert nondimensionalize(1.0, "time", natural_ctx, cut) == pytest.approx(2.0)
        assert dimensionalize(2.0, "time", natural_ctx, cut) == pytest.approx(1.0)

    def test_unknown_tag(self, natural_ctx, cutoff):
        """Unrecognised dimension tags raise UnitError."""
        with pytest.raises(UnitError):
            nondimensionalize(1.0, "furlongs", natural_ctx, cutoff)

    @pytest.mark.parametrize("ctx_name, omega_max", [("natural_ctx", 3.0), ("si_ctx", 1e15)])
    def test_round_trip_every_dimension(self, request, ctx_name, omega_max):
        """dimensionalize undoes nondimensionalize to rounding for random values of every dimension."""
        ctx = request.getfixturevalue(ctx_name)
        cut = CutoffConfig.from_omega(omega_max, ctx)
        rng = np.random.default_rng(20261018)
        values = rng.uniform(-1.0, 1.0, 1000) * 10.0 ** rng.uniform(-12.0, 12.0, 1000)
        for dimension in Dimension:
            scaled = nondimensionalize(values, dimension, ctx, cut)
            assert_allclose(dimensionalize(scaled, dimension, ctx, cut), values, rtol=1e-14, atol=0.0)


@pytest.mark.unit
class TestCutoffConsistency:
    """ε, k_max and ω_max describe one cutoff."""

    def test_epsilon_must_match_omega(self):
        with pytest.raises(DomainError):
            CutoffConfig(1.0, 5.0, 3.0)

    def test_k_max_must_be_positive(self):
        with pytest.raises(DomainError):
            CutoffConfig(1.0, 1.0, 0.0)

    def test_k_max_must_match_speed_of_light(self, natural_ctx, si_ctx):
        """k_max·c = ω_max is checked against the context the cutoff is used with."""
        cut = CutoffConfig(1.0, 1.0, 3.0)
        with pytest.raises(DomainError):
            cut.check_against(natural_ctx)
        CutoffConfig.from_omega(1.0, natural_ctx).check_against(natural_ctx)
        CutoffConfig.from_omega(1e15, si_ctx).check_against(si_ctx)

    @pytest.mark.parametrize("omega_max", [1e-4, 0.37, 1.0, 3.0, 1e6])
    def test_from_omega_is_consistent(self, natural_ctx, omega_max):
        cut = CutoffConfig.from_omega(omega_max, natural_ctx)
        assert cut.epsilon * cut.omega_max == pytest.approx(1.0, rel=1e-15)
        cut.check_against(natural_ctx)
