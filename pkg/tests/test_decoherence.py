"""Tests for vqsim.decoherence."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from vqsim.decoherence import (
    ProfileKind,
    SwitchingProfile,
    apply_decoherence,
    coherence_length,
    collisional_exponent,
    decoherence_factor,
    decoherence_report,
    false_dec_limit,
    mirrored,
    switched_n2,
    switched_n2_bruteforce,
)
from vqsim.errors import BasisMismatchError, DomainError, ProfileError
from vqsim.kernels import n2
from vqsim.states import GridBasis, OscillatorBasis, cat_state, number_state

PLATEAU_LENGTH = math.sqrt(3.0 * math.pi / (2.0 * 7.2973525693e-3))


@pytest.mark.unit
class TestUnswitched:
    def test_coherence_length_plateau(self, natural_ctx, cutoff):
        """Long after switch-on l_x settles at sqrt(3π/2α) in units of 1/ω."""
        assert coherence_length(1e4, natural_ctx, cutoff) == pytest.approx(25.41, abs=0.01)
        assert coherence_length(1e4, natural_ctx, cutoff) == pytest.approx(PLATEAU_LENGTH, rel=1e-6)

    def test_coherence_length_needs_positive_time(self, natural_ctx, cutoff):
        with pytest.raises(DomainError):
            coherence_length(0.0, natural_ctx, cutoff)

    def test_factor_at_coherence_length(self, natural_ctx, cutoff):
        """A separation of l_x(t) leaves a factor 1/e."""
        t = 3.0
        length = coherence_length(t, natural_ctx, cutoff)
        assert decoherence_factor(length, t, natural_ctx, cutoff) == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert decoherence_factor(length, 0.0, natural_ctx, cutoff) == 1.0

    def test_apply_to_cat_state(self, natural_ctx, cutoff):
        """Populations are untouched; the cross terms shrink by the decoherence factor."""
        grid = GridBasis(321, -40.0, 40.0)
        rho = cat_state(grid, 50.0, 2.5)
        after = apply_decoherence(rho, grid, 100.0, natural_ctx, cutoff)
        np.testing.assert_allclose(np.diag(after.elements), np.diag(rho.elements))
        left, right = np.argmin(np.abs(grid.points + 25.0)), np.argmin(np.abs(grid.points - 25.0))
        expected = decoherence_factor(grid.points[right] - grid.points[left], 100.0, natural_ctx, cutoff)
        assert abs(after.elements[left, right]) / abs(rho.elements[left, right]) == pytest.approx(expected, rel=1e-10)

    def test_apply_needs_grid_state(self, natural_ctx, cutoff):
        grid = GridBasis(64, -5.0, 5.0)
        with pytest.raises(BasisMismatchError):
            apply_decoherence(number_state(OscillatorBasis(64, 1.0), 0), grid, 1.0, natural_ctx, cutoff)


@pytest.mark.unit
class TestProfiles:
    """Construction and validation of switching profiles."""

    def test_ramps_must_fit(self):
        with pytest.raises(ProfileError):
            SwitchingProfile.linear_ramp(6.0, 10.0)

    def test_endpoints_in_unit_interval(self):
        with pytest.raises(ProfileError):
            SwitchingProfile.raised_cosine_ramp(1.0, 10.0, f_start=1.5)

    def test_missing_second_derivative(self):
        with pytest.raises(ProfileError):
            SwitchingProfile.from_callables(np.ones_like, np.zeros_like, None, 10.0)

    def test_custom_needs_four_samples(self):
        with pytest.raises(ProfileError):
            SwitchingProfile.custom([0.0, 1.0, 2.0], [0.0, 0.5, 1.0])

    def test_custom_values_bounded(self):
        with pytest.raises(ProfileError):
            SwitchingProfile.custom([0.0, 1.0, 2.0, 3.0], [0.0, 2.0, 2.0, 0.0])

    def test_raised_cosine_shape(self):
        """f rises from f_start to 1 with vanishing slope at both ends of the ramp."""
        profile = SwitchingProfile.raised_cosine_ramp(2.0, 10.0, f_start=0.2, f_end=0.6)
        assert profile.kind is ProfileKind.RAISED_COSINE_RAMP
        assert profile.f_start == pytest.approx(0.2)
        assert profile.f_end == pytest.approx(0.6)
        assert profile.f(5.0) == 1.0
        assert profile.df(0.0) == pytest.approx(0.0, abs=1e-15)
        assert profile.df(2.0) == pytest.approx(0.0, abs=1e-15)

    def test_linear_ramp_kinks(self):
        """ḟ jumps by −(1−a)/r at the top of the first ramp."""
        profile = SwitchingProfile.linear_ramp(2.0, 10.0, f_start=0.5)
        assert profile.kinks[0] == (2.0, pytest.approx(-0.25))
        assert profile.kinks[1] == (8.0, pytest.approx(-0.5))

    def test_mirrored(self):
        profile = SwitchingProfile.linear_ramp(2.0, 10.0, f_start=0.5, f_end=0.0)
        flipped = mirrored(profile)
        assert flipped.f_start == pytest.approx(0.0)
        assert flipped.f_end == pytest.approx(0.5)
        assert flipped.df(1.0) == pytest.approx(-profile.df(9.0))
        assert [s for s, _ in flipped.kinks] == [2.0, 8.0]


@pytest.mark.unit
class TestSwitchedNoise:
    def test_constant_profile_matches_unswitched(self, natural_ctx, cutoff):
        """Always-on coupling reproduces N₂(T)."""
        profile = SwitchingProfile.constant(40.0)
        assert switched_n2(profile, natural_ctx, cutoff) == pytest.approx(n2(40.0, natural_ctx, cutoff), rel=1e-8)

    def test_intermediate_time(self, natural_ctx, cutoff):
        profile = SwitchingProfile.constant(40.0)
        assert switched_n2(profile, natural_ctx, cutoff, t=10.0) == pytest.approx(
            n2(10.0, natural_ctx, cutoff), rel=1e-8
        )
        with pytest.raises(DomainError):
            switched_n2(profile, natural_ctx, cutoff, t=50.0)

    def test_false_decoherence_limit(self, natural_ctx, cutoff, kernels):
        profile = SwitchingProfile.linear_ramp(5.0, 20.0, f_start=1.0, f_end=0.0)
        assert false_dec_limit(profile, natural_ctx, cutoff) == pytest.approx(0.5 * kernels.n2_plateau)

    def test_report_for_constant_profile(self, natural_ctx, cutoff):
        report = decoherence_report(SwitchingProfile.constant(30.0), natural_ctx, cutoff)
        assert report.restoration_ratio == pytest.approx(1.0, rel=1e-8)
        assert report.coherence_length_final == pytest.approx(coherence_length(30.0, natural_ctx, cutoff), rel=1e-8)
        assert report.collisional_exponent == 0.0

    @pytest.mark.slow
    def test_reduction_matches_nested_quadrature(self, natural_ctx, cutoff, kernels):
        """The integration-by-parts reduction agrees with the direct double integral."""
        profile = SwitchingProfile.raised_cosine_ramp(50.0, 200.0)
        reduced = switched_n2(profile, natural_ctx, cutoff)
        brute = switched_n2_bruteforce(profile, natural_ctx, cutoff)
        assert abs(reduced - brute) <= 1e-6 * kernels.n2_plateau

    @pytest.mark.slow
    def test_slow_switching_restores_coherence(self, natural_ctx, cutoff):
        """Switching off over 10³ε removes all but a percent of the plateau exponent."""
        profile = SwitchingProfile.raised_cosine_ramp(1e3, 5e3)
        report = decoherence_report(profile, natural_ctx, cutoff)
        assert report.analytic_limit == 0.0
        assert report.restoration_ratio <= 1e-2


@pytest.mark.unit
class TestCollisional:
    def test_constant_profile(self):
        """Without switching the exponent is Λ Δx² T."""
        profile = SwitchingProfile.constant(12.0)
        assert collisional_exponent(0.5, 2.0, profile) == pytest.approx(0.5 * 4.0 * 12.0)

    def test_ramped_profile_area(self):
        profile = SwitchingProfile.raised_cosine_ramp(3.0, 12.0, f_start=0.2, f_end=0.4)
        area = quad(profile.f, 0.0, 12.0, points=[3.0, 9.0])[0]
        assert collisional_exponent(1.0, 1.0, profile) == pytest.approx(area, rel=1e-9)

    def test_negative_rate(self):
        with pytest.raises(DomainError):
            collisional_exponent(-1.0, 1.0, SwitchingProfile.constant(1.0))
