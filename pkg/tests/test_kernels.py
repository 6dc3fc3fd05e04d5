"""Tests for vqsim.kernels and vqsim.quadrature."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vqsim.errors import DomainError
from vqsim.kernels import (
    BoundaryStencil,
    DerivativeStencil,
    correlator_mode_sum,
    dissipation_kernel,
    dissipation_kernel_from_delta,
    dissipation_weighted_integral,
    dissipation_weighted_integral_bruteforce,
    kernel_family,
    n1,
    n2,
    n2_plateau,
    noise_kernel,
    smoothed_delta,
    vacuum_correlator,
)
from vqsim.quadrature import composite_nodes, gauss_legendre, peaked_quad
from vqsim.units import CutoffConfig, fine_structure


@pytest.mark.unit
class TestClosedForms:
    """The rational closed forms against the correlator they come from."""

    def test_noise_at_origin(self, natural_ctx, kernels):
        """N(0) = e²/(π² ε0 c³ ε⁴)."""
        expected = natural_ctx.e_charge**2 / math.pi**2
        assert kernels.noise(0.0) == pytest.approx(expected, rel=1e-14)

    def test_noise_and_dissipation_from_correlator(self, natural_ctx, kernels):
        """N = (e²/ħ) Re G and D = −(2e²/ħ) Im G for τ > 0."""
        taus = np.logspace(-2, 3, 60)
        g = kernels.correlator(taus)
        scale = natural_ctx.e_charge**2 * np.abs(g)
        assert np.all(np.abs(kernels.noise(taus) - natural_ctx.e_charge**2 * g.real) <= 1e-13 * scale)
        assert np.all(np.abs(kernels.dissipation(taus) + 2.0 * natural_ctx.e_charge**2 * g.imag) <= 2e-13 * scale)

    def test_dissipation_is_causal(self, kernels):
        """D vanishes for τ ≤ 0."""
        assert_allclose(kernels.dissipation(np.array([-3.0, -0.5, 0.0])), 0.0)

    def test_dissipation_delta_form(self, kernels):
        """(e²/3πε0c³) δ_ε''' reproduces the rational form."""
        taus = np.linspace(0.01, 50.0, 400)
        scale = np.max(np.abs(kernels.dissipation(taus)))
        assert_allclose(kernels.dissipation_from_delta(taus), kernels.dissipation(taus), rtol=0, atol=1e-13 * scale)

    def test_module_functions_match_family(self, natural_ctx, cutoff, kernels):
        taus = np.array([0.0, 0.3, 2.0, 40.0])
        assert_allclose(noise_kernel(taus, natural_ctx, cutoff), kernels.noise(taus))
        assert_allclose(dissipation_kernel(taus, natural_ctx, cutoff), kernels.dissipation(taus))
        assert_allclose(dissipation_kernel_from_delta(taus, natural_ctx, cutoff), kernels.dissipation_from_delta(taus))
        assert_allclose(n1(taus, natural_ctx, cutoff), kernels.n1(taus))
        assert_allclose(n2(taus, natural_ctx, cutoff), kernels.n2(taus))
        assert_allclose(vacuum_correlator(taus, natural_ctx, cutoff), kernels.correlator(taus))

    def test_noise_is_even(self, natural_ctx, cutoff):
        """N(τ) = N(−τ) for random τ on both sides of ε."""
        taus = np.random.default_rng(11).uniform(-50.0, 50.0, 1000)
        assert_allclose(noise_kernel(-taus, natural_ctx, cutoff), noise_kernel(taus, natural_ctx, cutoff), rtol=1e-15)

    def test_correlator_conjugate_symmetry(self, natural_ctx, cutoff):
        """G(−τ) = G(τ)*."""
        taus = np.random.default_rng(12).uniform(-50.0, 50.0, 1000)
        g = vacuum_correlator(taus, natural_ctx, cutoff)
        assert_allclose(vacuum_correlator(-taus, natural_ctx, cutoff), np.conj(g), rtol=1e-14)

    def test_inconsistent_cutoff_rejected(self, natural_ctx):
        with pytest.raises(DomainError):
            kernel_family(natural_ctx, CutoffConfig(1.0, 1.0, 3.0))

    def test_n2_limits(self, kernels):
        """N₂(0) = 0 and N₂ → 2αħω_max²/(3πc²)."""
        assert kernels.n2(0.0) == 0.0
        assert kernels.n2(1e4) == pytest.approx(kernels.n2_plateau, rel=1e-7)

    def test_n2_plateau_value(self, natural_ctx, cutoff):
        alpha = fine_structure(natural_ctx)
        assert n2_plateau(natural_ctx, cutoff) == pytest.approx(2.0 * alpha / (3.0 * math.pi), rel=1e-14)

    def test_n2_overshoot(self, kernels):
        """N₂ peaks at t = √3ε at 9/8 of its plateau."""
        peak = math.sqrt(3.0) * kernels.eps
        assert kernels.n2(peak) / kernels.n2_plateau == pytest.approx(1.125, rel=1e-14)
        assert kernels.n2(0.9 * peak) < kernels.n2(peak)
        assert kernels.n2(1.1 * peak) < kernels.n2(peak)

    def test_n2_deficit(self, kernels):
        """The deficit form agrees with N₂∞ − N₂."""
        t = np.array([0.3, 1.0, 4.0, 40.0])
        assert_allclose(kernels.n2_deficit(t), kernels.n2_plateau - kernels.n2(t), rtol=1e-10, atol=1e-18)

    def test_n1_is_derivative_of_n2(self, kernels):
        """Central difference of N₂ against N₁."""
        t, h = 2.0, 1e-5
        derivative = (kernels.n2(t + h) - kernels.n2(t - h)) / (2.0 * h)
        assert derivative == pytest.approx(kernels.n1(t), rel=1e-6)

    def test_negative_arguments(self, kernels):
        """N₁ and N₂ are defined from τ = 0 on."""
        with pytest.raises(DomainError):
            kernels.n1(-1.0)
        with pytest.raises(DomainError):
            kernels.n2(np.array([1.0, -1.0]))

    def test_smoothed_delta_normalized(self, cutoff):
        """∫₀^T δ_ε = arctan(T/ε)/π, one half in the limit."""
        value = peaked_quad(lambda tau: smoothed_delta(tau, cutoff), 0.0, 1e3, cutoff.epsilon, epsrel=1e-12)
        assert value == pytest.approx(math.atan(1e3) / math.pi, rel=1e-10)

    def test_smoothed_delta_order(self, cutoff):
        with pytest.raises(DomainError):
            smoothed_delta(1.0, cutoff, order=4)


@pytest.mark.unit
class TestOracles:
    """Independent quadratures behind the closed forms."""

    @pytest.mark.parametrize("tau", [0.3, 1.0, 7.5, 120.0])
    def test_mode_sum(self, natural_ctx, cutoff, kernels, tau):
        """The k-integral reproduces G(τ) on both sides of τ = ε."""
        oracle = correlator_mode_sum(tau, natural_ctx, cutoff)
        closed = kernels.correlator(tau)
        assert abs(oracle - closed) <= 1e-9 * abs(closed)

    @pytest.mark.parametrize("tau", [0.5, 3.0, 60.0])
    def test_moments_by_quadrature(self, kernels, tau):
        """N₁ = ∫N and N₂ = ∫N₁ from zero."""
        n1_quad = peaked_quad(kernels.noise, 0.0, tau, kernels.eps, epsrel=1e-13)
        n1_scale = peaked_quad(lambda s: abs(kernels.noise(s)), 0.0, tau, kernels.eps, epsrel=1e-10)
        assert abs(kernels.n1(tau) - n1_quad) <= 1e-9 * n1_scale
        assert peaked_quad(kernels.n1, 0.0, tau, kernels.eps, epsrel=1e-13) == pytest.approx(kernels.n2(tau), rel=1e-9)

    def test_plateau_noise_cos(self, kernels):
        """∫₀^∞ N cos(ωτ) dτ = e²ω³e^{−ωε}/(12πε0c³)."""
        omega = 0.5
        quad = peaked_quad(lambda s: kernels.noise(s) * math.cos(omega * s), 0.0, 200.0, kernels.eps, epsrel=1e-10)
        assert quad == pytest.approx(kernels.plateau_noise_cos(omega), rel=1e-6)

    def test_plateau_noise_sin(self, kernels):
        """The principal value over modes equals ∫₀^∞ N sin(ωτ) dτ and is odd in ω."""
        omega = 0.5
        quad = peaked_quad(lambda s: kernels.noise(s) * math.sin(omega * s), 0.0, 200.0, kernels.eps, epsrel=1e-10)
        assert quad == pytest.approx(kernels.plateau_noise_sin(omega), rel=1e-5)
        assert kernels.plateau_noise_sin(-omega) == -kernels.plateau_noise_sin(omega)
        assert kernels.plateau_noise_sin(0.0) == 0.0


@pytest.mark.unit
class TestDissipationIdentity:
    """∫₀^t D f from the derivatives of f."""

    def test_constant_term_is_vem_stiffness(self, natural_ctx, cutoff, kernels):
        """The f(0) coefficient equals 2e²ω_max³/(3π²ε0c³)."""
        value = dissipation_weighted_integral(DerivativeStencil(1.0, 0.0, 0.0), natural_ctx, cutoff)
        assert value == pytest.approx(kernels.vem_stiffness, rel=1e-14)

    def test_third_derivative_term(self, natural_ctx, cutoff):
        """The f''' coefficient is −2αħ/(3c²), independent of the cutoff."""
        value = dissipation_weighted_integral(DerivativeStencil(0.0, 0.0, 1.0), natural_ctx, cutoff)
        assert value == pytest.approx(-2.0 * fine_structure(natural_ctx) / 3.0, rel=1e-14)

    @pytest.mark.parametrize(
        "f, stencil, upper",
        [
            (lambda tau: 1.0, DerivativeStencil(1.0, 0.0, 0.0), lambda t: BoundaryStencil(t, 1.0, 0.0, 0.0)),
            (lambda tau: tau * tau, DerivativeStencil(0.0, 2.0, 0.0), lambda t: BoundaryStencil(t, t * t, 2.0 * t, 2.0)),
            (lambda tau: tau**3, DerivativeStencil(0.0, 0.0, 6.0), lambda t: BoundaryStencil(t, t**3, 3.0 * t * t, 6.0 * t)),
        ],
        ids=["one", "tau2", "tau3"],
    )
    def test_finite_t_identity_exact_for_polynomials(self, natural_ctx, cutoff, f, stencil, upper):
        """With the boundary terms restored the identity is exact for cubic f."""
        t = 100.0 * cutoff.epsilon
        identity = dissipation_weighted_integral(stencil, natural_ctx, cutoff, upper=upper(t))
        brute = dissipation_weighted_integral_bruteforce(f, t, natural_ctx, cutoff)
        assert brute == pytest.approx(identity, rel=1e-8)

    def test_bruteforce_needs_long_window(self, natural_ctx, cutoff):
        with pytest.raises(DomainError):
            dissipation_weighted_integral_bruteforce(lambda tau: 1.0, 5.0, natural_ctx, cutoff)


@pytest.mark.unit
class TestQuadratureHelpers:
    def test_gauss_legendre_exact_for_polynomials(self):
        """Eight nodes integrate degree-15 polynomials exactly."""
        assert gauss_legendre(lambda x: x**15 + x**2, 0.0, 2.0) == pytest.approx(2.0**16 / 16 + 8.0 / 3.0, rel=1e-13)

    def test_composite_nodes(self):
        nodes, weights = composite_nodes(1.0, 3.0, panels=4)
        assert len(nodes) == 32
        assert weights.sum() == pytest.approx(2.0)

    def test_peaked_quad_reversed_limits(self):
        """Swapping the limits flips the sign."""
        forward = peaked_quad(lambda x: 1.0 / (1.0 + x * x), 0.0, 50.0, 1.0)
        assert peaked_quad(lambda x: 1.0 / (1.0 + x * x), 50.0, 0.0, 1.0) == pytest.approx(-forward)
        assert forward == pytest.approx(math.atan(50.0), rel=1e-12)

    def test_kernel_family_is_cached(self, natural_ctx):
        cut = CutoffConfig.from_omega(3.0, natural_ctx)
        assert kernel_family(natural_ctx, cut) is kernel_family(natural_ctx, cut)
