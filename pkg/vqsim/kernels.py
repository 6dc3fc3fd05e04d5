"""
Regularized vacuum kernels.

The conjugate-field correlator of the electromagnetic vacuum, regularized with an
exponential UV cutoff, is

    G(τ) = ħ / (π² ε0 c³ (τ − iε)⁴),

from which the noise kernel N = (e²/ħ) Re G and the causal dissipation kernel
D = −(2e²/ħ) Im G θ(τ) follow.  N₁ and N₂ are the first and second
antiderivatives of N starting at zero.  Every closed form has an independent
quadrature oracle next to it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError
from .quadrature import checked_quad, peaked_quad
from .units import CutoffConfig, PhysicalContext, fine_structure

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _out(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class DerivativeStencil:
    """f(0), f''(0) and f'''(0): the data the dissipation identity needs."""

    f0: float
    f2: float
    f3: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.f0, self.f2, self.f3)):
            raise DomainError(f"stencil values must be finite: {self}")


@dataclass(frozen=True)
class BoundaryStencil:
    """f, f' and f'' at the upper limit τ = t of a dissipation integral."""

    t: float
    f: float
    f1: float
    f2: float


# ============================================================================
# Kernel family
# ============================================================================


@dataclass(frozen=True)
class KernelFamily:
    """All kernels for one (context, cutoff) pair with prefactors computed once."""

    ctx: PhysicalContext
    cut: CutoffConfig
    prefactor_noise: float = field(init=False)
    prefactor_n1: float = field(init=False)
    dissipation_prefactor: float = field(init=False)
    correlator_prefactor: float = field(init=False)
    vem_stiffness: float = field(init=False)

    def __post_init__(self) -> None:
        ctx = self.ctx
        self.cut.check_against(ctx)
        e2 = ctx.e_charge**2
        object.__setattr__(self, "prefactor_noise", e2 / (math.pi**2 * ctx.eps0 * ctx.c**3))
        object.__setattr__(
            self, "prefactor_n1", 4.0 * fine_structure(ctx) * ctx.hbar / (3.0 * math.pi * ctx.c**2)
        )
        object.__setattr__(self, "dissipation_prefactor", e2 / (3.0 * math.pi * ctx.eps0 * ctx.c**3))
        object.__setattr__(self, "correlator_prefactor", ctx.hbar / (math.pi**2 * ctx.eps0 * ctx.c**3))
        # V_EM = (e²/2ε0) δ⊥(0) x², δ⊥(0) = (2/3)(2π)⁻³ ∫d³k e^{-k/k_max} = 2k_max³/(3π²)
        transverse_delta = (2.0 / 3.0) * (4.0 * math.pi * 2.0 * self.cut.k_max**3) / (2.0 * math.pi) ** 3
        object.__setattr__(self, "vem_stiffness", 2.0 * (e2 / (2.0 * ctx.eps0)) * transverse_delta)

    @property
    def eps(self) -> float:
        return self.cut.epsilon

    @property
    def n2_plateau(self) -> float:
        """N₂(t → ∞) = 2αħω_max²/(3πc²)."""
        return 0.5 * self.prefactor_n1 * self.cut.omega_max**2

    # ------------------------------------------------------------------
    # closed forms
    # ------------------------------------------------------------------

    def delta(self, tau: ArrayLike, order: int = 0) -> ArrayLike:
        """Smoothed Dirac delta ε/(π(τ²+ε²)) and its first three derivatives."""
        return smoothed_delta(tau, self.cut, order)

    def correlator(self, tau: ArrayLike) -> Union[complex, np.ndarray]:
        z = np.asarray(tau, dtype=float) - 1j * self.eps
        z2 = z * z
        value = self.correlator_prefactor / (z2 * z2)
        return complex(value) if np.ndim(value) == 0 else value

    def noise(self, tau: ArrayLike) -> ArrayLike:
        tau = np.asarray(tau, dtype=float)
        e2, t2 = self.eps**2, tau * tau
        return _out(self.prefactor_noise * (e2 * e2 - 6.0 * e2 * t2 + t2 * t2) / (e2 + t2) ** 4)

    def dissipation(self, tau: ArrayLike) -> ArrayLike:
        tau = np.asarray(tau, dtype=float)
        e = self.eps
        value = 8.0 * self.prefactor_noise * e * tau * (e * e - tau * tau) / (e * e + tau * tau) ** 4
        return _out(np.where(tau > 0.0, value, 0.0))

    def dissipation_from_delta(self, tau: ArrayLike) -> ArrayLike:
        tau = np.asarray(tau, dtype=float)
        return _out(np.where(tau > 0.0, self.dissipation_prefactor * self.delta(tau, 3), 0.0))

    def n1(self, tau: ArrayLike) -> ArrayLike:
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < 0.0):
            raise DomainError("n1 is defined for tau >= 0")
        e2 = self.eps**2
        return _out(-self.prefactor_n1 * (tau**3 - 3.0 * tau * e2) / (tau * tau + e2) ** 3)

    def n2(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError("n2 is defined for t >= 0")
        e2, t2 = self.eps**2, t * t
        return _out(self.n2_plateau * (t2 * t2 + 3.0 * t2 * e2) / (t2 + e2) ** 2)

    def n2_deficit(self, t: ArrayLike) -> ArrayLike:
        """N₂∞ − N₂(t) = N₂∞ ε²(ε²−t²)/(t²+ε²)², written without cancellation."""
        t = np.asarray(t, dtype=float)
        e2, t2 = self.eps**2, t * t
        return _out(self.n2_plateau * e2 * (e2 - t2) / (t2 + e2) ** 2)

    # ------------------------------------------------------------------
    # oscillator plateaus (used by the Markov coefficients)
    # ------------------------------------------------------------------

    def plateau_noise_cos(self, omega: float) -> float:
        """∫₀^∞ N(τ) cos(ωτ) dτ, the vacuum spectral density at ω."""
        ctx = self.ctx
        w = abs(omega)
        return ctx.e_charge**2 * w**3 * math.exp(-w * self.eps) / (12.0 * math.pi * ctx.eps0 * ctx.c**3)

    def plateau_noise_sin(self, omega: float) -> float:
        """∫₀^∞ N(τ) sin(ωτ) dτ as a principal value over the field modes."""
        if omega == 0.0:
            return 0.0
        ctx = self.ctx
        w = abs(omega)
        e = self.eps
        upper = 2.0 * w + 60.0 / e

        def numerator(mode: float) -> float:
            return -w * mode**3 * math.exp(-mode * e) / (mode + w)

        principal = checked_quad(numerator, 0.0, upper, weight="cauchy", wvar=w, epsrel=1e-11)
        value = ctx.e_charge**2 / (6.0 * math.pi**2 * ctx.eps0 * ctx.c**3) * principal
        return math.copysign(value, omega)


@lru_cache(maxsize=64)
def kernel_family(ctx: PhysicalContext, cut: CutoffConfig) -> KernelFamily:
    return KernelFamily(ctx, cut)


# ============================================================================
# Module-level operations
# ============================================================================


def smoothed_delta(tau: ArrayLike, cut: CutoffConfig, order: int = 0) -> ArrayLike:
    tau = np.asarray(tau, dtype=float)
    e = cut.epsilon
    s = tau * tau + e * e
    derivatives = {
        0: lambda: e / (math.pi * s),
        1: lambda: -2.0 * e * tau / (math.pi * s**2),
        2: lambda: -2.0 * e * (e * e - 3.0 * tau * tau) / (math.pi * s**3),
        3: lambda: 24.0 * e * tau * (e * e - tau * tau) / (math.pi * s**4),
    }
    if order not in derivatives:
        raise DomainError(f"derivative order must be 0..3, got {order}")
    return _out(derivatives[order]())


def vacuum_correlator(tau: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig):
    return kernel_family(ctx, cut).correlator(tau)


def noise_kernel(tau: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig) -> ArrayLike:
    return kernel_family(ctx, cut).noise(tau)


def dissipation_kernel(tau: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig) -> ArrayLike:
    return kernel_family(ctx, cut).dissipation(tau)


def dissipation_kernel_from_delta(tau: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig) -> ArrayLike:
    return kernel_family(ctx, cut).dissipation_from_delta(tau)


def n1(tau: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig) -> ArrayLike:
    return kernel_family(ctx, cut).n1(tau)


def n2(t: ArrayLike, ctx: PhysicalContext, cut: CutoffConfig) -> ArrayLike:
    return kernel_family(ctx, cut).n2(t)


def n2_plateau(ctx: PhysicalContext, cut: CutoffConfig) -> float:
    return kernel_family(ctx, cut).n2_plateau


def correlator_mode_sum(tau: float, ctx: PhysicalContext, cut: CutoffConfig) -> complex:
    """Correlator from the mode sum (8π/3) C² ∫₀^∞ k³ e^{−k/k_max} e^{−ikcτ} dk.

    The k contour is rotated onto the imaginary axis when |τ| ≥ ε so the
    integrand decays without oscillating; for |τ| < ε the real axis is already
    benign.
    """
    c_squared = ctx.hbar * ctx.c / (2.0 * ctx.eps0 * (2.0 * math.pi) ** 3)
    prefactor = (8.0 * math.pi / 3.0) * c_squared
    a = 1.0 / cut.k_max
    b = ctx.c * tau

    def moment(trig: Callable[[float], float], w: float) -> float:
        return checked_quad(lambda q: q**3 * math.exp(-q) * trig(q * w), 0.0, math.inf, epsrel=1e-13)

    if abs(b) < a:
        w = b / a
        re = moment(math.cos, w)
        im = -moment(math.sin, w)
        scale = 1.0 / a**4
    else:
        w = a / abs(b)
        sign = math.copysign(1.0, b)
        re = moment(math.cos, w)
        im = sign * moment(math.sin, w)
        scale = 1.0 / b**4
    return prefactor * scale * complex(re, im)


# ============================================================================
# Dissipation-weighted integrals
# ============================================================================


def dissipation_weighted_integral(
    stencil: DerivativeStencil,
    ctx: PhysicalContext,
    cut: CutoffConfig,
    upper: Optional[BoundaryStencil] = None,
) -> float:
    """∫₀^t D(τ) f(τ) dτ from the derivatives of f at the origin.

    Without ``upper`` the boundary terms at τ = t are dropped (t ≫ ε). With
    ``upper`` they are restored exactly and the origin half-weight becomes
    arctan(t/ε)/π, which makes the result exact for cubic f.
    """
    alpha = fine_structure(ctx)
    w = cut.omega_max
    value = (
        -(2.0 * alpha * ctx.hbar / (3.0 * ctx.c**2)) * stencil.f3
        - (4.0 * alpha * ctx.hbar * w / (3.0 * math.pi * ctx.c**2)) * stencil.f2
        + (2.0 * ctx.e_charge**2 * w**3 / (3.0 * math.pi**2 * ctx.eps0 * ctx.c**3)) * stencil.f0
    )
    if upper is None:
        return value
    kernels = kernel_family(ctx, cut)
    t = upper.t
    boundary = (
        kernels.delta(t, 2) * upper.f - kernels.delta(t, 1) * upper.f1 + kernels.delta(t) * upper.f2
    )
    half_weight = 0.5 - math.atan(t / cut.epsilon) / math.pi
    return value + kernels.dissipation_prefactor * (boundary + half_weight * stencil.f3)


def dissipation_weighted_integral_bruteforce(
    f: Callable[[float], float],
    t: float,
    ctx: PhysicalContext,
    cut: CutoffConfig,
    epsrel: float = 1e-13,
) -> float:
    """Adaptive quadrature of ∫₀^t D(τ) f(τ) dτ resolving the ε-scale peak."""
    if t < 20.0 * cut.epsilon:
        raise DomainError(f"t must be at least 20 epsilon, got t/eps = {t / cut.epsilon:.3g}")
    kernels = kernel_family(ctx, cut)
    return peaked_quad(lambda tau: kernels.dissipation(tau) * f(tau), 0.0, t, cut.epsilon, epsrel=epsrel)
