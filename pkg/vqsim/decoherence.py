"""
Vacuum decoherence, switched couplings and the collisional contrast.

With only the noise term kept, a position superposition loses coherence as
exp(−Δx² N₂(t)/ħ). Switching the coupling with a profile f(t) replaces N₂ by

    Ñ₂(T) = ∫₀^T dt₁ f(t₁) ∫₀^{t₁} dτ f(t₁−τ) N(τ),

which tends to (N₂∞/2)(f(0)² + f(T)²) for slow switching, so coherence comes
back when the coupling is switched off adiabatically. Collisional decoherence
has no such memory and its exponent only grows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BasisMismatchError, DomainError, ProfileError
from .kernels import KernelFamily, kernel_family
from .quadrature import checked_quad, peaked_quad
from .states import BasisKind, DensityMatrix, GridBasis
from .units import CutoffConfig, PhysicalContext

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]
PROFILE_BOUND_TOL = 1e-9
SWITCHED_EPSREL = 1e-10


class ProfileKind(str, Enum):
    CONSTANT = "constant"
    LINEAR_RAMP = "linear_ramp"
    RAISED_COSINE_RAMP = "raised_cosine_ramp"
    CUSTOM = "custom"


def _array_fn(fn: Evaluator) -> Evaluator:
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        value = np.asarray(fn(np.atleast_1d(t)), dtype=float)
        return float(value.reshape(-1)[0]) if t.ndim == 0 else value

    return wrapped


@dataclass(frozen=True)
class SwitchingProfile:
    """Coupling envelope f(t) on [0, T] with its first two derivatives.

    ``kinks`` lists (time, jump in ḟ) for profiles whose ḟ is discontinuous;
    they enter the reduction as the delta part of f̈. ``breakpoints`` are
    the places where f̈ itself may jump.
    """

    kind: ProfileKind
    total_duration: float
    ramp_duration: float
    f: Evaluator
    df: Evaluator
    d2f: Optional[Evaluator]
    kinks: Tuple[Tuple[float, float], ...] = ()
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.total_duration > 0.0:
            raise ProfileError(f"total duration must be positive, got {self.total_duration!r}")
        if self.d2f is None:
            raise ProfileError("profile lacks a second derivative")
        samples = self.f(np.linspace(0.0, self.total_duration, 2001))
        if samples.min() < -PROFILE_BOUND_TOL or samples.max() > 1.0 + PROFILE_BOUND_TOL:
            raise ProfileError(f"profile leaves [0, 1]: range [{samples.min():.6g}, {samples.max():.6g}]")

    @property
    def f_start(self) -> float:
        return float(self.f(0.0))

    @property
    def f_end(self) -> float:
        return float(self.f(self.total_duration))

    # ------------------------------------------------------------------
    # factories
    # ------------------------------------------------------------------

    @classmethod
    def constant(cls, total_duration: float) -> "SwitchingProfile":
        return cls(
            kind=ProfileKind.CONSTANT,
            total_duration=total_duration,
            ramp_duration=0.0,
            f=_array_fn(np.ones_like),
            df=_array_fn(np.zeros_like),
            d2f=_array_fn(np.zeros_like),
            breakpoints=(0.0, total_duration),
        )

    @classmethod
    def linear_ramp(
        cls, ramp_duration: float, total_duration: float, f_start: float = 0.0, f_end: float = 0.0
    ) -> "SwitchingProfile":
        r, T, a, b = ramp_duration, total_duration, f_start, f_end
        _check_ramp(r, T, a, b)

        def f(t):
            return np.select([t < r, t > T - r], [a + (1.0 - a) * t / r, b + (1.0 - b) * (T - t) / r], 1.0)

        def df(t):
            return np.select([t < r, t > T - r], [np.full_like(t, (1.0 - a) / r), np.full_like(t, -(1.0 - b) / r)], 0.0)

        kinks = tuple((s, jump) for s, jump in ((r, -(1.0 - a) / r), (T - r, -(1.0 - b) / r)) if jump != 0.0)
        return cls(
            kind=ProfileKind.LINEAR_RAMP,
            total_duration=T,
            ramp_duration=r,
            f=_array_fn(f),
            df=_array_fn(df),
            d2f=_array_fn(np.zeros_like),
            kinks=kinks,
            breakpoints=(0.0, r, T - r, T),
        )

    @classmethod
    def raised_cosine_ramp(
        cls, ramp_duration: float, total_duration: float, f_start: float = 0.0, f_end: float = 0.0
    ) -> "SwitchingProfile":
        r, T, a, b = ramp_duration, total_duration, f_start, f_end
        _check_ramp(r, T, a, b)
        k = math.pi / r

        def phases(t):
            return np.clip(t / r, 0.0, 1.0) * math.pi, np.clip((T - t) / r, 0.0, 1.0) * math.pi

        def f(t):
            up, down = phases(t)
            return np.select(
                [t < r, t > T - r],
                [a + 0.5 * (1.0 - a) * (1.0 - np.cos(up)), b + 0.5 * (1.0 - b) * (1.0 - np.cos(down))],
                1.0,
            )

        def df(t):
            up, down = phases(t)
            return np.select([t < r, t > T - r], [0.5 * (1.0 - a) * k * np.sin(up), -0.5 * (1.0 - b) * k * np.sin(down)], 0.0)

        def d2f(t):
            up, down = phases(t)
            return np.select(
                [t < r, t > T - r], [0.5 * (1.0 - a) * k * k * np.cos(up), 0.5 * (1.0 - b) * k * k * np.cos(down)], 0.0
            )

        return cls(
            kind=ProfileKind.RAISED_COSINE_RAMP,
            total_duration=T,
            ramp_duration=r,
            f=_array_fn(f),
            df=_array_fn(df),
            d2f=_array_fn(d2f),
            breakpoints=(0.0, r, T - r, T),
        )

    @classmethod
    def custom(cls, times: Sequence[float], values: Sequence[float]) -> "SwitchingProfile":
        """Cubic-spline profile through samples starting at t = 0."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or len(times) < 4 or times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ProfileError("custom profile needs at least four increasing sample times starting at 0")
        spline = CubicSpline(times, values)
        return cls(
            kind=ProfileKind.CUSTOM,
            total_duration=float(times[-1]),
            ramp_duration=0.0,
            f=_array_fn(spline),
            df=_array_fn(spline.derivative(1)),
            d2f=_array_fn(spline.derivative(2)),
            breakpoints=tuple(float(t) for t in times),
        )

    @classmethod
    def from_callables(
        cls,
        f: Evaluator,
        df: Evaluator,
        d2f: Optional[Evaluator],
        total_duration: float,
        kinks: Sequence[Tuple[float, float]] = (),
    ) -> "SwitchingProfile":
        if d2f is None:
            raise ProfileError("profile lacks a second derivative")
        return cls(
            kind=ProfileKind.CUSTOM,
            total_duration=total_duration,
            ramp_duration=0.0,
            f=_array_fn(f),
            df=_array_fn(df),
            d2f=_array_fn(d2f),
            kinks=tuple(kinks),
            breakpoints=(0.0, total_duration),
        )


def _check_ramp(r: float, T: float, a: float, b: float) -> None:
    if not r > 0.0:
        raise ProfileError(f"ramp duration must be positive, got {r!r}")
    if 2.0 * r > T:
        raise ProfileError(f"two ramps of {r:.6g} do not fit in total duration {T:.6g}")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ProfileError(f"endpoint values must lie in [0, 1], got f_start={a!r}, f_end={b!r}")


def mirrored(profile: SwitchingProfile) -> SwitchingProfile:
    """The time-reversed profile t ↦ f(T − t)."""
    T = profile.total_duration
    f, df, d2f = profile.f, profile.df, profile.d2f
    return replace(
        profile,
        f=_array_fn(lambda t: f(T - t)),
        df=_array_fn(lambda t: -np.asarray(df(T - t))),
        d2f=_array_fn(lambda t: d2f(T - t)),
        kinks=tuple((T - s, jump) for s, jump in reversed(profile.kinks)),
        breakpoints=tuple(T - s for s in reversed(profile.breakpoints)),
    )


# ============================================================================
# Unswitched decoherence
# ============================================================================


def coherence_length(t: float, ctx: PhysicalContext, cut: CutoffConfig) -> float:
    """l_x(t) = sqrt(ħ/N₂(t)), the separation at which coherence drops to 1/e."""
    if not t > 0.0:
        raise DomainError(f"coherence length needs t > 0, got {t!r}")
    return math.sqrt(ctx.hbar / kernel_family(ctx, cut).n2(t))


def decoherence_factor(separation: float, t: float, ctx: PhysicalContext, cut: CutoffConfig) -> float:
    if t < 0.0:
        raise DomainError(f"decoherence factor needs t >= 0, got {t!r}")
    return math.exp(-(separation**2) * kernel_family(ctx, cut).n2(t) / ctx.hbar)


def apply_decoherence(
    rho: DensityMatrix, basis: GridBasis, t: float, ctx: PhysicalContext, cut: CutoffConfig
) -> DensityMatrix:
    """Multiply ρ(x', x) by exp(−(x'−x)² N₂(t)/ħ)."""
    if rho.basis is not BasisKind.GRID:
        raise BasisMismatchError("decoherence map needs a position-grid state")
    if rho.dim != basis.n_points:
        raise BasisMismatchError(f"state dimension {rho.dim} does not match grid of {basis.n_points} points")
    if t < 0.0:
        raise DomainError(f"t must be non-negative, got {t!r}")
    x = basis.points
    n2 = kernel_family(ctx, cut).n2(t)
    factor = np.exp(-((x[:, None] - x[None, :]) ** 2) * n2 / ctx.hbar)
    return DensityMatrix(rho.elements * factor, BasisKind.GRID)


# ============================================================================
# Switched noise moment
# ============================================================================


def _r_kernel(kernels: KernelFamily) -> Callable[[float], float]:
    return lambda tau: kernels.n2_deficit(tau)


def _g_function(profile: SwitchingProfile, T: float) -> Callable[[float], float]:
    """g(τ) = ∫₀^{T−τ} f(s+τ) f̈(s) ds + Σ_j Δḟ_j f(s_j+τ)."""
    f, d2f = profile.f, profile.d2f
    edges = sorted({b for b in profile.breakpoints if 0.0 < b < T} | {0.0, T})
    floor = 1e-14 / T

    def g(tau: float) -> float:
        upper = T - tau
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo >= upper:
                break
            total += checked_quad(lambda s: f(s + tau) * d2f(s), lo, min(hi, upper), epsrel=1e-12, epsabs=floor)
        for s_j, jump in profile.kinks:
            if s_j <= upper:
                total += jump * f(s_j + tau)
        return total

    return g


def _horizon(profile: SwitchingProfile, t: Optional[float]) -> float:
    T = profile.total_duration if t is None else t
    if not 0.0 < T <= profile.total_duration * (1.0 + 1e-12):
        raise DomainError(f"evaluation time must lie in (0, {profile.total_duration:.6g}], got {T!r}")
    return min(T, profile.total_duration)


def switched_n2(
    profile: SwitchingProfile, ctx: PhysicalContext, cut: CutoffConfig, t: Optional[float] = None
) -> float:
    """Ñ₂ at time t (default T) by the integration-by-parts reduction.

    With N₂ = N₂∞ − R the plateau part integrates in closed form and

        Ñ₂ = f(0)∫f N₁ − ḟ(0)∫f R + N₂∞(f(t)² − f(0)²)/2 − ∫R g

    where every remaining integrand is confined to the ε-scale region or is
    suppressed by R ~ ε²/τ².
    """
    T = _horizon(profile, t)
    kernels = kernel_family(ctx, cut)
    eps = cut.epsilon
    f, f0, df0 = profile.f, profile.f_start, float(profile.df(0.0))
    r_kernel = _r_kernel(kernels)
    kinks = sorted({b for b in profile.breakpoints if 0.0 < b < T} | {T - b for b in profile.breakpoints if 0.0 < b < T})

    total = 0.5 * kernels.n2_plateau * (float(f(T)) ** 2 - f0**2)
    if f0 != 0.0:
        total += f0 * peaked_quad(lambda tau: f(tau) * kernels.n1(tau), 0.0, T, eps, epsrel=SWITCHED_EPSREL, points=kinks)
    if df0 != 0.0:
        total -= df0 * peaked_quad(lambda tau: f(tau) * r_kernel(tau), 0.0, T, eps, epsrel=SWITCHED_EPSREL, points=kinks)
    g = _g_function(profile, T)
    total -= peaked_quad(
        lambda tau: r_kernel(tau) * g(tau), 0.0, T, eps, epsrel=1e-8, epsabs=1e-14 * kernels.n2_plateau, points=kinks
    )
    logger.debug(f"switched N2 at T={T:.6g} ({profile.kind.value}): {total:.6e}")
    return total


def switched_n2_bruteforce(
    profile: SwitchingProfile, ctx: PhysicalContext, cut: CutoffConfig, t: Optional[float] = None
) -> float:
    """Nested quadrature of ∫₀^T dt₁ f(t₁) ∫₀^{t₁} dτ f(t₁−τ) N(τ)."""
    T = _horizon(profile, t)
    kernels = kernel_family(ctx, cut)
    eps = cut.epsilon
    f = profile.f
    # ∫|N| is of order prefactor/ε³; ask for nothing finer than round-off on that scale
    floor = 1e-15 * kernels.prefactor_noise / eps**3

    def inner(t1: float) -> float:
        if t1 == 0.0:
            return 0.0
        return peaked_quad(lambda tau: f(t1 - tau) * kernels.noise(tau), 0.0, t1, eps, epsrel=1e-12, epsabs=floor)

    return peaked_quad(lambda t1: f(t1) * inner(t1), 0.0, T, eps, epsrel=1e-10, epsabs=floor * eps)


def false_dec_limit(profile: SwitchingProfile, ctx: PhysicalContext, cut: CutoffConfig) -> float:
    """(N₂∞/2)(f(0)² + f(T)²), the slow-switching limit of Ñ₂(T)."""
    return 0.5 * kernel_family(ctx, cut).n2_plateau * (profile.f_start**2 + profile.f_end**2)


def collisional_exponent(
    rate: float, separation: float, profile: SwitchingProfile, t: Optional[float] = None
) -> float:
    """Λ Δx² ∫₀^t f(t') dt' for a collisional environment gated by the same profile."""
    if rate < 0.0:
        raise DomainError(f"collision rate must be non-negative, got {rate!r}")
    T = _horizon(profile, t)
    if rate == 0.0:
        return 0.0
    edges = sorted({b for b in profile.breakpoints if 0.0 < b < T} | {0.0, T})
    integral = sum(checked_quad(profile.f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return rate * separation**2 * integral


@dataclass(frozen=True)
class DecoherenceReport:
    n2_unswitched: float
    n2_switched: float
    restoration_ratio: float
    coherence_length_final: float
    analytic_limit: float
    collisional_exponent: float = 0.0

    def __post_init__(self) -> None:
        for name in ("n2_unswitched", "n2_switched"):
            value = getattr(self, name)
            if value < -1e-12 * max(abs(self.n2_unswitched), 1.0):
                raise DomainError(f"{name} is negative beyond round-off: {value:.3e}")


def decoherence_report(
    profile: SwitchingProfile,
    ctx: PhysicalContext,
    cut: CutoffConfig,
    collision_rate: float = 0.0,
    separation: float = 0.0,
) -> DecoherenceReport:
    T = profile.total_duration
    unswitched = kernel_family(ctx, cut).n2(T)
    switched = switched_n2(profile, ctx, cut)
    return DecoherenceReport(
        n2_unswitched=unswitched,
        n2_switched=switched,
        restoration_ratio=switched / unswitched,
        coherence_length_final=math.sqrt(ctx.hbar / switched) if switched > 0.0 else math.inf,
        analytic_limit=false_dec_limit(profile, ctx, cut),
        collisional_exponent=collisional_exponent(collision_rate, separation, profile),
    )
