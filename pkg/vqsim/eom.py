"""
Equations of motion with radiation reaction.

Two equations live here side by side. The first is the classical Abraham-Lorentz
equation integrated literally as a third-order system, which shows the runaway.
The second is the expectation-value equation that follows from the master
equation, where the third derivative is closed by order reduction and no
runaway mode exists.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .integrators import rk4_step
from .kernels import DerivativeStencil, dissipation_weighted_integral, dissipation_weighted_integral_bruteforce, kernel_family
from .propagator import SystemSpec
from .units import CutoffConfig, PhysicalContext, fine_structure, mass_shift, renormalized_mass, runaway_time

logger = logging.getLogger(__name__)

Force = Callable[[float, float], float]

OVERFLOW_LIMIT = 1e150
MIN_FIT_SAMPLES = 100


@dataclass(frozen=True)
class ClassicalState:
    x: float
    v: float
    a: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(value) for value in (self.x, self.v, self.a)):
            raise DomainError(f"classical state must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.a], dtype=float)


@dataclass
class EomResult:
    """Sampled trajectory plus runaway diagnostics."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    p: np.ndarray
    kind: str
    runaway: bool = False
    growth_rate: Optional[float] = None

    def rows(self, columns: Sequence[str]) -> List[Tuple[float, ...]]:
        data = {"t": self.times, "x": self.x, "v": self.v, "a": self.a, "x_mean": self.x, "p_mean": self.p}
        return list(zip(*(data[c] for c in columns)))


# ============================================================================
# Classical Abraham-Lorentz
# ============================================================================


def integrate_classical_al(
    force: Force,
    s0: ClassicalState,
    t_end: float,
    dt: float,
    ctx: PhysicalContext,
    cut: CutoffConfig,
    boundary: str = "initial",
    record_every: int = 1,
) -> EomResult:
    """Integrate m_R ẍ = F + m_R t0 x⃛ as the system (x, v, a).

    With ``boundary="final"`` the state ``s0`` is imposed at ``t_end`` and the
    equation is integrated backward, which removes the runaway mode; the
    returned arrays are always in increasing time.
    """
    if boundary not in ("initial", "final"):
        raise DomainError(f"boundary must be 'initial' or 'final', got {boundary!r}")
    t0 = runaway_time(ctx, cut)
    m_r = renormalized_mass(ctx, cut)
    if dt > t0 / 20.0:
        raise DomainError(f"dt={dt:.3e} exceeds t0/20={t0 / 20.0:.3e}")
    if not t_end > 0.0:
        raise DomainError(f"t_end must be positive, got {t_end!r}")

    n_steps = math.ceil(t_end / dt)
    h = t_end / n_steps
    sign = 1.0 if boundary == "initial" else -1.0
    t_start = 0.0 if boundary == "initial" else t_end

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v, a = y
        return np.array([v, a, (m_r * a - force(x, t)) / (m_r * t0)])

    y = s0.as_array()
    times, states = [t_start], [y]
    runaway = False
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            y = rk4_step(rhs, t_start + sign * (step - 1) * h, y, sign * h)
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OVERFLOW_LIMIT:
                logger.warning(f"classical AL overflow at step {step} (t={t_start + sign * step * h:.6g}); truncating")
                runaway = True
                break
            if step % record_every == 0 or step == n_steps:
                times.append(t_start + sign * step * h)
                states.append(y)

    times_arr = np.array(times)
    data = np.array(states)
    if sign < 0.0:
        times_arr, data = times_arr[::-1], data[::-1]
    result = EomResult(
        times=times_arr,
        x=data[:, 0],
        v=data[:, 1],
        a=data[:, 2],
        p=m_r * data[:, 1],
        kind="classical",
        runaway=runaway,
    )
    logger.info(f"classical AL: {len(times_arr)} samples, t0={t0:.6g}, boundary={boundary}, runaway={runaway}")
    return result


def stable_manifold_state(
    x0: float, v0: float, stiffness: float, ctx: PhysicalContext, cut: CutoffConfig
) -> ClassicalState:
    """Initial acceleration that puts F = −k·x motion on the runaway-free manifold.

    The characteristic polynomial m_R t0 s³ − m_R s² − k has one root near
    1/t0; the state is built from the other two.
    """
    t0 = runaway_time(ctx, cut)
    m_r = renormalized_mass(ctx, cut)
    if stiffness == 0.0:
        return ClassicalState(x0, v0, 0.0)
    roots = np.roots([m_r * t0, -m_r, 0.0, -stiffness])
    bounded = sorted(roots, key=lambda r: r.real)[:2]
    r1, r2 = bounded
    c1, c2 = np.linalg.solve(np.array([[1.0, 1.0], [r1, r2]], dtype=complex), np.array([x0, v0], dtype=complex))
    a0 = (c1 * r1**2 + c2 * r2**2).real
    return ClassicalState(x0, v0, float(a0))


# ============================================================================
# Quantum expectation values
# ============================================================================


def integrate_quantum_eom(
    spec: SystemSpec,
    x0: float,
    p0: float,
    t_end: float,
    dt: float,
    ctx: PhysicalContext,
    cut: CutoffConfig,
    record_every: int = 1,
    initial_acceleration: float = 0.0,
) -> EomResult:
    """d⟨x⟩/dt = ⟨p⟩/m and m_R d²⟨x⟩/dt² = F + m_R t0 d³⟨x⟩/dt³ with x⃛ := (1/m_R) dF/dt.

    The force is the mean-field F(⟨x⟩, t). There is no acceleration state:
    ``initial_acceleration`` is applied as a force m_R·a0 held over the first
    step only.
    """
    if not (dt > 0.0 and t_end > 0.0):
        raise DomainError(f"need dt > 0 and t_end > 0 (dt={dt!r}, t_end={t_end!r})")
    m = spec.mass
    m_r = m + mass_shift(ctx, cut.omega_max)
    reaction = 2.0 * fine_structure(ctx) * ctx.hbar / (3.0 * ctx.c**2)
    n_steps = math.ceil(t_end / dt)
    h = t_end / n_steps
    kick_until = h if initial_acceleration != 0.0 else 0.0

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, p = y
        force = spec.force(x, t)
        if t < kick_until:
            force += m_r * initial_acceleration
        dfdx, dfdt = spec.force_gradient(x, t)
        jerk = (dfdx * p / m + dfdt) / m_r
        return np.array([p / m, (m / m_r) * (force + reaction * jerk)])

    y = np.array([x0, p0], dtype=float)
    times, states = [0.0], [y]
    for step in range(1, n_steps + 1):
        y = rk4_step(rhs, (step - 1) * h, y, h)
        if step % record_every == 0 or step == n_steps:
            times.append(step * h)
            states.append(y)

    times_arr = np.array(times)
    data = np.array(states)
    accel = np.array([rhs(t, s)[1] / m for t, s in zip(times_arr, data)])
    logger.info(f"quantum EOM ({spec.kind.value}): {len(times_arr)} samples, m_R={m_r:.10g}")
    return EomResult(
        times=times_arr, x=data[:, 0], v=data[:, 1] / m, a=accel, p=data[:, 1], kind="quantum"
    )


# ============================================================================
# Diagnostics
# ============================================================================


def vem_cancellation_residual(ctx: PhysicalContext, cut: CutoffConfig) -> float:
    """Relative mismatch between the V_EM stiffness and the f(0) term of the dissipation identity."""
    identity_term = dissipation_weighted_integral(DerivativeStencil(1.0, 0.0, 0.0), ctx, cut)
    stiffness = kernel_family(ctx, cut).vem_stiffness
    return abs(stiffness - identity_term) / abs(identity_term)


def vem_cancellation_residual_bruteforce(ctx: PhysicalContext, cut: CutoffConfig, t: Optional[float] = None) -> float:
    """Same comparison against the quadrature of ∫₀^t D(τ) dτ (t defaults to 100ε)."""
    t = 100.0 * cut.epsilon if t is None else t
    integral = dissipation_weighted_integral_bruteforce(lambda tau: 1.0, t, ctx, cut)
    stiffness = kernel_family(ctx, cut).vem_stiffness
    return abs(stiffness - integral) / abs(stiffness)


def detect_runaway(result: EomResult, tail_fraction: float = 0.5) -> Optional[float]:
    """Exponential growth rate of |a(t)| over the tail, or None when not significant."""
    if len(result.times) < MIN_FIT_SAMPLES:
        raise DomainError(f"need at least {MIN_FIT_SAMPLES} samples, got {len(result.times)}")
    start = int(len(result.times) * (1.0 - tail_fraction))
    t, a = result.times[start:], np.abs(result.a[start:])
    usable = np.isfinite(a) & (a > 0.0)
    if usable.sum() < max(0.9 * len(a), 3):
        logger.debug("acceleration tail is mostly zero: no runaway")
        return None
    coefficients, cov = np.polyfit(t[usable], np.log(a[usable]), 1, cov=True)
    slope = float(coefficients[0])
    stderr = math.sqrt(max(cov[0, 0], 0.0))
    logger.debug(f"runaway fit: slope={slope:.6g} stderr={stderr:.3e}")
    if slope > 0.0 and slope > 10.0 * stderr:
        result.growth_rate = slope
        return slope
    return None


def fit_envelope_rate(times: np.ndarray, signal: np.ndarray) -> float:
    """Amplitude decay rate from a log-linear fit of the interpolated peaks of |signal|."""
    times = np.asarray(times, dtype=float)
    mag = np.abs(np.asarray(signal, dtype=float))
    interior = np.arange(1, len(mag) - 1)
    peaks = interior[(mag[interior] >= mag[interior - 1]) & (mag[interior] > mag[interior + 1])]
    if len(peaks) < 3:
        raise DomainError(f"need at least three peaks to fit an envelope, found {len(peaks)}")
    left, centre, right = mag[peaks - 1], mag[peaks], mag[peaks + 1]
    curvature = left - 2.0 * centre + right
    shift = np.where(curvature != 0.0, 0.5 * (left - right) / np.where(curvature != 0.0, curvature, 1.0), 0.0)
    heights = centre - 0.25 * (left - right) * shift
    step = times[peaks + 1] - times[peaks]
    peak_times = times[peaks] + shift * step
    slope = np.polyfit(peak_times, np.log(heights), 1)[0]
    return float(-slope)
