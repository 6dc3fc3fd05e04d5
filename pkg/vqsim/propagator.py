"""
Second-order master equation for the reduced density matrix.

The memory integrals of the master equation are turned into time-local
coefficients by inserting the zeroth-order Heisenberg operator

    x_H(−τ) = c_x(τ) X + c_p(τ) P + c_0(τ)

which is known in closed form for free, harmonic and (linearized) polynomial
potentials. With those coefficients the right-hand side reads

    −(i/ħ)[H_s, ρ] − (1/ħ)[X, cN_x[X,ρ] + cN_p[P,ρ]]
        + (i/2ħ)[X, cD_x{X,ρ} + cD_p{P,ρ} + 2 cD_0 ρ]

and is stepped with fixed-step RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as poly
from scipy.integrate import solve_ivp

from .errors import BasisMismatchError, DomainError, NumericalInvariantError
from .integrators import rk4_step
from .kernels import DerivativeStencil, KernelFamily, dissipation_weighted_integral
from .quadrature import PEAK_SPLIT, composite_nodes, peaked_quad
from .states import BasisKind, DensityMatrix, GridBasis, OscillatorBasis, POSITIVITY_TOL
from .units import PhysicalContext

logger = logging.getLogger(__name__)

STEP_TRACE_TOL = 1e-10
STEP_HERMITICITY_TOL = 1e-10

Basis = Union[OscillatorBasis, GridBasis]
CSV_COLUMNS = ("t", "x_mean", "p_mean", "x_var", "p_var", "purity", "trace_err", "herm_err", "min_eig")


# ============================================================================
# System description
# ============================================================================


class PotentialKind(str, Enum):
    FREE = "free"
    HARMONIC = "harmonic"
    CUSTOM = "custom"


@dataclass(frozen=True)
class CustomPotential:
    """V0(x, t) = Σ a_k x^k + A·x·cos(Ω t).

    The master-equation coefficients linearize the force about
    ``expansion_point``; the drive only shifts the force, so the curvature
    stays time independent.
    """

    coefficients: Tuple[float, ...]
    drive_amplitude: float = 0.0
    drive_frequency: float = 0.0
    expansion_point: float = 0.0

    def __post_init__(self) -> None:
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs or not all(math.isfinite(c) for c in coeffs):
            raise DomainError("custom potential needs finite polynomial coefficients")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def time_dependent(self) -> bool:
        return self.drive_amplitude != 0.0

    def value(self, x, t: float = 0.0):
        return poly.polyval(x, self.coefficients) + self.drive_amplitude * x * math.cos(self.drive_frequency * t)

    def gradient(self, x, t: float = 0.0):
        return poly.polyval(x, poly.polyder(self.coefficients)) + self.drive_amplitude * math.cos(
            self.drive_frequency * t
        )

    def curvature(self, x):
        return poly.polyval(x, poly.polyder(self.coefficients, 2))

    def time_gradient(self, x, t: float = 0.0):
        return -self.drive_amplitude * self.drive_frequency * x * math.sin(self.drive_frequency * t)


@dataclass(frozen=True)
class SystemSpec:
    kind: PotentialKind
    mass: float
    basis: Basis
    omega0: float = 0.0
    potential: Optional[CustomPotential] = None

    def __post_init__(self) -> None:
        if not self.mass > 0.0:
            raise DomainError(f"mass must be positive, got {self.mass!r}")
        if self.kind is PotentialKind.HARMONIC and not self.omega0 > 0.0:
            raise DomainError("harmonic system needs omega0 > 0")
        if self.kind is PotentialKind.CUSTOM and self.potential is None:
            raise DomainError("custom system needs a potential")

    @classmethod
    def free(cls, mass: float, basis: Basis) -> "SystemSpec":
        return cls(PotentialKind.FREE, mass, basis)

    @classmethod
    def harmonic(cls, omega0: float, mass: float, basis: Basis) -> "SystemSpec":
        return cls(PotentialKind.HARMONIC, mass, basis, omega0=omega0)

    @classmethod
    def custom(cls, potential: CustomPotential, mass: float, basis: Basis) -> "SystemSpec":
        return cls(PotentialKind.CUSTOM, mass, basis, potential=potential)

    @property
    def basis_kind(self) -> BasisKind:
        return self.basis.kind

    def potential_value(self, x, t: float = 0.0):
        if self.kind is PotentialKind.FREE:
            return np.zeros_like(np.asarray(x, dtype=float))
        if self.kind is PotentialKind.HARMONIC:
            return 0.5 * self.mass * self.omega0**2 * np.asarray(x, dtype=float) ** 2
        return self.potential.value(x, t)

    def force(self, x: float, t: float = 0.0) -> float:
        if self.kind is PotentialKind.FREE:
            return 0.0
        if self.kind is PotentialKind.HARMONIC:
            return -self.mass * self.omega0**2 * x
        return -float(self.potential.gradient(x, t))

    def force_gradient(self, x: float, t: float = 0.0) -> Tuple[float, float]:
        """(∂F/∂x, ∂F/∂t) at (x, t)."""
        if self.kind is PotentialKind.FREE:
            return 0.0, 0.0
        if self.kind is PotentialKind.HARMONIC:
            return -self.mass * self.omega0**2, 0.0
        pot = self.potential
        return -float(pot.curvature(x)), pot.drive_amplitude * pot.drive_frequency * math.sin(pot.drive_frequency * t)


# ============================================================================
# Operators
# ============================================================================


@dataclass(frozen=True)
class SystemOperators:
    x: np.ndarray
    p: np.ndarray
    x2: np.ndarray
    p2: np.ndarray
    h: np.ndarray
    h0: np.ndarray
    basis: BasisKind
    hbar: float
    vem_stiffness: float
    drive: Optional[Tuple[float, float]] = None

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def hamiltonian(self, t: float = 0.0) -> np.ndarray:
        """H_s(t), V_EM included when the operators were built with it."""
        if self.drive is None:
            return self.h
        amplitude, frequency = self.drive
        return self.h + amplitude * math.cos(frequency * t) * self.x

    def bare_hamiltonian(self, t: float = 0.0) -> np.ndarray:
        if self.drive is None:
            return self.h0
        amplitude, frequency = self.drive
        return self.h0 + amplitude * math.cos(frequency * t) * self.x


def _ladder_matrices(dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.arange(dim, dtype=float)
    lower = np.diag(np.sqrt(n[1:]), 1)
    lower2 = np.diag(np.sqrt(n[2:] * n[1:-1]), 2)
    return lower, lower2, np.diag(n)


def _oscillator_operators(basis: OscillatorBasis, mass: float, hbar: float):
    a, a2, number = _ladder_matrices(basis.dim)
    identity = np.eye(basis.dim)
    x_scale = math.sqrt(hbar / (2.0 * mass * basis.frequency))
    p_scale = math.sqrt(hbar * mass * basis.frequency / 2.0)
    x = x_scale * (a + a.T)
    p = 1j * p_scale * (a.T - a)
    # squares built from a², a†² and n directly so the spectrum is exact up to the top state
    x2 = x_scale**2 * (a2 + a2.T + 2.0 * number + identity)
    p2 = p_scale**2 * (-a2 - a2.T + 2.0 * number + identity)
    return x.astype(complex), p, x2.astype(complex), p2.astype(complex)


def _grid_operators(basis: GridBasis, hbar: float):
    n, h = basis.n_points, basis.spacing
    points = basis.points
    shift = np.diag(np.ones(n - 1), 1)
    first = (shift - shift.T) / (2.0 * h)
    second = (shift + shift.T - 2.0 * np.eye(n)) / h**2
    x = np.diag(points).astype(complex)
    p = -1j * hbar * first
    x2 = np.diag(points**2).astype(complex)
    return x, p, x2, p @ p, second


def _potential_matrix(spec: SystemSpec, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    if spec.kind is PotentialKind.FREE:
        return np.zeros_like(x)
    if spec.kind is PotentialKind.HARMONIC:
        return 0.5 * spec.mass * spec.omega0**2 * x2
    static = CustomPotential(spec.potential.coefficients)
    if spec.basis_kind is BasisKind.GRID:
        return np.diag(static.value(np.real(np.diag(x)))).astype(complex)
    values, vectors = np.linalg.eigh(x)
    return (vectors * static.value(values)) @ vectors.conj().T


def build_operators(spec: SystemSpec, kernels: KernelFamily, include_vem: bool = True) -> SystemOperators:
    """X, P and H_s = P²/2m + V0 + V_EM in the basis of ``spec``.

    In the oscillator basis the kinetic term of a free particle and the V_EM
    term are products of the truncated X and P; the harmonic H0 keeps the
    ladder squares so its spectrum is exactly (n + ½)ħω0.
    """
    hbar = kernels.ctx.hbar
    if isinstance(spec.basis, OscillatorBasis):
        x, p, x2, p2 = _oscillator_operators(spec.basis, spec.mass, hbar)
        # truncated P·P commutes with P, the ladder square does not at the top state
        kinetic = (p @ p if spec.kind is PotentialKind.FREE else p2) / (2.0 * spec.mass)
    elif isinstance(spec.basis, GridBasis):
        x, p, x2, p2, second = _grid_operators(spec.basis, hbar)
        kinetic = (-(hbar**2) / (2.0 * spec.mass)) * second.astype(complex)
    else:
        raise BasisMismatchError(f"unsupported basis {spec.basis!r}")

    h0 = kinetic + _potential_matrix(spec, x, x2)
    stiffness = kernels.vem_stiffness if include_vem else 0.0
    # X·X rather than x2: V_EM then cancels the cD_x dissipator term entry by entry
    h = h0 + 0.5 * stiffness * (x @ x)
    drive = None
    if spec.kind is PotentialKind.CUSTOM and spec.potential.time_dependent:
        drive = (spec.potential.drive_amplitude, spec.potential.drive_frequency)
    logger.debug(f"built {spec.basis_kind.value} operators: dim={x.shape[0]}, V_EM stiffness={stiffness:.6g}")
    return SystemOperators(
        x=x, p=p, x2=x2, p2=p2, h=h, h0=h0, basis=spec.basis_kind, hbar=hbar, vem_stiffness=stiffness, drive=drive
    )


def heisenberg_derivative_operator(ops: SystemOperators, order: int, t: float = 0.0) -> np.ndarray:
    """dⁿ/dτⁿ x_H(−τ) at τ = 0, i.e. (−i/ħ)ⁿ ad_{H0}ⁿ(X)."""
    h0 = ops.bare_hamiltonian(t)
    operator = ops.x
    for _ in range(order):
        operator = (-1j / ops.hbar) * (h0 @ operator - operator @ h0)
    return operator


# ============================================================================
# Zeroth-order Heisenberg motion
# ============================================================================


@dataclass(frozen=True)
class HeisenbergCoeffs:
    c_x: float
    c_p: float
    c_0: float = 0.0


def _oscillator_functions(omega2: float, tau, order: int = 0):
    """C, S with C(0)=1, S(0)=0, C' = −ω²S, S' = C, differentiated ``order`` times."""
    tau = np.asarray(tau, dtype=float)
    if omega2 > 0.0:
        w = math.sqrt(omega2)
        c, s = np.cos(w * tau), np.sin(w * tau) / w
    elif omega2 < 0.0:
        v = math.sqrt(-omega2)
        c, s = np.cosh(v * tau), np.sinh(v * tau) / v
    else:
        c, s = np.ones_like(tau), tau.copy()
    for _ in range(order):
        c, s = -omega2 * s, c
    return c, s


def _one_minus_c(omega2: float, tau) -> np.ndarray:
    """(1 − C(τ))/ω², continuous through ω² = 0."""
    tau = np.asarray(tau, dtype=float)
    if omega2 > 0.0:
        w = math.sqrt(omega2)
        return 2.0 * np.sin(0.5 * w * tau) ** 2 / omega2
    if omega2 < 0.0:
        v = math.sqrt(-omega2)
        return 2.0 * np.sinh(0.5 * v * tau) ** 2 / (-omega2)
    return 0.5 * tau * tau


class ZerothOrderMotion:
    """Closed-form coefficients of x_H(−τ) under H0 with V_EM excluded.

    Rows of :meth:`derivatives` are (c_x, c_p, c_0). The c-number part c_0
    comes from the constant force left over after linearizing a custom
    potential; a drive adds a further t-dependent part, see
    :meth:`driven_offset`.
    """

    def __init__(self, spec: SystemSpec) -> None:
        self.mass = spec.mass
        self.offset_force = 0.0
        self.driven = False
        self._drive = (0.0, 0.0)
        if spec.kind is PotentialKind.FREE:
            self.omega2 = 0.0
        elif spec.kind is PotentialKind.HARMONIC:
            self.omega2 = spec.omega0**2
        else:
            pot = spec.potential
            x_ref = pot.expansion_point
            static = CustomPotential(pot.coefficients)
            kappa = float(static.curvature(x_ref))
            self.omega2 = kappa / spec.mass
            self.offset_force = float(static.gradient(x_ref)) - kappa * x_ref
            self.driven = pot.time_dependent
            self._drive = (pot.drive_amplitude, pot.drive_frequency)

    def derivatives(self, tau, order: int = 0) -> np.ndarray:
        c, s = _oscillator_functions(self.omega2, tau, order)
        scale = -self.offset_force / self.mass
        if order == 0:
            offset = scale * _one_minus_c(self.omega2, tau)
        else:
            offset = scale * _oscillator_functions(self.omega2, tau, order - 1)[1]
        return np.stack([np.asarray(c, dtype=float), -np.asarray(s, dtype=float) / self.mass, offset])

    def driven_offset(self, t: float):
        """Dense solution (c_0, c_0') of the drive-induced offset on τ ∈ [0, t]."""
        amplitude, frequency = self._drive
        omega2, mass = self.omega2, self.mass

        def rhs(tau, y):
            return [y[1], -omega2 * y[0] - (amplitude / mass) * math.cos(frequency * (t - tau))]

        solution = solve_ivp(rhs, (0.0, t), [0.0, 0.0], method="DOP853", rtol=1e-11, atol=1e-14, dense_output=True)
        if not solution.success:
            raise NumericalInvariantError(f"Heisenberg offset integration failed: {solution.message}")
        return solution.sol


def heisenberg_x_coeffs(spec: SystemSpec, tau: float, t: Optional[float] = None) -> HeisenbergCoeffs:
    """Coefficients of x_H(−τ) = c_x X + c_p P + c_0 seen from observation time ``t`` (default τ)."""
    motion = ZerothOrderMotion(spec)
    c_x, c_p, c_0 = (float(v) for v in motion.derivatives(tau, 0))
    if motion.driven and tau > 0.0:
        t_obs = tau if t is None else t
        if t_obs < tau:
            raise DomainError(f"tau={tau!r} reaches before t=0 for observation time {t_obs!r}")
        c_0 += float(motion.driven_offset(t_obs)(tau)[0])
    return HeisenbergCoeffs(c_x=c_x, c_p=c_p, c_0=c_0)


# ============================================================================
# Master-equation coefficients
# ============================================================================


@dataclass(frozen=True)
class MeqCoefficients:
    cN_x: float = 0.0
    cN_p: float = 0.0
    cD_x: float = 0.0
    cD_p: float = 0.0
    cD_0: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class MeqCoefficientSchedule:
    """Coefficient integrals evaluated along a non-decreasing sequence of times.

    Both integrals are integrated by parts until only smooth remainders are
    left:

        cD = K_D {[δ''c − δ'c' + δc'']₀^t − ∫₀^t δ c'''}
        cN = N₁(t) c(t) − N₂(t) c'(t) + ∫₀^t N₂ c''

    The remainders are accumulated from the previous time, with the peaked
    quadrature below ``PEAK_SPLIT·ε`` and Gauss-Legendre panels above.
    Asking for an earlier time restarts the accumulation.
    """

    def __init__(self, spec: SystemSpec, kernels: KernelFamily) -> None:
        self.kernels = kernels
        self.motion = ZerothOrderMotion(spec)
        self._origin = self._boundary(0.0)
        self._cache: Dict[float, MeqCoefficients] = {}
        self._reset()

    def _reset(self) -> None:
        self._t = 0.0
        self._noise_acc = np.zeros(3)
        self._diss_acc = np.zeros(3)

    def __call__(self, t: float) -> MeqCoefficients:
        return self.at(t)

    def at(self, t: float) -> MeqCoefficients:
        if t < 0.0:
            raise DomainError(f"coefficients are defined for t >= 0, got {t!r}")
        cached = self._cache.get(t)
        if cached is not None:
            return cached
        if t < self._t:
            self._reset()
        self._advance(t)
        coeffs = self._assemble(t)
        if len(self._cache) >= 8:
            self._cache.pop(next(iter(self._cache)))
        self._cache[t] = coeffs
        return coeffs

    def _boundary(self, t: float) -> np.ndarray:
        k, m = self.kernels, self.motion
        return k.delta(t, 2) * m.derivatives(t, 0) - k.delta(t, 1) * m.derivatives(t, 1) + k.delta(t) * m.derivatives(t, 2)

    def _panel_width(self, a: float) -> float:
        width = 0.25 * a
        if self.motion.omega2 != 0.0:
            width = min(width, 2.0 * math.pi / (8.0 * math.sqrt(abs(self.motion.omega2))))
        return width

    def _advance(self, t: float) -> None:
        a = self._t
        if t <= a:
            return
        split = PEAK_SPLIT * self.kernels.eps
        if a < split:
            upper = min(t, split)
            self._accumulate_peaked(a, upper)
            a = upper
        while a < t:
            b = min(t, a + 64.0 * self._panel_width(a))
            panels = max(1, math.ceil((b - a) / self._panel_width(a)))
            nodes, weights = composite_nodes(a, b, panels)
            self._noise_acc += self.motion.derivatives(nodes, 2) @ (weights * self.kernels.n2(nodes))
            self._diss_acc += self.motion.derivatives(nodes, 3) @ (weights * self.kernels.delta(nodes))
            a = b
        self._t = t

    def _accumulate_peaked(self, a: float, b: float) -> None:
        k, m, eps = self.kernels, self.motion, self.kernels.eps
        for row in range(3):
            self._noise_acc[row] += peaked_quad(lambda s: k.n2(s) * m.derivatives(s, 2)[row], a, b, eps)
            self._diss_acc[row] += peaked_quad(lambda s: k.delta(s) * m.derivatives(s, 3)[row], a, b, eps)

    def _driven_dissipation(self, t: float) -> float:
        if t == 0.0:
            return 0.0
        offset = self.motion.driven_offset(t)
        k = self.kernels
        return peaked_quad(lambda s: k.dissipation(s) * float(offset(s)[0]), 0.0, t, k.eps, epsrel=1e-10)

    def _assemble(self, t: float) -> MeqCoefficients:
        k, m = self.kernels, self.motion
        diss = k.dissipation_prefactor * (self._boundary(t) - self._origin - self._diss_acc)
        noise = k.n1(t) * m.derivatives(t, 0) - k.n2(t) * m.derivatives(t, 1) + self._noise_acc
        cD_0 = float(diss[2])
        if m.driven:
            cD_0 += self._driven_dissipation(t)
        return MeqCoefficients(
            cN_x=float(noise[0]), cN_p=float(noise[1]), cD_x=float(diss[0]), cD_p=float(diss[1]), cD_0=cD_0
        )


def meq_coefficients(spec: SystemSpec, t: float, kernels: KernelFamily) -> MeqCoefficients:
    return MeqCoefficientSchedule(spec, kernels).at(t)


def plateau_coefficients(spec: SystemSpec, kernels: KernelFamily) -> MeqCoefficients:
    """The t ≫ ε limits of the coefficients (the ``--markov`` mode)."""
    motion = ZerothOrderMotion(spec)
    if motion.driven:
        raise DomainError("Markov coefficients need a time-independent potential")
    if motion.omega2 < 0.0:
        raise DomainError("Markov coefficients do not exist for an unstable zeroth-order motion")
    d0, d2, d3 = (motion.derivatives(0.0, order) for order in (0, 2, 3))
    diss = [
        dissipation_weighted_integral(DerivativeStencil(d0[i], d2[i], d3[i]), kernels.ctx, kernels.cut)
        for i in range(3)
    ]
    if motion.omega2 == 0.0:
        cN_x, cN_p = 0.0, kernels.n2_plateau / spec.mass
    else:
        w = math.sqrt(motion.omega2)
        cN_x = kernels.plateau_noise_cos(w)
        cN_p = -kernels.plateau_noise_sin(w) / (spec.mass * w)
    return MeqCoefficients(cN_x=cN_x, cN_p=cN_p, cD_x=diss[0], cD_p=diss[1], cD_0=diss[2])


def coefficient_source(
    spec: SystemSpec, kernels: KernelFamily, markov: bool = False, decoherence_only: bool = False
) -> Callable[[float], MeqCoefficients]:
    if decoherence_only:
        if markov:
            raise DomainError("decoherence-only mode needs the time-dependent N1 coefficient")
        return lambda t: MeqCoefficients(cN_x=kernels.n1(t))
    if markov:
        frozen = plateau_coefficients(spec, kernels)
        logger.info(f"Markov coefficients: {frozen.as_dict()}")
        return lambda t: frozen
    return MeqCoefficientSchedule(spec, kernels)


# ============================================================================
# Right-hand side and propagation
# ============================================================================


def _elements(rho: Union[DensityMatrix, np.ndarray], ops: SystemOperators) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.basis is not ops.basis:
            raise BasisMismatchError(f"state in {rho.basis.value} basis, operators in {ops.basis.value} basis")
        rho = rho.elements
    if rho.shape != ops.x.shape:
        raise BasisMismatchError(f"state shape {rho.shape} does not match operators {ops.x.shape}")
    return rho


def meq_rhs(
    rho: Union[DensityMatrix, np.ndarray],
    ops: SystemOperators,
    coeffs: MeqCoefficients,
    ctx: PhysicalContext,
    t: float = 0.0,
    liouville: bool = True,
) -> np.ndarray:
    rho = _elements(rho, ops)
    x, p, hbar = ops.x, ops.p, ctx.hbar
    xr, rx = x @ rho, rho @ x
    pr, rp = p @ rho, rho @ p

    noise = coeffs.cN_x * (xr - rx) + coeffs.cN_p * (pr - rp)
    damping = coeffs.cD_x * (xr + rx) + coeffs.cD_p * (pr + rp) + (2.0 * coeffs.cD_0) * rho
    out = (-1.0 / hbar) * (x @ noise - noise @ x) + (0.5j / hbar) * (x @ damping - damping @ x)
    if liouville:
        h = ops.hamiltonian(t)
        out += (-1j / hbar) * (h @ rho - rho @ h)
    return out


def expectation(rho: Union[DensityMatrix, np.ndarray], operator: np.ndarray) -> complex:
    elements = rho.elements if isinstance(rho, DensityMatrix) else rho
    return complex(np.sum(elements * operator.T))


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    x_mean: float
    p_mean: float
    x2_mean: float
    p2_mean: float
    x_var: float
    p_var: float
    energy: float
    purity: float
    trace_err: float
    herm_err: float
    min_eig: float


def observables(rho: Union[DensityMatrix, np.ndarray], ops: SystemOperators, t: float = 0.0) -> ObservableRecord:
    """Moments of ρ; ``energy`` is ⟨H0⟩, the bare system energy."""
    state = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho, ops.basis)
    _elements(state, ops)
    x_mean = expectation(state, ops.x).real
    p_mean = expectation(state, ops.p).real
    x2_mean = expectation(state, ops.x2).real
    p2_mean = expectation(state, ops.p2).real
    return ObservableRecord(
        t=t,
        x_mean=x_mean,
        p_mean=p_mean,
        x2_mean=x2_mean,
        p2_mean=p2_mean,
        x_var=x2_mean - x_mean**2,
        p_var=p2_mean - p_mean**2,
        energy=expectation(state, ops.bare_hamiltonian(t)).real,
        purity=state.purity(),
        trace_err=abs(state.trace() - 1.0),
        herm_err=state.hermiticity_residual(),
        min_eig=state.min_eigenvalue(),
    )


@dataclass
class Trajectory:
    records: List[ObservableRecord]
    final_state: DensityMatrix

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def min_eigenvalue(self) -> float:
        return float(min(r.min_eig for r in self.records))

    @property
    def max_trace_error(self) -> float:
        return float(max(r.trace_err for r in self.records))

    @property
    def max_hermiticity_residual(self) -> float:
        return float(max(r.herm_err for r in self.records))

    def rows(self, columns: Sequence[str] = CSV_COLUMNS) -> List[Tuple[float, ...]]:
        return [tuple(getattr(r, c) for c in columns) for r in self.records]


def propagate(
    rho0: DensityMatrix,
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    kernels: KernelFamily,
    *,
    markov: bool = False,
    decoherence_only: bool = False,
    include_vem: bool = True,
    record_every: int = 1,
    operators: Optional[SystemOperators] = None,
) -> Trajectory:
    """Step the master equation from t = 0 with fixed-step RK4.

    Raises NumericalInvariantError when the trace moves by more than
    ``STEP_TRACE_TOL`` in one step or ρ drifts away from Hermitian.
    """
    if not dt > 0.0 or n_steps < 1 or record_every < 1:
        raise DomainError(f"need dt > 0, n_steps >= 1 and record_every >= 1 (dt={dt!r}, n_steps={n_steps!r})")
    ops = operators if operators is not None else build_operators(spec, kernels, include_vem=include_vem)
    _elements(rho0, ops)
    rho0.validate()
    coefficients = coefficient_source(spec, kernels, markov=markov, decoherence_only=decoherence_only)
    ctx = kernels.ctx
    liouville = not decoherence_only

    def rhs(t: float, rho: np.ndarray) -> np.ndarray:
        return meq_rhs(rho, ops, coefficients(t), ctx, t=t, liouville=liouville)

    rho = rho0.elements.copy()
    records = [observables(rho0, ops, 0.0)]
    trace_prev = np.trace(rho)
    warned = False
    logger.info(
        f"propagating {spec.kind.value} system: dim={ops.dim}, dt={dt:.6g}, steps={n_steps}, "
        f"markov={markov}, decoherence_only={decoherence_only}, V_EM={'on' if include_vem else 'off'}"
    )
    for step in range(1, n_steps + 1):
        rho = rk4_step(rhs, (step - 1) * dt, rho, dt)
        trace_now = np.trace(rho)
        drift = abs(trace_now - trace_prev)
        if drift > STEP_TRACE_TOL or not np.isfinite(drift):
            raise NumericalInvariantError("trace drift exceeded tolerance", step=step, residual=float(drift))
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > STEP_HERMITICITY_TOL:
            raise NumericalInvariantError("density matrix lost Hermiticity", step=step, residual=herm)
        trace_prev = trace_now
        if step % record_every == 0 or step == n_steps:
            record = observables(rho, ops, step * dt)
            records.append(record)
            logger.debug(f"step {step}: t={record.t:.6g} <x>={record.x_mean:.10g} min_eig={record.min_eig:.3e}")
            if record.min_eig < -POSITIVITY_TOL and not warned:
                logger.warning(f"positivity violated at t={record.t:.6g}: smallest eigenvalue {record.min_eig:.3e}")
                warned = True

    trajectory = Trajectory(records, DensityMatrix(rho, ops.basis))
    logger.info(
        f"propagation finished: max trace error {trajectory.max_trace_error:.3e}, "
        f"max Hermiticity residual {trajectory.max_hermiticity_residual:.3e}, "
        f"min eigenvalue {trajectory.min_eigenvalue:.3e}"
    )
    return trajectory


def stable_timestep(spec: SystemSpec, ops: SystemOperators, kernels: KernelFamily, markov: bool = False) -> float:
    """0.05·min(1/ω0, ħ/ΔE) with ΔE the spectral width of H_s; ε/4 at most with memory."""
    energies = np.linalg.eigvalsh(ops.h)
    t_dyn = ops.hbar / max(energies[-1] - energies[0], np.finfo(float).tiny)
    if spec.kind is PotentialKind.HARMONIC:
        t_dyn = min(t_dyn, 1.0 / spec.omega0)
    dt = 0.05 * t_dyn
    if not markov:
        dt = min(dt, 0.25 * kernels.eps)
    return dt


def convergence_check(
    rho0: DensityMatrix, spec: SystemSpec, dt: float, n_steps: int, kernels: KernelFamily, **kwargs
) -> float:
    """max |Δ⟨x⟩| between steps dt and dt/2 on the shared time grid."""
    kwargs.pop("record_every", None)
    coarse = propagate(rho0, spec, dt, n_steps, kernels, record_every=1, **kwargs)
    fine = propagate(rho0, spec, 0.5 * dt, 2 * n_steps, kernels, record_every=2, **kwargs)
    difference = np.max(np.abs(coarse.column("x_mean") - fine.column("x_mean")))
    logger.info(f"step-halving check at dt={dt:.6g}: max |Δ<x>| = {difference:.3e}")
    return float(difference)
