"""
Density matrices and the initial states used by the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BasisMismatchError, DomainError, NumericalInvariantError

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
MIN_POINTS_PER_SIGMA = 8


class BasisKind(str, Enum):
    OSCILLATOR = "oscillator"
    GRID = "grid"


@dataclass(frozen=True)
class OscillatorBasis:
    """Number states of an oscillator with frequency ``frequency``."""

    dim: int
    frequency: float

    kind = BasisKind.OSCILLATOR

    def __post_init__(self) -> None:
        if self.dim < 16:
            raise DomainError(f"oscillator basis dimension too small: {self.dim} < 16")
        if self.frequency <= 0.0:
            raise DomainError(f"basis frequency must be positive, got {self.frequency!r}")

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class GridBasis:
    """Uniform position grid including both end points."""

    n_points: int
    x_min: float
    x_max: float

    kind = BasisKind.GRID

    def __post_init__(self) -> None:
        if self.n_points < 16:
            raise DomainError(f"grid too small: {self.n_points} < 16 points")
        if not self.x_max > self.x_min:
            raise DomainError("grid requires x_max > x_min")

    @property
    def size(self) -> int:
        return self.n_points

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


@dataclass
class DensityMatrix:
    """Reduced density matrix in a declared basis."""

    elements: np.ndarray
    basis: BasisKind

    def __post_init__(self) -> None:
        self.elements = np.asarray(self.elements, dtype=complex)
        if self.elements.ndim != 2 or self.elements.shape[0] != self.elements.shape[1]:
            raise BasisMismatchError(f"density matrix must be square, got {self.elements.shape}")

    @classmethod
    def from_state(cls, psi: np.ndarray, basis: BasisKind) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), basis)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.elements))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.elements.conj().T, self.elements)))

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.elements - self.elements.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.elements + self.elements.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def validate(self) -> None:
        herm = self.hermiticity_residual()
        if herm > HERMITICITY_TOL:
            raise NumericalInvariantError("density matrix is not Hermitian", residual=herm)
        drift = abs(self.trace() - 1.0)
        if drift > TRACE_TOL:
            raise NumericalInvariantError("density matrix trace differs from 1", residual=drift)
        diagonal = np.real(np.diag(self.elements))
        if diagonal.min() < -POSITIVITY_TOL:
            raise NumericalInvariantError("negative population on the diagonal", residual=-diagonal.min())

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.elements.copy(), self.basis)


# ============================================================================
# Initial states
# ============================================================================


def _ladder_scales(basis: OscillatorBasis, mass: float, hbar: float):
    x_scale = math.sqrt(hbar / (2.0 * mass * basis.frequency))
    p_scale = math.sqrt(hbar * mass * basis.frequency / 2.0)
    return x_scale, p_scale


def number_state(basis: OscillatorBasis, n: int) -> DensityMatrix:
    if not 0 <= n < basis.dim:
        raise DomainError(f"number state {n} outside basis of dimension {basis.dim}")
    psi = np.zeros(basis.dim, dtype=complex)
    psi[n] = 1.0
    return DensityMatrix.from_state(psi, BasisKind.OSCILLATOR)


def coherent_state(basis: OscillatorBasis, mass: float, x0: float, p0: float, hbar: float = 1.0) -> DensityMatrix:
    """Coherent state with ⟨x⟩ = x0 and ⟨p⟩ = p0, truncated and renormalized."""
    x_scale, p_scale = _ladder_scales(basis, mass, hbar)
    amplitude = x0 / (2.0 * x_scale) + 1j * p0 / (2.0 * p_scale)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[0] = math.exp(-0.5 * abs(amplitude) ** 2)
    for n in range(1, basis.dim):
        psi[n] = psi[n - 1] * amplitude / math.sqrt(n)
    return DensityMatrix.from_state(psi, BasisKind.OSCILLATOR)


def _gaussian(x: np.ndarray, center: float, sigma: float, p0: float, hbar: float) -> np.ndarray:
    return np.exp(-((x - center) ** 2) / (4.0 * sigma**2) + 1j * p0 * x / hbar)


def _check_resolution(basis: GridBasis, sigma: float) -> None:
    if sigma / basis.spacing < MIN_POINTS_PER_SIGMA:
        raise DomainError(
            f"grid spacing {basis.spacing:.4g} resolves sigma={sigma:.4g} with fewer than "
            f"{MIN_POINTS_PER_SIGMA} points"
        )


def gaussian_wavepacket(basis: GridBasis, x0: float, p0: float, sigma: float, hbar: float = 1.0) -> DensityMatrix:
    """Minimum-uncertainty packet with position spread ``sigma``."""
    _check_resolution(basis, sigma)
    psi = _gaussian(basis.points, x0, sigma, p0, hbar)
    return DensityMatrix.from_state(psi, BasisKind.GRID)


def cat_state(basis: GridBasis, separation: float, sigma: float, p0: float = 0.0, hbar: float = 1.0) -> DensityMatrix:
    """Equal superposition of two packets centred at ±separation/2."""
    _check_resolution(basis, sigma)
    x = basis.points
    psi = _gaussian(x, 0.5 * separation, sigma, p0, hbar) + _gaussian(x, -0.5 * separation, sigma, p0, hbar)
    return DensityMatrix.from_state(psi, BasisKind.GRID)
