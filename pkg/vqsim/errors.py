"""Exception hierarchy for vqsim.

The CLI maps these onto process exit codes (see ``vqsim.cli``).
"""

from typing import Optional


class VqsimError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(VqsimError):
    """Invalid experiment configuration: unknown key, missing key or bad value."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        self.key = key
        self.line = line
        location = []
        if key is not None:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class NumericalInvariantError(VqsimError):
    """A structural invariant (trace, Hermiticity) broke during a computation."""

    def __init__(self, message: str, step: Optional[int] = None, residual: Optional[float] = None) -> None:
        self.step = step
        self.residual = residual
        details = []
        if step is not None:
            details.append(f"step {step}")
        if residual is not None:
            details.append(f"residual {residual:.3e}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class QuadratureError(NumericalInvariantError):
    """Adaptive quadrature could not reach the requested accuracy."""


class UnitError(VqsimError, ValueError):
    """Unknown or unsupported dimension tag."""


class DomainError(VqsimError, ValueError):
    """An argument lies outside the domain of an operation."""


class BasisMismatchError(VqsimError, ValueError):
    """Operators or states do not share a basis."""


class ProfileError(VqsimError, ValueError):
    """A switching profile is malformed or lacks required derivatives."""
