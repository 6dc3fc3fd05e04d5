"""vqsim - a charged particle coupled to the vacuum field: kernels, master equation, radiation reaction and decoherence."""

__version__ = "0.3.1"
__author__ = "vqsim developers"
__description__ = "Open-system dynamics of a charged particle in the electromagnetic vacuum"

# Core modules
from .config import ExperimentConfig, emit_config, load_config_file, parse_config
from .data_models import CheckResult, DecoherenceSummary, ExperimentSummary, RunawayDiagnostics
from .decoherence import (
    SwitchingProfile,
    coherence_length,
    decoherence_factor,
    switched_n2,
)
from .eom import integrate_classical_al, integrate_quantum_eom
from .errors import ConfigError, NumericalInvariantError, VqsimError
from .kernels import KernelFamily, kernel_family
from .logger import Logger
from .propagator import SystemSpec, propagate
from .run_manager import RunManager, RunManifest
from .units import CutoffConfig, PhysicalContext

__all__ = [
    # Physics
    "PhysicalContext",
    "CutoffConfig",
    "KernelFamily",
    "kernel_family",
    "SystemSpec",
    "propagate",
    "integrate_classical_al",
    "integrate_quantum_eom",
    "SwitchingProfile",
    "coherence_length",
    "decoherence_factor",
    "switched_n2",
    # Configuration and runs
    "ExperimentConfig",
    "parse_config",
    "emit_config",
    "load_config_file",
    "RunManager",
    "RunManifest",
    "Logger",
    # Data models
    "CheckResult",
    "DecoherenceSummary",
    "ExperimentSummary",
    "RunawayDiagnostics",
    # Errors
    "VqsimError",
    "ConfigError",
    "NumericalInvariantError",
    # Metadata
    "__version__",
]
