"""Shared contexts and cutoffs for the vqsim tests."""

import pytest

from vqsim.kernels import kernel_family
from vqsim.units import CutoffConfig, PhysicalContext


@pytest.fixture
def natural_ctx():
    """Natural units (ħ = c = ε0 = 1), CODATA α, unit mass."""
    return PhysicalContext.natural()


@pytest.fixture
def cutoff(natural_ctx):
    """ω_max = 1, so ε = 1 and k_max = 1."""
    return CutoffConfig.from_omega(1.0, natural_ctx)


@pytest.fixture
def kernels(natural_ctx, cutoff):
    return kernel_family(natural_ctx, cutoff)


@pytest.fixture
def si_ctx():
    return PhysicalContext.si_electron()
