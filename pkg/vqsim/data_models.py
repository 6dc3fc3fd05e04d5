from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    """
    One comparison of a computed value against a built-in tolerance.
    """

    name: str = Field(..., description="Short identifier of the check.")
    value: float = Field(..., description="Computed quantity (a residual, ratio or relative error).")
    limit: float = Field(..., description="Largest acceptable value of ``value``.")
    passed: bool = Field(..., description="Whether value <= limit.")
    detail: str = Field("", description="Human-readable description of what was compared.")


class RunawayDiagnostics(BaseModel):
    """
    Runaway fit of the classical and quantum equations of motion.
    """

    expected_rate: float = Field(..., description="1/t0 = 3 m_R c² / (2αħ).")
    fitted_rate: Optional[float] = Field(None, description="Fitted growth rate of |a(t)|, None if no runaway.")
    relative_error: Optional[float] = Field(None)
    truncated: bool = Field(False, description="Integration stopped on overflow.")
    quantum_runaway: bool = Field(False, description="Growth detected in the quantum expectation values.")


class DecoherenceSummary(BaseModel):
    """
    Switched versus unswitched noise moment for one ramp duration.
    """

    ramp_duration: float
    epsilon: float
    n2_switched: float
    n2_unswitched: float
    ratio: float
    analytic_limit: float
    collisional_exponent: float = 0.0


class ExperimentSummary(BaseModel):
    """
    Contents of ``summary.json``: pass/fail plus every fitted rate and residual.
    """

    experiment: str
    status: str = Field(..., description="'pass' or 'fail'.")
    checks: List[CheckResult] = Field(default_factory=list)
    metrics: Dict[str, float] = Field(default_factory=dict)
    runaway: Optional[RunawayDiagnostics] = None
    decoherence: List[DecoherenceSummary] = Field(default_factory=list)
    min_eigenvalue: Optional[float] = Field(None, description="Smallest eigenvalue of ρ seen in propagator runs.")
    data_files: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"
