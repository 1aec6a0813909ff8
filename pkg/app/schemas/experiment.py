"""
Experiment Schemas - Pydantic models for experiment configuration and reports
Field order of Report is the order of the emitted JSON object.
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings


# ==================== ENUMS ====================

class ProtocolEnum(str, Enum):
    P1 = "p1"
    EPR = "epr"


class RunPolicyEnum(str, Enum):
    RANDOM = "random"
    COMP = "comp"
    XTEST = "xtest"
    ZTEST = "ztest"


class ReportFormatEnum(str, Enum):
    JSON = "json"
    CSV = "csv"
    TEXT = "text"


# ==================== CONFIG ====================

class ExperimentConfig(BaseModel):
    """One `verify run` invocation"""
    model_config = ConfigDict(frozen=True)

    circuit_path: str = Field(..., min_length=1, description="Circuit file")
    protocol: ProtocolEnum = Field(
        default_factory=lambda: ProtocolEnum(settings.DEFAULT_PROTOCOL),
        description="p1 (prepare-and-send) or epr (delayed choice)"
    )
    run_policy: RunPolicyEnum = Field(default=RunPolicyEnum.RANDOM, description="Run type selection")
    trials: int = Field(default_factory=lambda: settings.DEFAULT_TRIALS, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Experiment seed (64-bit)")
    attack_path: Optional[str] = Field(default=None, description="Attack file (EPR only)")
    report_path: Optional[str] = None
    format: ReportFormatEnum = ReportFormatEnum.JSON
    workers: int = Field(default_factory=lambda: settings.DEFAULT_WORKERS, ge=1)

    @model_validator(mode="after")
    def validate_attack_protocol(self):
        if self.attack_path and self.protocol is not ProtocolEnum.EPR:
            raise ValueError("Attacks are injected in the epr protocol only")
        return self


# ==================== REPORT ====================

class Interval(BaseModel):
    low: float = Field(ge=0, le=1)
    high: float = Field(ge=0, le=1)
    level: float = Field(gt=0, lt=1)


class RunCounts(BaseModel):
    """Counts for one run type"""
    run_type: str
    trials: int = Field(ge=0)
    accepts: int = Field(ge=0)
    check_failures: int = Field(ge=0)
    output_0: int = Field(ge=0)
    output_1: int = Field(ge=0)
    acceptance: Optional[float] = None
    interval: Optional[Interval] = None

    @model_validator(mode="after")
    def validate_counts(self):
        if self.accepts > self.trials or self.output_0 + self.output_1 > self.trials:
            raise ValueError(f"Counts exceed trials for run type {self.run_type}")
        return self


class Predictions(BaseModel):
    """Oracle value and closed-form predictions"""
    p: float = Field(ge=0, le=1, description="Ideal probability of output 0")
    label: str
    expected_acceptance: Optional[float] = Field(
        default=None, description="Honest-prover acceptance for the run policy"
    )
    test_rejection: Optional[float] = None
    xtest_rejection: Optional[float] = None
    ztest_rejection: Optional[float] = None
    comp_acceptance_bound: Optional[float] = None
    overall_acceptance_bound: Optional[float] = None
    bound_applies: Optional[bool] = None


class CriterionResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class Report(BaseModel):
    seed: int
    trials: int = Field(ge=1)
    accepts: int = Field(ge=0)
    acceptance: float
    interval: Interval
    per_run: List[RunCounts]
    predictions: Predictions
    criteria: List[CriterionResult] = Field(default_factory=list)
    config: ExperimentConfig

    @model_validator(mode="after")
    def validate_totals(self):
        if sum(run.trials for run in self.per_run) != self.trials:
            raise ValueError("Per-run trials do not sum to the total")
        if sum(run.accepts for run in self.per_run) != self.accepts:
            raise ValueError("Per-run accepts do not sum to the total")
        if self.acceptance != self.accepts / self.trials:
            raise ValueError("Acceptance must equal accepts/trials")
        return self

    @property
    def passed(self) -> bool:
        return all(criterion.passed for criterion in self.criteria)
