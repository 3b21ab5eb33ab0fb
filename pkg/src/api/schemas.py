# src/api/schemas.py

from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.exact import as_rational

# Commands understood by the job dispatcher (CLI subcommands and service routes)
COMMANDS = (
    "stability-search",
    "mean-bound",
    "pointwise-search",
    "pet-bound",
    "maximal-check",
    "upcrossings",
    "compare-bounds",
    "rate-from-norm",
    "specker",
    "asymptotic-table",
    "trace",
)

Rational = Union[int, float, str, Dict[str, int]]

# --- Basic Status ---

class HealthResponse(BaseModel):
    status: str = "healthy"
    timestamp: datetime


class CommandListResponse(BaseModel):
    commands: List[str]

# --- Experiment configs ---

class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    format: Literal["json", "csv"] = "json"


class ExperimentConfig(BaseModel):
    """
    One experiment: a system, an element and the parameters of one command.

    Rationals may be given as numbers, "p/q" strings or {"num", "den"}.
    Unknown keys are rejected.
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    command: Optional[str] = None
    # system: a name from config/systems.yaml, a recipe {"kind": ...} or a
    # document {"space": ..., "operator": ...}
    system: Optional[Union[str, Dict[str, Any]]] = None
    f: Optional[Union[str, List[Rational]]] = None
    seed: int = 0

    eps: Optional[Rational] = None
    lambda1: Optional[Rational] = None
    lambda2: Optional[Rational] = None
    norm_f: Optional[Rational] = None
    norm_fstar: Optional[Union[Rational, Literal["ergodic"]]] = None
    K: Union[str, Dict[str, Any]] = "identity"
    mode: Literal["isometry", "nonexpansive"] = "nonexpansive"

    horizon: int = Field(10_000, ge=1)
    n: Optional[int] = Field(None, ge=1)
    N: Optional[int] = Field(None, ge=1)
    k: Optional[int] = Field(None, ge=0)
    alpha: Optional[Rational] = None
    beta: Optional[Rational] = None
    imax: Optional[int] = Field(None, ge=0)
    C: Optional[float] = Field(None, gt=0)

    table: Optional[Dict[str, Optional[int]]] = None
    regimes: Optional[List[Union[str, Dict[str, Any]]]] = None
    rho_range: Optional[List[int]] = None

    schedule: bool = False
    schedule_cap: int = Field(1_000_000, ge=1)
    explain: bool = False

    digit_budget: Optional[int] = Field(None, ge=1)
    trace_cap: Optional[int] = Field(None, ge=1)
    window_cap: Optional[int] = Field(None, ge=1)
    probe_horizon: Optional[int] = Field(None, ge=1)
    full: bool = False
    output: Optional[OutputSpec] = None

    @field_validator("command")
    @classmethod
    def known_command(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in COMMANDS:
            raise ValueError(f"unknown command {value!r}; expected one of {', '.join(COMMANDS)}")
        return value

    @field_validator("eps", "lambda1", "lambda2")
    @classmethod
    def positive(cls, value):
        if value is not None and as_rational(value) <= 0:
            raise ValueError("must be positive")
        return value

    @field_validator("norm_f")
    @classmethod
    def nonnegative(cls, value):
        if value is not None and as_rational(value) < 0:
            raise ValueError("must be >= 0")
        return value

    @model_validator(mode="after")
    def ordered_interval(self) -> "ExperimentConfig":
        if self.alpha is not None and self.beta is not None:
            if not as_rational(self.alpha) < as_rational(self.beta):
                raise ValueError("alpha must be smaller than beta")
        return self

    def parameters(self) -> Dict[str, Any]:
        """The config as it is embedded in reports (unset fields dropped)."""
        return self.model_dump(exclude_none=True, exclude={"output"})

# --- Reports ---

class RunResponse(BaseModel):
    command: str
    status: Literal["success", "partial", "error"]
    exit_code: int
    report: Dict[str, Any]
