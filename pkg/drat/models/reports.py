from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class ComplexityReport(BaseModel):
    """Measured query-key products of one stride-attention pass against full attention."""

    axis: Literal["joints", "time"]
    frames: int
    joints: int
    tokens_per_step: int
    wnd: int
    stride: int
    query_windows: int
    stride_dot_products: int
    oracle_dot_products: int
    ratio: float
    sparser: bool


class CheckResult(BaseModel):
    check_name: str
    status: Literal["pass", "fail"]
    max_error: float
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int
    tolerance: Optional[float] = None
    failing_inputs: Optional[Dict[str, Any]] = None


class SuiteReport(BaseModel):
    seed: int
    passed: bool
    faults: List[str] = Field(default_factory=list)
    runtime_seconds: float
    checks: List[CheckResult]


class EvalReport(BaseModel):
    accuracy: float
    samples: int
    frames: int
    train_frames: int
    seed: int
    config: Dict[str, Any]
