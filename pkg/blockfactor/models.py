# blockfactor/models.py
# JSON document schemas for everything the CLI reads or writes.
from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator


class VariableParamsDoc(BaseModel):
    alpha: float
    epsilon: float
    delta: int

    @field_validator("delta")
    @classmethod
    def _binary(cls, value: int) -> int:
        if value not in (0, 1):
            raise ValueError("delta must be 0 or 1")
        return value


class BlockDoc(BaseModel):
    variables: list[str]
    params: list[VariableParamsDoc]


class EmTraceDoc(BaseModel):
    variables: list[str]
    n_iter: int
    best_restart: Optional[int] = None
    restart_logliks: list[float] = Field(default_factory=list)


class ModelDocument(BaseModel):
    # column order of the data the model describes
    variables: list[str] = Field(default_factory=list)
    blocks: list[BlockDoc]
    loglik: Optional[float] = None
    bic: Optional[float] = None
    n: Optional[int] = None
    n_params: Optional[int] = None
    seed: Optional[int] = None
    em_trace: list[EmTraceDoc] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class CandidateDoc(BaseModel):
    blocks: list[list[str]]
    n_blocks: int
    n_params: int
    loglik: float
    bic: float


class SelectionDocument(BaseModel):
    method: str
    best: ModelDocument
    candidates: list[CandidateDoc]
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)


class ExperimentMetadata(BaseModel):
    seed: int
    versions: dict[str, str]
    wall_seconds: float
    scenarios: list[dict[str, Any]]
    rows: int
