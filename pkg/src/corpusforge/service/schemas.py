"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field


class TranslateRequest(BaseModel):
    src: str
    tgt: str
    texts: List[str]


class TranslateResponse(BaseModel):
    texts: List[str]


class ScoreRequest(BaseModel):
    src: str
    tgt: str
    pairs: List[Tuple[str, str]]


class ScoreResponse(BaseModel):
    scores: List[Optional[float]]


class LanguageOut(BaseModel):
    id: int
    tag: str
    family: str
    code: str
    script: str
    display_name: str


class PerturbRequest(BaseModel):
    text: str
    tag: str
    kinds: List[str] = Field(default_factory=list, description="empty means every kind with resources")
    rate: float = 0.05
    seed: int = Field(0, ge=0, lt=2**64)


class PerturbResponse(BaseModel):
    original: str
    perturbed: str
    log: Dict[str, Any]


class RecordRequest(BaseModel):
    id: str = "1"
    src_tag: str
    tgt_tag: str
    src: str
    tgt: str
    domain: str = "general"
    kinds: List[str] = Field(default_factory=list)
    rate: Optional[float] = None
    seed: int = Field(0, ge=0, lt=2**64)
    base_quality: Optional[float] = Field(None, ge=1, le=100, description="Cs for da/qe; scored by the stub when absent")
    literal_da: bool = False


class TaskRecordOut(BaseModel):
    task: str
    domain: str
    input: Dict[str, str]
    output: Dict[str, Union[str, float]]


class MetricsRequest(BaseModel):
    hyp: List[str]
    ref: List[str]


class CleanPair(BaseModel):
    id: str
    src: str
    tgt: str
    score: Optional[float] = None


class CleanRequest(BaseModel):
    src_tag: str
    tgt_tag: str
    pairs: List[CleanPair]
    stages: List[str] = Field(default_factory=lambda: ["length", "language_script", "markup"])
    max_word_delta: int = 10
    max_char_delta: Optional[int] = None
    qe_margin: float = 10.0
    scorer: Optional[str] = Field(None, description="'stub' or 'attached'; needed for qe_score")


class VerdictOut(BaseModel):
    id: str
    kept: bool
    reason: Optional[str] = None
    detail: str = ""


class CleanResponse(BaseModel):
    verdicts: List[VerdictOut]
    stats: Dict[str, Any]
    thresholds: List[Dict[str, Any]] = Field(default_factory=list)
