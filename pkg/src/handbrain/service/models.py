"""Request/response schemas for the HTTP API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..engine import EngineConfig


class EngineCfg(BaseModel):
    role: str = "evaluator"
    path: str = "builtin"
    depth: Optional[int] = None
    movetime_ms: Optional[int] = None
    elo: Optional[int] = None
    seed: int = 0

    def to_config(self, role: Optional[str] = None) -> EngineConfig:
        depth = self.depth
        if depth is None and self.movetime_ms is None:
            depth = 1
        return EngineConfig(
            role=role or self.role,
            path=self.path,
            depth=depth,
            movetime_ms=self.movetime_ms,
            elo=self.elo,
            seed=self.seed,
        )


class HealthResponse(BaseModel):
    status: str
    version: str


class FragilityRequest(BaseModel):
    fen: str


class PieceFragility(BaseModel):
    square: str
    color: str
    piece: str
    betweenness: float
    attacked: bool


class FragilityResponse(BaseModel):
    fen: str
    score: float
    pieces: list[PieceFragility]


class FragilityPgnRequest(BaseModel):
    pgn: str


class PositionScore(BaseModel):
    fen: str
    move: Optional[str]
    score: float


class FragilityPgnResponse(BaseModel):
    games: list[list[PositionScore]]


class ReplayRequest(BaseModel):
    events: list[dict]
    upto: Optional[int] = None
    include_pgn: bool = False


class ReplayResponse(BaseModel):
    fen: str
    phase: str
    turn: int
    result: Optional[str]
    mode_history: list[str]
    events: int
    pgn: Optional[str] = None


class SimulateRequest(BaseModel):
    sessions: int = Field(ge=1, default=1)
    turns: int = Field(ge=2, default=20)
    seed: int = 0
    policy: Optional[dict] = None
    teammate: Optional[EngineCfg] = None
    opponent: Optional[EngineCfg] = None


class SessionLogPayload(BaseModel):
    session_id: str
    events: list[dict]


class SimulateResponse(BaseModel):
    logs: list[SessionLogPayload]


class ExtractRequest(BaseModel):
    logs: list[SessionLogPayload]
    k: int = 3
    eval_depth: int = 1
    split_seed: Optional[int] = None


class ExtractResponse(BaseModel):
    csv: str
    rows: int
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    manifest: Optional[dict] = None


class TrainRequest(BaseModel):
    csv: str
    trees: int = 200
    depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 5
    gamma: float = 2.0
    alpha: float = 0.25
    beta: float = 1.0
    no_task_features: bool = False
    seed: int = 0


class TrainResponse(BaseModel):
    model: dict
    features_used: list[str]
    train_rows: int
    train_metrics: dict


class EvalRequest(BaseModel):
    model: dict
    csv: str
    threshold: float = 0.5


class EvalResponse(BaseModel):
    metrics: dict
    rows: int


class AnalyzeRequest(BaseModel):
    csv: str
    alpha: float = 0.05


class AnalyzeResponse(BaseModel):
    report: dict
    markdown: str
