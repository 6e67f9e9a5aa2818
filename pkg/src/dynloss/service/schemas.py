"""Pydantic request/response models for the training service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from .. import loss as loss_mod


class HealthResponse(BaseModel):
    status: str
    version: str


class SyntheticDataModel(BaseModel):
    n: int = Field(ge=10)
    mean: float = 0.45
    std: float = 0.17
    skew: float = 0.5
    seed: int | None = None  # defaults to the run seed
    signal_frac: float = 1.0
    min_len: int = 12
    max_len: int = 20


class ScheduleModel(BaseModel):
    a: float = loss_mod.DEFAULT_A
    b: float = loss_mod.DEFAULT_B
    c: float = loss_mod.DEFAULT_C
    unit: str = "epoch"


class TrainRequest(BaseModel):
    mode: str = "dynamic"
    data_path: str | None = None
    prompt_id: int = 1
    synthetic: SyntheticDataModel | None = None
    embed_dim: int = 24
    hidden_dim: int = 32
    max_seq_len: int = 512
    vocab_size: int = 4000
    min_freq: int = 2
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    schedule: ScheduleModel = ScheduleModel()
    population_std: bool = False
    clip_norm: float = 5.0
    train_frac: float = 0.9
    drop_undersized: bool = False
    eval_threads: int = 1
    checkpoint_every: int = 0
    seed: int = 0
    out_dir: str


class EpochMetricsModel(BaseModel):
    epoch: int
    qwk: float
    mse: float
    mae: float
    r2: float | None = None  # None marks r2 undefined (constant truth)
    pred_std: float
    target_std: float
    p: float


class TrainResponse(BaseModel):
    epochs: list[EpochMetricsModel]
    diverged: bool
    divergence_epoch: int | None = None
    divergence_batch: int | None = None
    checkpoint: str | None = None
    metrics_csv: str | None = None
    vocab: str | None = None
    skipped_rows: list[tuple[int, str]] = []
    wall_clock_seconds: float


class EvaluateRequest(BaseModel):
    checkpoint: str
    vocab: str
    data_path: str
    prompt_id: int = 1
    threads: int = 1


class EvaluateResponse(BaseModel):
    metrics: EpochMetricsModel
    n_samples: int
    skipped_rows: list[tuple[int, str]] = []


class ScheduleRequest(BaseModel):
    a: float = loss_mod.DEFAULT_A
    b: float = loss_mod.DEFAULT_B
    c: float = loss_mod.DEFAULT_C
    resolution: int = Field(default=101, ge=2)
    out: str | None = None


class ScheduleResponse(BaseModel):
    rows: list[tuple[float, float]]
    csv: str
    out: str | None = None


class SynthDataRequest(BaseModel):
    n: int = Field(ge=10)
    mean: float = 0.45
    std: float = 0.17
    skew: float = 0.5
    seed: int = 0
    signal_frac: float = 1.0
    min_len: int = 12
    max_len: int = 20
    out: str


class SynthDataResponse(BaseModel):
    out: str
    rows: int
    target_mean: float
    target_std: float


class QwkRequest(BaseModel):
    path: str
    truth_col: str = "truth"
    pred_col: str = "pred"
    min_score: int | None = None
    max_score: int | None = None


class QwkResponse(BaseModel):
    qwk: float
    n_pairs: int
    min_score: int
    max_score: int


class ScoreRequest(BaseModel):
    checkpoint: str
    vocab: str
    texts: list[str]
    prompt_id: int | None = None


class ScoreResponse(BaseModel):
    normalized: list[float]
    scores: list[int] | None = None
