"""Request/response models for the analysis service (and the CLI client)."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class GenRequest(BaseModel):
    out_dir: str
    preset: str = "mixture"
    seed: int = 0
    sizes: Optional[dict[str, int]] = None
    params: dict[str, float] = Field(default_factory=dict)


class DatasetSummary(BaseModel):
    name: str
    role: str
    n_samples: int
    bundle_dir: str


class GenResponse(BaseModel):
    out_dir: str
    preset: str
    config_hash: str
    datasets: list[DatasetSummary]


class TrainRequest(BaseModel):
    data_dir: str
    out_dir: str
    seed: Optional[int] = None
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    learning_rate: Optional[float] = None
    momentum: Optional[float] = None
    archs: Optional[list[str]] = None  # comma-joined hidden widths, "" = logreg
    arch_seeds: Optional[list[int]] = None
    include_epoch_zero: bool = False


class RunSummary(BaseModel):
    model_id: str
    family: str
    seed: int
    param_count: int
    final_train_accuracy: Optional[float] = None
    final_id_accuracy: Optional[float] = None


class TrainResponse(BaseModel):
    manifest_path: str
    config_hash: str
    n_epochs: int
    runs: list[RunSummary]


class ScoreRequest(BaseModel):
    manifest_path: str
    out_dir: str
    window: Optional[tuple[int, int]] = None
    tail_start: Optional[int] = 10
    epochs: list[int] = Field(default_factory=list)  # extra s_t columns
    scoring_ids: Optional[list[str]] = None


class ScoreSummary(BaseModel):
    dataset: str
    n_samples: int
    mean_confusion: float
    mean_entropy_std: Optional[float] = None


class ScoreResponse(BaseModel):
    config_hash: str
    window: tuple[int, int]
    summaries: list[ScoreSummary]
    artifacts: list[str]


class PartitionRequest(BaseModel):
    manifest_path: str
    out_dir: str
    bins: int = 40
    window: Optional[tuple[int, int]] = None
    scoring_ids: Optional[list[str]] = None


class PartitionResponse(BaseModel):
    config_hash: str
    bins: int
    window: tuple[int, int]
    ratios: dict[str, list[float]]
    artifacts: list[str]


class PredictRequest(BaseModel):
    manifest_path: str
    out_dir: str
    bins: int = 40
    window: Optional[tuple[int, int]] = None
    epoch: Optional[int] = None  # single-epoch (e_t) partitioning
    scoring_ids: Optional[list[str]] = None
    eval_epoch: Optional[int] = None
    include_ensemble: bool = True
    format: Literal["csv", "structured"] = "csv"


class PredictionRow(BaseModel):
    model_id: str
    ood: str
    predicted: float
    actual: Optional[float] = None
    residual: Optional[float] = None
    fallback_bins: int


class PredictResponse(BaseModel):
    config_hash: str
    bins: int
    window: tuple[int, int]
    mean_confusion: dict[str, float]
    rows: list[PredictionRow]
    artifacts: list[str]


class PhasesRequest(BaseModel):
    manifest_path: str
    out_dir: str
    smoothing: int = 3
    delta: float = 0.005
    train_name: str = "train"
    id_name: Optional[str] = None


class PhaseRow(BaseModel):
    model_id: str
    t1: Optional[int] = None
    t2: Optional[int] = None


class PhasesResponse(BaseModel):
    config_hash: str
    rows: list[PhaseRow]
    artifacts: list[str]


class FitRequest(BaseModel):
    manifest_path: str
    out_dir: str
    bins: int = 40
    window: Optional[tuple[int, int]] = None
    thresholds: Optional[tuple[float, float]] = None
    scoring_ids: Optional[list[str]] = None
    eval_epoch: Optional[int] = None


class GroupFitRow(BaseModel):
    model_id: str
    family: str
    param_count: int
    complexity_alpha: Optional[float] = None
    fitted_alpha: float
    fit_rss: float
    bins_used: int


class CollinearityDatasetRow(BaseModel):
    dataset: str
    minacc: float
    slope: float
    ols_rss: float
    ratio_easy: float
    ratio_med: float
    ratio_hard: float
    minacc_residual: float
    slope_residual: float


class CollinearitySummary(BaseModel):
    minacc_easy: Optional[float]
    s_easy: Optional[float]
    minacc_med: Optional[float]
    s_med: Optional[float]
    chance_level: float
    split_lo: float
    split_hi: float
    datasets: list[CollinearityDatasetRow]


class FitResponse(BaseModel):
    config_hash: str
    group_fits: list[GroupFitRow]
    collinearity: Optional[CollinearitySummary] = None
    collinearity_skipped: Optional[str] = None
    artifacts: list[str]


class ExtremesRequest(BaseModel):
    manifest_path: str
    dataset: str
    k: int = 16
    which: Literal["lowest", "highest"] = "lowest"
    mistakes_only: bool = False
    window: Optional[tuple[int, int]] = None
    scoring_ids: Optional[list[str]] = None
    out_dir: Optional[str] = None


class ExtremeRow(BaseModel):
    rank: int
    sample_index: int
    confusion: float
    label: Optional[int] = None
    ensemble_pred: Optional[int] = None
    tags: Optional[str] = None


class ExtremesResponse(BaseModel):
    config_hash: str
    dataset: str
    which: str
    rows: list[ExtremeRow]
    artifacts: list[str]


class ReportRequest(BaseModel):
    out_dir: str
    format: Literal["csv", "structured"] = "structured"


class ReportResponse(BaseModel):
    report_path: str
    sections: list[str]


class ErrorBody(BaseModel):
    category: str
    code: str
    message: str
