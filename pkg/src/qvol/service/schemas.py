"""Request/response models for the HTTP service."""

from __future__ import annotations

import math

from pydantic import BaseModel, ConfigDict, Field

_DEFAULT_NOISE_SD = math.sqrt(0.01 / 9.0)


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ContinuousFitRequest(_Request):
    volumes: list[float] = Field(min_length=1)
    method: str = "NLS"


class BinnedFitRequest(_Request):
    reported_values: list[float] = Field(min_length=1)
    method: str = "CHI2"
    gamma: float | None = None


class FitResponse(BaseModel):
    method: str
    c: float
    beta: float
    delta_c: float
    delta_beta: float
    cutoff_rank: int
    cutoff_volume: float
    ks: float
    alpha: float | None = None
    flags: list[str] = []


class ReportRowModel(BaseModel):
    threshold_v: float
    threshold_v_monthly: float
    n_hat: float
    delta_n: float
    v_hat: float
    delta_v: float


class EstimateRequest(_Request):
    c: float
    beta: float
    delta_c: float = 0.0
    delta_beta: float = 0.0
    thresholds: list[float] = Field(min_length=1)


class EstimateResponse(BaseModel):
    c: float
    beta: float
    delta_c: float
    delta_beta: float
    rows: list[ReportRowModel]


class BinningModel(_Request):
    floor: float
    first_edge: float
    ratio: float
    bin_count: int


class SimulateRequest(_Request):
    n_queries: int = 10**6
    c: float = 1e5
    beta: float = 0.7745
    schemes: list[str] = ["nonuniform"]
    sample_sizes: list[int] = [4000]
    methods: list[str] = ["NLS"]
    replicates: int = 100
    base_seed: int = 42
    binned: bool = False
    binning: BinningModel | None = None
    geometric_p: float = 0.001
    noise_mean: float = 1.0
    noise_sd: float = _DEFAULT_NOISE_SD
    sketch_fraction: float = 0.001
    gamma_hint: float | None = None
    jobs: int = 1


class CellStatsModel(BaseModel):
    scheme: str
    sample_size: int
    method: str
    replicates_used: int
    failures: int
    mean_c: float
    sd_c: float
    mean_beta: float
    sd_beta: float
    mean_n_hat: float
    sd_n_hat: float
    mean_v_hat: float
    sd_v_hat: float
    include_v1_fraction: float


class SimulateResponse(BaseModel):
    base_seed: int
    replicates: int
    cells: list[CellStatsModel]


class RankExportRequest(_Request):
    n_queries: int
    c: float
    beta: float
    scheme: str | None = None
    sample_size: int | None = None
    seed: int = 42
    geometric_p: float = 0.001
    noise_mean: float = 1.0
    noise_sd: float = _DEFAULT_NOISE_SD
    sketch_fraction: float = 0.001


class HealthResponse(BaseModel):
    status: str
    version: str
