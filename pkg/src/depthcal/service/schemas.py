"""Request/response models for the calibration service.

The CLI builds these same models and calls the handlers in process, so the
HTTP surface and the command line stay one contract. Paths are interpreted
on the host running the handlers.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class CalibBoundsModel(BaseModel):
    beta_min: float = 0.0
    beta_max: float = 2.0
    alpha_max: float = 100.0
    eps: float = 1e-6
    r_max: float = 3.0


class SynthRequest(BaseModel):
    out: str
    n: int = 64
    height: int = 64
    width: int = 64
    seed: int = 0
    sigma_n: float = 0.0
    sigma_t: float = 0.0
    sigma_f: float = 0.0
    d_text: int = 32
    d_feat: int = 16
    k_captions: int = 15
    paper_dims: bool = False  # full-scale dims: d_text=512, d_feat=1024
    bounds: CalibBoundsModel = Field(default_factory=CalibBoundsModel)


class SynthResponse(BaseModel):
    manifest: str
    truth: str
    n_samples: int


class TrainRequest(BaseModel):
    manifest: str
    out: str
    epochs: int = 50
    batch_size: int = 8
    lr_max: float = 3e-5
    lr_min: float = 1e-5
    lambda_env: float = 0.1
    lambda_r: float = 1e-2
    lambda_cal: float = 1.0
    seed: int = 0
    hidden: int = 256
    trunk_depth: int = 3
    sel_depth: int = 3
    weight_decay: float = 0.01
    threads: int = 1
    eval_every: int = 0
    val_manifest: str | None = None
    bounds: CalibBoundsModel = Field(default_factory=CalibBoundsModel)


class TrainResponse(BaseModel):
    checkpoint: str
    epochs: int
    final_total_loss: float
    final_depth_loss: float
    skipped_total: int


class EvalRequest(BaseModel):
    manifest: str
    ckpt: str | None = None
    use_oracle: bool = False
    unclamped: bool = False
    use_global: bool = False
    mode: str = "full"  # full | language | vision
    min_depth: float = 0.001
    max_depth: float = 10.0
    clamp_predictions: bool = True
    out: str | None = None  # JSON report path
    table_out: str | None = None  # per-image CSV path
    threads: int = 1
    bounds: CalibBoundsModel = Field(default_factory=CalibBoundsModel)


class EvalResponse(BaseModel):
    abs_rel: float
    rmse: float
    rmse_log: float
    log10: float
    d1: float
    d2: float
    d3: float
    n_images: int
    n_pixels: int
    report_path: str | None = None
    table_path: str | None = None


class OracleRequest(BaseModel):
    manifest: str
    out: str  # CSV with raw and clamped values per image
    bounds: CalibBoundsModel = Field(default_factory=CalibBoundsModel)


class OracleResponse(BaseModel):
    n_rows: int
    table_path: str


class GlobalFitRequest(BaseModel):
    manifest: str
    bounds: CalibBoundsModel = Field(default_factory=CalibBoundsModel)


class GlobalFitResponse(BaseModel):
    alpha: float
    beta: float


class GradCheckRequest(BaseModel):
    seed: int = 0
    h: float = 1e-5
    tol: float = 1e-4


class GradCheckResponse(BaseModel):
    max_rel_err: float
    n_params: int
    tol: float
    passed: bool


class SensitivityRequest(BaseModel):
    manifest: str
    ckpt: str
    out: str | None = None  # per-image CSV path
    threads: int = 1


class SensitivityModeStats(BaseModel):
    mode: str
    mean_ln_alpha: float
    std_ln_alpha: float
    mean_beta_tilde: float
    std_beta_tilde: float


class SensitivityResponse(BaseModel):
    modes: list[SensitivityModeStats]
    n_images: int
    table_path: str | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
