"""Standard metric-depth evaluation suite.

Per image, over ground-truth pixels that are strictly positive and inside
[min_depth, max_depth] (with predictions optionally clamped to the same
range): Abs Rel, RMSE, RMSE of log depth, mean absolute log10 error, and the
threshold accuracies d_k = fraction with max(pred/gt, gt/pred) < base^k.
The threshold test is strict; a ratio equal to the base counts as a miss.
Dataset numbers are unweighted means of per-image reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calib import DepthMap
from .errors import DataError, DomainError

__all__ = ["EvalConfig", "MetricsReport", "compute_metrics", "aggregate_metrics"]


@dataclass(frozen=True)
class EvalConfig:
    min_depth: float = 0.001
    max_depth: float = 10.0  # indoor profile; use 80.0 outdoors
    clamp_predictions: bool = True
    threshold_base: float = 1.25
    crop: tuple[int, int, int, int] | None = None  # (top, bottom, left, right)

    def __post_init__(self) -> None:
        if not 0.0 < self.min_depth < self.max_depth:
            raise DomainError("EvalConfig requires 0 < min_depth < max_depth")
        if self.threshold_base <= 1.0:
            raise DomainError("EvalConfig requires threshold_base > 1")


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    rmse: float
    rmse_log: float
    log10: float
    d1: float
    d2: float
    d3: float
    n_images: int
    n_pixels: int

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "log10": self.log10,
            "d1": self.d1,
            "d2": self.d2,
            "d3": self.d3,
            "n_images": self.n_images,
            "n_pixels": self.n_pixels,
        }


def compute_metrics(Dhat: DepthMap, Dgt: DepthMap, cfg: EvalConfig) -> MetricsReport:
    """Per-image metrics over the range-filtered valid pixel set."""
    if Dhat.values.shape != Dgt.values.shape:
        raise DataError("compute_metrics: shape mismatch")
    pred = Dhat.values
    gt = Dgt.values
    if cfg.crop is not None:
        top, bottom, left, right = cfg.crop
        pred = pred[top:bottom, left:right]
        gt = gt[top:bottom, left:right]
    valid = (gt > 0.0) & (gt >= cfg.min_depth) & (gt <= cfg.max_depth)
    if not valid.any():
        raise DataError("compute_metrics: no valid pixels after range filtering")
    p = pred[valid]
    g = gt[valid]
    if cfg.clamp_predictions:
        p = np.clip(p, cfg.min_depth, cfg.max_depth)
    if np.any(p <= 0.0):
        raise DataError("compute_metrics: nonpositive predictions without clamping")

    abs_rel = float(np.mean(np.abs(p - g) / g))
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    rmse_log = float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2)))
    log10 = float(np.mean(np.abs(np.log10(p) - np.log10(g))))
    ratio = np.maximum(p / g, g / p)
    base = cfg.threshold_base
    d1 = float(np.mean(ratio < base))
    d2 = float(np.mean(ratio < base**2))
    d3 = float(np.mean(ratio < base**3))
    return MetricsReport(
        abs_rel=abs_rel,
        rmse=rmse,
        rmse_log=rmse_log,
        log10=log10,
        d1=d1,
        d2=d2,
        d3=d3,
        n_images=1,
        n_pixels=int(g.size),
    )


def aggregate_metrics(reports: list[MetricsReport]) -> MetricsReport:
    """Unweighted per-image mean of every metric; counts are summed."""
    if not reports:
        raise DataError("aggregate_metrics: empty report list")
    n = len(reports)
    return MetricsReport(
        abs_rel=sum(r.abs_rel for r in reports) / n,
        rmse=sum(r.rmse for r in reports) / n,
        rmse_log=sum(r.rmse_log for r in reports) / n,
        log10=sum(r.log10 for r in reports) / n,
        d1=sum(r.d1 for r in reports) / n,
        d2=sum(r.d2 for r in reports) / n,
        d3=sum(r.d3 for r in reports) / n,
        n_images=sum(r.n_images for r in reports),
        n_pixels=sum(r.n_pixels for r in reports),
    )
