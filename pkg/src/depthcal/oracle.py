"""Per-image closed-form least-squares calibration in inverse depth.

For valid pixels (ground truth strictly positive) with y the predicted
inverse relative depth and g the inverse ground-truth depth, the affine fit
minimizing the mean squared inverse-depth residual is

    alpha_raw = Cov(y, g) / max(Var(y), eps)
    beta_raw  = E[g] - alpha_raw * E[y]

and the stabilized targets clamp alpha_raw to [eps, alpha_max] and beta_raw
to [beta_min, beta_max]. Moments are accumulated in a single pass with
exactly rounded (Shewchuk) summation so fits on planted data recover the
planted parameters to full double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .calib import (
    CalibBounds,
    ConstrainedCalib,
    DepthMap,
    InverseDepthMap,
    UnconstrainedCalib,
    unmap_params,
)
from .errors import DataError, DomainError

__all__ = [
    "OracleTarget",
    "invert_depth",
    "fit_oracle",
    "oracle_targets",
    "masked_sums",
    "moments_from_sums",
    "moments_from_masked",
    "fit_from_moments",
]


@dataclass(frozen=True)
class OracleTarget:
    """Result of a per-image oracle fit.

    alpha_raw/beta_raw are the unclamped least-squares solution;
    alpha_ls/beta_ls the clamped pair used as the training target.
    theta_tilde_star is filled by oracle_targets. degenerate marks fits
    where the variance floor decided alpha (single pixel or constant y).
    """

    alpha_ls: float
    beta_ls: float
    alpha_raw: float
    beta_raw: float
    n_valid: int
    degenerate: bool
    theta_tilde_star: UnconstrainedCalib | None = None


def invert_depth(D: DepthMap, eps: float) -> InverseDepthMap:
    """Inverse depth 1 / max(D, eps), elementwise over the whole grid.

    Invalid pixels (value <= 0) produce the 1/eps ceiling but stay outside
    the validity mask, which is always re-derived from D.
    """
    if eps <= 0.0:
        raise DomainError("invert_depth requires eps > 0")
    return InverseDepthMap(values=1.0 / np.maximum(D.values, eps))


def _fsum(arr: np.ndarray) -> float:
    # math.fsum is exactly rounded; tolist() avoids per-element numpy boxing
    return math.fsum(arr.tolist())


def masked_sums(y: np.ndarray, g: np.ndarray) -> tuple[int, float, float, float, float]:
    """Single-pass compensated sums (n, sum y, sum g, sum y^2, sum y*g).

    Raw sums rather than moments so per-image contributions can be pooled
    exactly for the dataset-wide global fit.
    """
    return y.size, _fsum(y), _fsum(g), _fsum(y * y), _fsum(y * g)


def moments_from_sums(
    n: int, sum_y: float, sum_g: float, sum_yy: float, sum_yg: float
) -> tuple[float, float, float, float, int]:
    """(mean_y, mean_g, var_y, cov_yg, n) from raw sums."""
    mean_y = sum_y / n
    mean_g = sum_g / n
    var_y = sum_yy / n - mean_y * mean_y
    cov_yg = sum_yg / n - mean_y * mean_g
    return mean_y, mean_g, var_y, cov_yg, n


def moments_from_masked(y: np.ndarray, g: np.ndarray) -> tuple[float, float, float, float, int]:
    """Single-pass compensated moments over already-masked pixels."""
    n, sum_y, sum_g, sum_yy, sum_yg = masked_sums(y, g)
    return moments_from_sums(n, sum_y, sum_g, sum_yy, sum_yg)


def fit_from_moments(
    mean_y: float,
    mean_g: float,
    var_y: float,
    cov_yg: float,
    n: int,
    bounds: CalibBounds,
) -> OracleTarget:
    """Assemble the clamped oracle target from pooled or per-image moments."""
    var_floor = max(var_y, bounds.eps)
    alpha_raw = cov_yg / var_floor
    beta_raw = mean_g - alpha_raw * mean_y
    alpha_ls = min(max(alpha_raw, bounds.eps), bounds.alpha_max)
    beta_ls = min(max(beta_raw, bounds.beta_min), bounds.beta_max)
    return OracleTarget(
        alpha_ls=float(alpha_ls),
        beta_ls=float(beta_ls),
        alpha_raw=float(alpha_raw),
        beta_raw=float(beta_raw),
        n_valid=int(n),
        degenerate=bool(n < 2 or var_y <= bounds.eps),
    )


def fit_oracle(Y: InverseDepthMap, D_gt: DepthMap, bounds: CalibBounds) -> OracleTarget:
    """Closed-form least-squares fit over the valid pixel set."""
    if Y.values.shape != D_gt.values.shape:
        raise DataError(
            f"shape mismatch: Y {Y.values.shape} vs D_gt {D_gt.values.shape}"
        )
    mask = D_gt.mask
    if not mask.any():
        raise DataError("fit_oracle: no valid pixels (ground truth all <= 0)")
    y = Y.values[mask]
    g = 1.0 / np.maximum(D_gt.values[mask], bounds.eps)
    return fit_from_moments(*moments_from_masked(y, g), bounds)


def oracle_targets(t: OracleTarget, bounds: CalibBounds) -> OracleTarget:
    """Fill theta_tilde_star, the unconstrained image of the clamped fit."""
    if t.alpha_ls <= 0.0:
        raise DomainError("oracle_targets requires alpha_ls > 0")
    tts = unmap_params(ConstrainedCalib(alpha=t.alpha_ls, beta=t.beta_ls), bounds)
    return replace(t, theta_tilde_star=tts)
