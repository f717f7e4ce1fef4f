"""Loss terms and the unified training objective.

    L = L_depth + lambda_env * L_env + lambda_r * ||r||_1
               + lambda_cal * ||(alpha, beta) - sg(theta*)||_1

with L_depth the masked mean absolute depth error, L_env the per-coordinate
softplus hinge softplus(|theta_tilde*_k - mu_k| - r_k), and sg() meaning the
oracle targets are constants: no gradient ever reaches them.

unified_loss runs the exact backward pass for one sample, routing gradients
through metric recovery, the constrained parameter map, and the envelope
composition into both heads. Deterministic subgradient conventions: L1 terms
at exact zero residual, the metric-recovery floor, and the radius clamp all
contribute 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calib import (
    CalibBounds,
    ConstrainedCalib,
    DepthMap,
    Envelope,
    InverseDepthMap,
    UnconstrainedCalib,
    compose,
    map_params,
    sigmoid,
    softplus,
)
from .errors import DataError, DomainError
from .heads import (
    EnvelopeHead,
    EnvelopeTape,
    SelectorHead,
    SelectorTape,
    envelope_backward,
    envelope_forward,
    selector_backward,
    selector_forward,
)
from .oracle import OracleTarget

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "SampleForward",
    "loss_depth",
    "loss_env",
    "loss_radius",
    "loss_cal",
    "forward_sample",
    "unified_loss",
]


@dataclass(frozen=True)
class LossWeights:
    lambda_env: float = 0.1
    lambda_r: float = 1e-2
    lambda_cal: float = 1.0

    def __post_init__(self) -> None:
        if self.lambda_env < 0.0 or self.lambda_r < 0.0 or self.lambda_cal < 0.0:
            raise DomainError("LossWeights must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    depth: float
    env: float
    radius: float
    cal: float
    total: float


def _sign0(x):
    # L1 subgradient with sign(0) = 0
    return np.sign(x)


def loss_depth(Dhat: DepthMap, Dgt: DepthMap) -> float:
    """Mean absolute error over the valid pixel set."""
    if Dhat.values.shape != Dgt.values.shape:
        raise DataError("loss_depth: shape mismatch")
    mask = Dgt.mask
    if not mask.any():
        raise DataError("loss_depth: no valid pixels")
    return float(np.mean(np.abs(Dhat.values[mask] - Dgt.values[mask])))


def loss_env(theta_star_tilde: UnconstrainedCalib, env: Envelope) -> float:
    """Sum over coordinates of softplus(|theta_tilde*_k - mu_k| - r_k)."""
    gap = np.abs(theta_star_tilde.as_array() - env.mu) - env.r
    return float(np.sum(softplus(gap)))


def loss_radius(env: Envelope) -> float:
    """L1 norm of the (positive) radius vector."""
    return float(np.sum(env.r))


def loss_cal(calib: ConstrainedCalib, target: OracleTarget) -> float:
    """L1 distance between the prediction and the clamped oracle pair."""
    return float(abs(calib.alpha - target.alpha_ls) + abs(calib.beta - target.beta_ls))


# ---------------------------------------------------------------------------
# One-sample forward state and the unified backward
# ---------------------------------------------------------------------------

@dataclass
class SampleForward:
    """Everything the unified backward needs from one sample's forward pass."""

    y_values: np.ndarray
    gt_values: np.ndarray
    mask: np.ndarray
    env: Envelope
    env_tape: EnvelopeTape
    offset: np.ndarray  # delta vector
    sel_tape: SelectorTape
    theta_tilde: UnconstrainedCalib
    calib: ConstrainedCalib
    denom: np.ndarray  # alpha * Y + beta, before the floor
    denom_floored: np.ndarray
    dhat: np.ndarray


def forward_sample(
    env_head: EnvelopeHead,
    sel_head: SelectorHead,
    z: np.ndarray,
    s: np.ndarray,
    Y: InverseDepthMap,
    Dgt: DepthMap,
    bounds: CalibBounds,
) -> SampleForward:
    """Full per-sample forward: heads -> compose -> map -> recover."""
    env, env_tape = envelope_forward(z, env_head)
    offset, sel_tape = selector_forward(s, sel_head)
    theta_tilde = compose(env, offset)
    calib = map_params(theta_tilde, bounds)
    denom = calib.alpha * Y.values + calib.beta
    denom_floored = np.maximum(denom, bounds.eps)
    dhat = 1.0 / denom_floored
    return SampleForward(
        y_values=Y.values,
        gt_values=Dgt.values,
        mask=Dgt.mask,
        env=env,
        env_tape=env_tape,
        offset=offset.delta,
        sel_tape=sel_tape,
        theta_tilde=theta_tilde,
        calib=calib,
        denom=denom,
        denom_floored=denom_floored,
        dhat=dhat,
    )


def unified_loss(
    fw: SampleForward,
    target: OracleTarget,
    weights: LossWeights,
    env_head: EnvelopeHead,
    sel_head: SelectorHead,
    bounds: CalibBounds,
) -> tuple[LossBreakdown, list[np.ndarray], list[np.ndarray]]:
    """Unified objective and exact gradients for both heads.

    Returns (breakdown, envelope-head gradients, selector-head gradients) in
    the heads' params() order. The oracle target (both the clamped pair and
    its unconstrained image) is treated as a constant throughout.
    """
    if target.theta_tilde_star is None:
        raise DataError("unified_loss needs a target with theta_tilde_star filled")
    mask = fw.mask
    if not mask.any():
        raise DataError("unified_loss: no valid pixels")
    n_valid = int(mask.sum())

    alpha, beta = fw.calib.alpha, fw.calib.beta
    mu, r = fw.env.mu, fw.env.r
    tts = target.theta_tilde_star.as_array()

    # ---- values -----------------------------------------------------------
    resid = fw.dhat[mask] - fw.gt_values[mask]
    l_depth = float(np.mean(np.abs(resid)))
    gap = np.abs(tts - mu) - r
    l_env = float(np.sum(softplus(gap)))
    l_rad = float(np.sum(r))
    l_cal = float(abs(alpha - target.alpha_ls) + abs(beta - target.beta_ls))
    total = (
        l_depth
        + weights.lambda_env * l_env
        + weights.lambda_r * l_rad
        + weights.lambda_cal * l_cal
    )
    breakdown = LossBreakdown(
        depth=l_depth, env=l_env, radius=l_rad, cal=l_cal, total=total
    )

    # ---- backward: depth + cal into (alpha, beta) --------------------------
    # dL_depth/ddhat = sign(resid)/n on the mask; dhat = 1/max(denom, eps)
    d_dhat = _sign0(resid) / n_valid
    floor_inactive = fw.denom[mask] > bounds.eps
    d_denom = d_dhat * (-1.0 / (fw.denom_floored[mask] ** 2)) * floor_inactive
    d_alpha = float(np.dot(d_denom, fw.y_values[mask]))
    d_beta = float(np.sum(d_denom))
    d_alpha += weights.lambda_cal * float(_sign0(alpha - target.alpha_ls))
    d_beta += weights.lambda_cal * float(_sign0(beta - target.beta_ls))

    # ---- through the constrained parameter map ------------------------------
    at, bt = fw.theta_tilde.alpha_tilde, fw.theta_tilde.beta_tilde
    d_at = d_alpha * sigmoid(at)  # softplus' = sigmoid
    sig_bt = sigmoid(bt)
    d_bt = d_beta * (bounds.beta_max - bounds.beta_min) * sig_bt * (1.0 - sig_bt)
    d_theta = np.array([d_at, d_bt])

    # ---- compose: theta = mu + r * delta ------------------------------------
    d_mu = d_theta.copy()
    d_r = d_theta * fw.offset
    d_delta = d_theta * r

    # ---- envelope penalty and radius penalty into (mu, r) -------------------
    hinge = sigmoid(gap)  # softplus'
    d_mu += weights.lambda_env * hinge * (-_sign0(tts - mu))
    d_r += weights.lambda_env * (-hinge)
    d_r += weights.lambda_r

    env_grads, _ = envelope_backward(env_head, fw.env_tape, d_mu, d_r)
    sel_grads, _ = selector_backward(sel_head, fw.sel_tape, d_delta)
    return breakdown, env_grads, sel_grads
