"""Affine calibration in inverse depth.

Numerically stable scalar transforms, the constrained parameter mapping,
envelope/offset composition, and metric depth recovery:

    alpha = softplus(alpha_tilde)
    beta  = beta_min + (beta_max - beta_min) * sigmoid(beta_tilde)
    D(x)  = 1 / max(alpha * Y(x) + beta, eps)

All arithmetic is float64. Transforms accept scalars or arrays and are
overflow-free over the full unconstrained parameter range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "CalibBounds",
    "UnconstrainedCalib",
    "ConstrainedCalib",
    "Envelope",
    "Offset",
    "InverseDepthMap",
    "DepthMap",
    "softplus",
    "softplus_inv",
    "sigmoid",
    "logit",
    "map_params",
    "unmap_params",
    "compose",
    "recover_metric",
]


# ---------------------------------------------------------------------------
# Stable scalar transforms
# ---------------------------------------------------------------------------

def softplus(x):
    """log(1 + e^x), overflow-free for any float64 input."""
    x = np.asarray(x, dtype=np.float64)
    _require_finite(x, "softplus input")
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def softplus_inv(y):
    """Inverse of softplus; requires y > 0.

    Uses log(expm1(y)) for small y and y + log(-expm1(-y)) for large y so
    neither branch overflows.
    """
    y = np.asarray(y, dtype=np.float64)
    _require_finite(y, "softplus_inv input")
    if np.any(y <= 0.0):
        raise DomainError("softplus_inv requires strictly positive input")
    small = y < 20.0
    out = np.where(
        small,
        np.log(np.expm1(np.where(small, y, 1.0))),
        y + np.log(-np.expm1(-y)),
    )
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """1 / (1 + e^-x), evaluated on the non-overflowing branch per sign."""
    x = np.asarray(x, dtype=np.float64)
    _require_finite(x, "sigmoid input")
    pos = x >= 0.0
    ex = np.exp(np.where(pos, -x, x))
    out = np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return float(out) if out.ndim == 0 else out


def logit(p):
    """Inverse of sigmoid; requires p in the open interval (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    _require_finite(p, "logit input")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DomainError("logit requires input in the open interval (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def _require_finite(arr, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibBounds:
    """Fixed constants of the calibration space.

    beta_min/beta_max bound the inverse-depth shift (1/m), alpha_max clamps
    the fitted scale, eps is the shared numerical floor, and r_max caps the
    envelope radius in unconstrained space.
    """

    beta_min: float = 0.0
    beta_max: float = 2.0
    alpha_max: float = 100.0
    eps: float = 1e-6
    r_max: float = 3.0

    def __post_init__(self) -> None:
        if not self.beta_min < self.beta_max:
            raise DomainError("CalibBounds requires beta_min < beta_max")
        if not 0.0 < self.eps < 1.0:
            raise DomainError("CalibBounds requires 0 < eps < 1")
        if not self.alpha_max > self.eps:
            raise DomainError("CalibBounds requires alpha_max > eps")
        if not self.r_max > 0.0:
            raise DomainError("CalibBounds requires r_max > 0")


@dataclass(frozen=True)
class UnconstrainedCalib:
    """Unconstrained 2-vector (alpha_tilde, beta_tilde)."""

    alpha_tilde: float
    beta_tilde: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha_tilde) and np.isfinite(self.beta_tilde)):
            raise DomainError("UnconstrainedCalib components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_tilde, self.beta_tilde], dtype=np.float64)


@dataclass(frozen=True)
class ConstrainedCalib:
    """Positive scale alpha (unitless) and shift beta (1/m)."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise DomainError("ConstrainedCalib components must be finite")
        if self.alpha <= 0.0:
            raise DomainError("ConstrainedCalib requires alpha > 0")


@dataclass(frozen=True)
class Envelope:
    """Language-predicted center mu and radius r (both 2-vectors, r > 0)."""

    mu: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        if mu.shape != (2,) or r.shape != (2,):
            raise DomainError("Envelope mu and r must be 2-vectors")
        _require_finite(mu, "Envelope mu")
        _require_finite(r, "Envelope r")
        if np.any(r <= 0.0):
            raise DomainError("Envelope radius must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class Offset:
    """Vision-predicted offset delta, componentwise in [-1, 1]."""

    delta: np.ndarray

    def __post_init__(self) -> None:
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.shape != (2,):
            raise DomainError("Offset delta must be a 2-vector")
        _require_finite(delta, "Offset delta")
        if np.any(np.abs(delta) > 1.0):
            raise DomainError("Offset delta components must lie in [-1, 1]")
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class InverseDepthMap:
    """H x W grid of inverse relative depth (unitless, finite)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("InverseDepthMap values must be 2-D")
        _require_finite(values, "InverseDepthMap values")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DepthMap:
    """H x W grid of metric depth in meters.

    The validity mask is derived, never stored: a pixel is valid exactly
    when its value is strictly positive.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("DepthMap values must be 2-D")
        _require_finite(values, "DepthMap values")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.values > 0.0


# ---------------------------------------------------------------------------
# Parameter mapping, composition, recovery
# ---------------------------------------------------------------------------

def map_params(theta_tilde: UnconstrainedCalib, bounds: CalibBounds) -> ConstrainedCalib:
    """Map the unconstrained pair to (alpha, beta).

    alpha = softplus(alpha_tilde) is positive; beta lies strictly inside
    (beta_min, beta_max) for finite beta_tilde.
    """
    alpha = softplus(theta_tilde.alpha_tilde)
    beta = bounds.beta_min + (bounds.beta_max - bounds.beta_min) * sigmoid(
        theta_tilde.beta_tilde
    )
    return ConstrainedCalib(alpha=alpha, beta=beta)


def unmap_params(calib: ConstrainedCalib, bounds: CalibBounds) -> UnconstrainedCalib:
    """Invert map_params.

    The normalized shift p = (beta - beta_min) / (beta_max - beta_min) is
    clamped to [eps, 1 - eps] before the logit so saturated shifts stay
    finite.
    """
    if calib.alpha <= 0.0:
        raise DomainError("unmap_params requires alpha > 0")
    alpha_tilde = softplus_inv(calib.alpha)
    p = (calib.beta - bounds.beta_min) / (bounds.beta_max - bounds.beta_min)
    p = min(max(p, bounds.eps), 1.0 - bounds.eps)
    return UnconstrainedCalib(alpha_tilde=alpha_tilde, beta_tilde=logit(p))


def compose(env: Envelope, offset: Offset) -> UnconstrainedCalib:
    """theta_tilde = mu + r * delta (elementwise)."""
    theta = env.mu + env.r * offset.delta
    return UnconstrainedCalib(alpha_tilde=float(theta[0]), beta_tilde=float(theta[1]))


def recover_metric(Y: InverseDepthMap, calib: ConstrainedCalib, eps: float) -> DepthMap:
    """Metric depth D(x) = 1 / max(alpha * Y(x) + beta, eps).

    The floor guarantees every output lies in (0, 1/eps].
    """
    if eps <= 0.0:
        raise DomainError("recover_metric requires eps > 0")
    denom = np.maximum(calib.alpha * Y.values + calib.beta, eps)
    return DepthMap(values=1.0 / denom)
