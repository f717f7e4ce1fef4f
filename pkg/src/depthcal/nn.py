"""Minimal dense network machinery with hand-derived gradients.

Covers exactly what the calibration heads need: stacked linear layers with
ReLU between them, reverse-mode gradients from a forward tape, decoupled
weight decay AdamW, a cosine learning-rate schedule, and a central
finite-difference gradient checker. Everything is float64 and deterministic
given a seed. ReLU's subgradient at exactly 0 is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "DenseLayer",
    "MLP",
    "Tape",
    "AdamWState",
    "OptimHyper",
    "init_mlp",
    "init_dense",
    "mlp_forward",
    "mlp_backward",
    "adamw_step",
    "cosine_lr",
    "grad_check",
    "GradCheckReport",
]


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise DataError("DenseLayer expects a 2-D weight and 1-D bias")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise DataError("DenseLayer weight/bias output dims differ")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise DomainError("DenseLayer parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class MLP:
    """Linear layers with ReLU between them; the final layer is linear."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise DataError("MLP needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise DataError("MLP layer dimensions do not chain")

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out


@dataclass
class Tape:
    """Per-layer inputs and pre-activations cached by mlp_forward."""

    mlp_id: int
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)


def init_dense(rng: np.random.Generator, d_in: int, d_out: int) -> DenseLayer:
    """Uniform +-sqrt(6/fan_in) weights, zero bias."""
    lim = np.sqrt(6.0 / d_in)
    w = rng.uniform(-lim, lim, size=(d_out, d_in))
    return DenseLayer(weight=w, bias=np.zeros(d_out))


def init_mlp(dims: list[int], seed: int) -> MLP:
    """Seeded deterministic initialization; same seed gives identical bytes."""
    if len(dims) < 2:
        raise DataError("init_mlp needs at least input and output widths")
    rng = np.random.default_rng(seed)
    return MLP(layers=[init_dense(rng, a, b) for a, b in zip(dims, dims[1:])])


def mlp_forward(mlp: MLP, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mlp.d_in,):
        raise DataError(f"mlp_forward expects input of shape ({mlp.d_in},), got {x.shape}")
    tape = Tape(mlp_id=id(mlp))
    h = x
    last = len(mlp.layers) - 1
    for i, layer in enumerate(mlp.layers):
        tape.inputs.append(h)
        z = layer.weight @ h + layer.bias
        tape.preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, tape


def mlp_backward(
    mlp: MLP, tape: Tape, dy: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact reverse-mode gradients of y . dy.

    Returns per-layer (dW, db) in layer order plus the input gradient.
    """
    if tape.mlp_id != id(mlp) or len(tape.inputs) != len(mlp.layers):
        raise DataError("mlp_backward: tape does not match this MLP")
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != (mlp.d_out,):
        raise DataError(f"mlp_backward expects dy of shape ({mlp.d_out},), got {dy.shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(mlp.layers)  # type: ignore[list-item]
    d = dy
    last = len(mlp.layers) - 1
    for i in range(last, -1, -1):
        if i != last:
            d = d * (tape.preacts[i] > 0.0)  # ReLU', 0 at exactly 0
        grads[i] = (np.outer(d, tape.inputs[i]), d.copy())
        d = mlp.layers[i].weight.T @ d
    return grads, d


# ---------------------------------------------------------------------------
# AdamW and learning-rate schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    weight_decay: float = 0.01
    lr_max: float = 3e-5
    lr_min: float = 1e-5
    total_steps: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise DomainError("OptimHyper requires betas in (0, 1)")
        if self.eps_opt <= 0.0 or self.weight_decay < 0.0:
            raise DomainError("OptimHyper requires eps_opt > 0 and weight_decay >= 0")
        if self.lr_min > self.lr_max:
            raise DomainError("OptimHyper requires lr_min <= lr_max")
        if self.total_steps <= 0:
            raise DomainError("OptimHyper requires total_steps > 0")


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamWState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adamw_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamWState,
    hyper: OptimHyper,
    lr: float,
) -> tuple[list[np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update; returns new params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DataError("adamw_step: params, grads, and state lengths differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DataError(f"adamw_step: shape mismatch {p.shape} vs {g.shape}")
    t = state.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        step = m_hat / (np.sqrt(v_hat) + hyper.eps_opt) + hyper.weight_decay * p
        new_params.append(p - lr * step)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamWState(m=new_m, v=new_v, t=t)


def cosine_lr(step: int, total: int, lr_max: float, lr_min: float) -> float:
    """Cosine decay from lr_max at step 0 to lr_min at step total."""
    if total <= 0:
        raise DomainError("cosine_lr requires total > 0")
    if step < 0:
        raise DomainError("cosine_lr requires step >= 0")
    if step == 0:  # endpoints exact despite float cancellation in the blend
        return lr_max
    if step >= total:
        return lr_min
    return float(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * step / total)))


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    n_params: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def grad_check(fn, params: list[np.ndarray], h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    fn(params) must return (loss, grads) with grads shaped like params; the
    finite-difference probe uses only the loss. Relative error per scalar is
    |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    if h <= 0.0:
        raise DomainError("grad_check requires h > 0")
    loss0, grads = fn(params)
    if not np.isfinite(loss0):
        raise DomainError("grad_check: loss is not finite")
    max_rel = 0.0
    n = 0
    work = [p.copy() for p in params]
    for k, p in enumerate(work):
        flat = p.reshape(-1)
        gflat = np.asarray(grads[k]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = fn(work)[0]
            flat[j] = orig - h
            fm = fn(work)[0]
            flat[j] = orig
            fd = (fp - fm) / (2.0 * h)
            rel = abs(gflat[j] - fd) / max(abs(gflat[j]), abs(fd), 1e-8)
            max_rel = max(max_rel, float(rel))
            n += 1
    return GradCheckReport(max_rel_err=max_rel, n_params=n, tol=tol)
