"""Caption-conditioned envelope head and vision-conditioned selector.

The envelope head maps a frozen text embedding z through a ReLU MLP trunk to
two linear outputs: the envelope center mu and, through a softplus clamped at
r_max, the radius r. The selector pools a 4-scale feature pyramid by global
average pooling, concatenates, and maps through its own MLP to a tanh-bounded
offset delta. Backward passes are exact reverse-mode; the r clamp and any
ReLU at exactly 0 carry zero gradient.

Initialization: hidden layers draw uniform +-sqrt(6/fan_in) weights with
zero biases; the output layers (mu, r, and the selector's last layer) start
at zero so every head begins at the neutral calibration (mu = 0,
r = softplus(0), delta = 0) and grows toward its targets. Output layers the
size of the calibration would otherwise dominate the small learning rates
used under the frozen-backbone protocol with their initialization noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calib import Envelope, Offset, sigmoid, softplus
from .errors import DataError
from .nn import MLP, DenseLayer, Tape, init_dense, mlp_backward, mlp_forward

__all__ = [
    "FeaturePyramid",
    "pool_features",
    "EnvelopeHead",
    "EnvelopeTape",
    "SelectorHead",
    "SelectorTape",
    "envelope_forward",
    "envelope_backward",
    "selector_forward",
    "selector_backward",
]

N_PYRAMID_LEVELS = 4


@dataclass(frozen=True)
class FeaturePyramid:
    """Exactly 4 levels, each a (C, H, W) map or a pre-pooled (C,) vector."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.levels) != N_PYRAMID_LEVELS:
            raise DataError(
                f"FeaturePyramid needs {N_PYRAMID_LEVELS} levels, got {len(self.levels)}"
            )
        for i, lvl in enumerate(self.levels):
            if lvl.ndim not in (1, 3):
                raise DataError(f"pyramid level {i} must be (C,H,W) or (C,), got {lvl.shape}")
            if lvl.shape[0] < 1:
                raise DataError(f"pyramid level {i} has no channels")


def pool_features(p: FeaturePyramid) -> np.ndarray:
    """Per-channel spatial mean of each level, concatenated in level order.

    Pre-pooled (C,) levels pass through unchanged.
    """
    pooled = [
        lvl if lvl.ndim == 1 else lvl.mean(axis=(1, 2)) for lvl in p.levels
    ]
    return np.concatenate(pooled).astype(np.float64)


# ---------------------------------------------------------------------------
# Envelope head
# ---------------------------------------------------------------------------

@dataclass
class EnvelopeHead:
    trunk: MLP  # d_t -> 256 -> 256 -> 256, ReLU after every layer
    head_mu: DenseLayer  # 256 -> 2
    head_r: DenseLayer  # 256 -> 2
    r_max: float

    def __post_init__(self) -> None:
        if self.head_mu.d_in != self.trunk.d_out or self.head_r.d_in != self.trunk.d_out:
            raise DataError("EnvelopeHead output heads do not match trunk width")
        if self.head_mu.d_out != 2 or self.head_r.d_out != 2:
            raise DataError("EnvelopeHead output heads must produce 2-vectors")
        if self.r_max <= 0.0:
            raise DataError("EnvelopeHead requires r_max > 0")

    @property
    def d_in(self) -> int:
        return self.trunk.d_in

    @classmethod
    def create(
        cls,
        d_text: int,
        r_max: float,
        seed,  # int or numpy SeedSequence
        hidden: int = 256,
        depth: int = 3,
    ) -> "EnvelopeHead":
        """Random trunk, zero output heads: the head starts at the neutral
        calibration mu = 0, r = softplus(0) and grows toward the targets."""
        rng = np.random.default_rng(seed)
        dims = [d_text] + [hidden] * depth
        trunk = MLP(layers=[init_dense(rng, a, b) for a, b in zip(dims, dims[1:])])
        head_mu = init_dense(rng, hidden, 2)
        head_r = init_dense(rng, hidden, 2)
        head_mu.weight[:] = 0.0
        head_r.weight[:] = 0.0
        return cls(trunk=trunk, head_mu=head_mu, head_r=head_r, r_max=r_max)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.trunk.layers:
            out.extend([layer.weight, layer.bias])
        out.extend([self.head_mu.weight, self.head_mu.bias])
        out.extend([self.head_r.weight, self.head_r.bias])
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        expected = 2 * len(self.trunk.layers) + 4
        if len(params) != expected:
            raise DataError(f"EnvelopeHead expects {expected} parameter arrays")
        for i, layer in enumerate(self.trunk.layers):
            layer.weight, layer.bias = params[2 * i], params[2 * i + 1]
        k = 2 * len(self.trunk.layers)
        self.head_mu.weight, self.head_mu.bias = params[k], params[k + 1]
        self.head_r.weight, self.head_r.bias = params[k + 2], params[k + 3]


@dataclass
class EnvelopeTape:
    trunk_tape: Tape
    trunk_out: np.ndarray  # pre-activation of the trunk's final ReLU
    h: np.ndarray  # post-ReLU trunk feature
    r_pre: np.ndarray  # softplus input
    clamp_active: np.ndarray  # where min(softplus, r_max) chose r_max


def envelope_forward(z: np.ndarray, head: EnvelopeHead) -> tuple[Envelope, EnvelopeTape]:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (head.d_in,):
        raise DataError(f"envelope_forward expects z of shape ({head.d_in},), got {z.shape}")
    trunk_out, trunk_tape = mlp_forward(head.trunk, z)
    h = np.maximum(trunk_out, 0.0)
    mu = head.head_mu.weight @ h + head.head_mu.bias
    r_pre = head.head_r.weight @ h + head.head_r.bias
    r_soft = softplus(r_pre)
    clamp_active = r_soft >= head.r_max
    r = np.minimum(r_soft, head.r_max)
    tape = EnvelopeTape(
        trunk_tape=trunk_tape,
        trunk_out=trunk_out,
        h=h,
        r_pre=r_pre,
        clamp_active=clamp_active,
    )
    return Envelope(mu=mu, r=r), tape


def envelope_backward(
    head: EnvelopeHead,
    tape: EnvelopeTape,
    d_mu: np.ndarray,
    d_r: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients w.r.t. every head parameter (params() order) plus dz.

    d_r is taken w.r.t. the clamped radius; the clamped region passes no
    gradient.
    """
    d_r_pre = np.where(tape.clamp_active, 0.0, d_r) * sigmoid(tape.r_pre)
    d_w_mu = np.outer(d_mu, tape.h)
    d_b_mu = d_mu.copy()
    d_w_r = np.outer(d_r_pre, tape.h)
    d_b_r = d_r_pre.copy()
    dh = head.head_mu.weight.T @ d_mu + head.head_r.weight.T @ d_r_pre
    d_trunk_out = dh * (tape.trunk_out > 0.0)
    trunk_grads, dz = mlp_backward(head.trunk, tape.trunk_tape, d_trunk_out)
    flat: list[np.ndarray] = []
    for dW, db in trunk_grads:
        flat.extend([dW, db])
    flat.extend([d_w_mu, d_b_mu, d_w_r, d_b_r])
    return flat, dz


# ---------------------------------------------------------------------------
# Selector head
# ---------------------------------------------------------------------------

@dataclass
class SelectorHead:
    net: MLP  # d_s -> 256 -> 256 -> 2

    def __post_init__(self) -> None:
        if self.net.d_out != 2:
            raise DataError("SelectorHead must output a 2-vector")

    @property
    def d_in(self) -> int:
        return self.net.d_in

    @classmethod
    def create(cls, d_feat: int, seed, hidden: int = 256, depth: int = 3) -> "SelectorHead":
        """Random hidden layers, zero output layer: delta starts at 0."""
        rng = np.random.default_rng(seed)
        dims = [d_feat] + [hidden] * (depth - 1) + [2]
        layers = [init_dense(rng, a, b) for a, b in zip(dims, dims[1:])]
        layers[-1].weight[:] = 0.0
        return cls(net=MLP(layers=layers))

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.net.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.net.layers):
            raise DataError(f"SelectorHead expects {2 * len(self.net.layers)} parameter arrays")
        for i, layer in enumerate(self.net.layers):
            layer.weight, layer.bias = params[2 * i], params[2 * i + 1]


@dataclass
class SelectorTape:
    net_tape: Tape
    raw: np.ndarray  # g_sel output before tanh
    delta: np.ndarray


def selector_forward(s: np.ndarray, head: SelectorHead) -> tuple[Offset, SelectorTape]:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (head.d_in,):
        raise DataError(f"selector_forward expects s of shape ({head.d_in},), got {s.shape}")
    raw, net_tape = mlp_forward(head.net, s)
    delta = np.tanh(raw)
    return Offset(delta=delta), SelectorTape(net_tape=net_tape, raw=raw, delta=delta)


def selector_backward(
    head: SelectorHead,
    tape: SelectorTape,
    d_delta: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients w.r.t. selector parameters (params() order) plus ds."""
    d_raw = d_delta * (1.0 - tape.delta * tape.delta)
    grads, ds = mlp_backward(head.net, tape.net_tape, d_raw)
    flat: list[np.ndarray] = []
    for dW, db in grads:
        flat.extend([dW, db])
    return flat, ds
