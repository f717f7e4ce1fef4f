"""Training, evaluation, baselines, and caption-sensitivity analysis.

The frozen-backbone protocol: only the envelope and selector heads learn.
Each iteration samples one caption embedding per image, runs the full
forward (envelope, selector, compose, map, recover), computes the online
closed-form oracle, takes batch-mean gradients of the unified objective,
and applies one AdamW step at the cosine learning rate. Input tensors are
never modified.

Evaluation is deterministic: the first embedding of each record is used,
per-image metrics are aggregated by unweighted mean, and a per-image
calibration table (predicted and oracle pairs) is emitted. With more than
one worker thread, per-image work runs in parallel but is always reduced in
record order, so results are bit-identical to the single-threaded run.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calib import (
    CalibBounds,
    ConstrainedCalib,
    DepthMap,
    InverseDepthMap,
    UnconstrainedCalib,
    compose,
    map_params,
    recover_metric,
    softplus,
)
from .errors import DataError, DomainError
from .heads import (
    EnvelopeHead,
    SelectorHead,
    envelope_forward,
    selector_forward,
)
from .losses import LossWeights, forward_sample, unified_loss
from .manifest import Manifest, Sample, load_sample
from .metrics import EvalConfig, MetricsReport, aggregate_metrics, compute_metrics
from .nn import AdamWState, OptimHyper, adamw_step, cosine_lr, grad_check
from .oracle import (
    fit_from_moments,
    fit_oracle,
    masked_sums,
    moments_from_sums,
    oracle_targets,
)

__all__ = [
    "TrainConfig",
    "Checkpoint",
    "EvalResult",
    "SensitivityResult",
    "train",
    "evaluate",
    "fit_global_baseline",
    "caption_sensitivity",
    "predict_calibration",
    "pipeline_grad_check",
]

logger = logging.getLogger(__name__)

FORWARD_MODES = ("full", "language", "vision")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr_max: float = 3e-5
    lr_min: float = 1e-5
    weights: LossWeights = field(default_factory=LossWeights)
    bounds: CalibBounds = field(default_factory=CalibBounds)
    seed: int = 0
    caption_sampling: str = "uniform-over-k"
    eval_every: int = 0  # validation interval in epochs; 0 disables
    hidden: int = 256
    trunk_depth: int = 3
    sel_depth: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    threads: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("TrainConfig requires positive epochs and batch_size")
        if self.caption_sampling != "uniform-over-k":
            raise DomainError("only uniform-over-k caption sampling is implemented")
        if self.threads < 1:
            raise DomainError("TrainConfig requires threads >= 1")


@dataclass(frozen=True)
class FeatureScaler:
    """Frozen per-dimension standardization of pooled visual features.

    Computed once from the training set and stored in the checkpoint so the
    selector sees unit-scale inputs at initialization regardless of the
    backbone's feature magnitudes; evaluation reuses the training statistics.
    """

    mean: np.ndarray
    std: np.ndarray  # floored, strictly positive

    @classmethod
    def fit(cls, feats: np.ndarray) -> "FeatureScaler":
        mean = feats.mean(axis=0)
        std = np.maximum(feats.std(axis=0), 1e-8)
        return cls(mean=mean, std=std)

    @classmethod
    def identity(cls, d: int) -> "FeatureScaler":
        return cls(mean=np.zeros(d), std=np.ones(d))

    def apply(self, s: np.ndarray) -> np.ndarray:
        return (s - self.mean) / self.std


@dataclass
class Checkpoint:
    env_head: EnvelopeHead
    sel_head: SelectorHead
    opt_state: AdamWState
    config: TrainConfig
    d_text: int
    d_feat: int
    log: list[dict]
    feat_scaler: FeatureScaler

    @property
    def bounds(self) -> CalibBounds:
        return self.config.bounds


@dataclass(frozen=True)
class EvalResult:
    report: MetricsReport
    rows: list[dict]  # id, alpha, beta, alpha_ls, beta_ls, abs_rel, rmse


@dataclass(frozen=True)
class SensitivityResult:
    mode: str
    rows: list[dict]  # per image: mean/std of ln alpha and of beta_tilde
    mean_ln_alpha: float
    std_ln_alpha: float  # dataset mean of per-image stds
    mean_beta_tilde: float
    std_beta_tilde: float


def _load_all(manifest: Manifest, threads: int = 1) -> list[Sample]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: load_sample(manifest, r), manifest.records))
    return [load_sample(manifest, rec) for rec in manifest.records]


def predict_calibration(
    env_head: EnvelopeHead,
    sel_head: SelectorHead,
    z: np.ndarray,
    s: np.ndarray,
    bounds: CalibBounds,
    mode: str = "full",
) -> tuple[UnconstrainedCalib, ConstrainedCalib]:
    """Forward both heads and map to (alpha, beta) under a forward mode.

    full: theta = mu + r * delta. language: theta = mu (the envelope center
    used directly). vision: theta = the raw selector output, which ignores
    the caption entirely.
    """
    if mode not in FORWARD_MODES:
        raise DomainError(f"unknown forward mode {mode!r}")
    env, _ = envelope_forward(z, env_head)
    offset, sel_tape = selector_forward(s, sel_head)
    if mode == "full":
        theta = compose(env, offset)
    elif mode == "language":
        theta = UnconstrainedCalib(float(env.mu[0]), float(env.mu[1]))
    else:
        theta = UnconstrainedCalib(float(sel_tape.raw[0]), float(sel_tape.raw[1]))
    return theta, map_params(theta, bounds)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(
    manifest: Manifest,
    cfg: TrainConfig,
    val_manifest: Manifest | None = None,
    eval_cfg: EvalConfig | None = None,
) -> Checkpoint:
    """Train the calibration heads; returns the final checkpoint.

    Samples with an empty valid-pixel set are skipped with a warning and
    counted per epoch. One random caption embedding per image per iteration.
    """
    d_text, d_feat = manifest.header.d_text, manifest.header.d_feat
    samples = _load_all(manifest, cfg.threads)
    n = len(samples)
    scaler = FeatureScaler.fit(np.stack([s.feat for s in samples]))

    ss = np.random.SeedSequence(cfg.seed)
    env_seed, sel_seed, shuffle_seed, caption_seed = ss.spawn(4)
    env_head = EnvelopeHead.create(
        d_text, cfg.bounds.r_max, env_seed, hidden=cfg.hidden, depth=cfg.trunk_depth
    )
    sel_head = SelectorHead.create(d_feat, sel_seed, hidden=cfg.hidden, depth=cfg.sel_depth)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    caption_rng = np.random.default_rng(caption_seed)

    params = env_head.params() + sel_head.params()
    n_env = len(env_head.params())
    state = AdamWState.zeros_like(params)
    hyper = OptimHyper(
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps_opt=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
        lr_max=cfg.lr_max,
        lr_min=cfg.lr_min,
        total_steps=max(1, cfg.epochs * ((n + cfg.batch_size - 1) // cfg.batch_size)),
    )

    def sample_pass(sample: Sample, caption_idx: int):
        z = sample.embeddings[caption_idx]
        s = scaler.apply(sample.feat)
        fw = forward_sample(env_head, sel_head, z, s, sample.y, sample.gt, cfg.bounds)
        target = oracle_targets(fit_oracle(sample.y, sample.gt, cfg.bounds), cfg.bounds)
        return unified_loss(fw, target, cfg.weights, env_head, sel_head, cfg.bounds)

    log: list[dict] = []
    completed_steps = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        sums = {"depth": 0.0, "env": 0.0, "radius": 0.0, "cal": 0.0, "total": 0.0}
        processed = 0
        skipped = 0
        lr = cosine_lr(completed_steps, hyper.total_steps, cfg.lr_max, cfg.lr_min)
        for start in range(0, n, cfg.batch_size):
            batch = [samples[i] for i in order[start : start + cfg.batch_size]]
            jobs = []
            for sample in batch:
                if not sample.gt.mask.any():
                    logger.warning("skipping sample %s: no valid pixels", sample.id)
                    skipped += 1
                    continue
                jobs.append((sample, int(caption_rng.integers(len(sample.embeddings)))))
            if not jobs:
                continue
            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    results = list(pool.map(lambda j: sample_pass(*j), jobs))
            else:
                results = [sample_pass(*j) for j in jobs]
            grad_acc = [np.zeros_like(p) for p in params]
            for bd, env_grads, sel_grads in results:  # index order: deterministic
                for k, g in enumerate(env_grads + sel_grads):
                    grad_acc[k] += g
                sums["depth"] += bd.depth
                sums["env"] += bd.env
                sums["radius"] += bd.radius
                sums["cal"] += bd.cal
                sums["total"] += bd.total
            m = len(results)
            grads = [g / m for g in grad_acc]
            lr = cosine_lr(completed_steps, hyper.total_steps, cfg.lr_max, cfg.lr_min)
            params, state = adamw_step(params, grads, state, hyper, lr)
            env_head.set_params(params[:n_env])
            sel_head.set_params(params[n_env:])
            completed_steps += 1
            processed += m
        entry = {
            "epoch": epoch,
            "depth": sums["depth"] / max(processed, 1),
            "env": sums["env"] / max(processed, 1),
            "radius": sums["radius"] / max(processed, 1),
            "cal": sums["cal"] / max(processed, 1),
            "total": sums["total"] / max(processed, 1),
            "lr": lr,
            "step": completed_steps - 1,
            "processed": processed,
            "skipped": skipped,
        }
        if (
            val_manifest is not None
            and cfg.eval_every > 0
            and (epoch + 1) % cfg.eval_every == 0
        ):
            ckpt = Checkpoint(env_head, sel_head, state, cfg, d_text, d_feat, log, scaler)
            val = evaluate(val_manifest, ckpt, eval_cfg or EvalConfig())
            entry["val_abs_rel"] = val.report.abs_rel
        log.append(entry)
        logger.info("epoch %s", entry)

    return Checkpoint(
        env_head=env_head,
        sel_head=sel_head,
        opt_state=state,
        config=cfg,
        d_text=d_text,
        d_feat=d_feat,
        log=log,
        feat_scaler=scaler,
    )


# ---------------------------------------------------------------------------
# Evaluation and baselines
# ---------------------------------------------------------------------------

def evaluate(
    manifest: Manifest,
    checkpoint: Checkpoint | None,
    eval_cfg: EvalConfig,
    use_oracle: bool = False,
    unclamped: bool = False,
    global_calib: ConstrainedCalib | None = None,
    mode: str = "full",
    threads: int = 1,
    bounds: CalibBounds | None = None,
) -> EvalResult:
    """Deterministic evaluation over a manifest.

    Exactly one calibration source must be chosen: a checkpoint (per-image
    predicted calibration from the record's first embedding), use_oracle
    (the per-image Linear Fit, raw values with unclamped=True), or a fixed
    global calibration. The per-image table always includes the oracle pair.
    Bounds default to the checkpoint's, then to the package defaults.
    """
    sources = sum([checkpoint is not None, use_oracle, global_calib is not None])
    if sources != 1:
        raise DataError("evaluate needs exactly one of checkpoint, use_oracle, global_calib")
    if checkpoint is not None and (
        checkpoint.d_text != manifest.header.d_text
        or checkpoint.d_feat != manifest.header.d_feat
    ):
        raise DataError(
            f"checkpoint dims (d_text={checkpoint.d_text}, d_feat={checkpoint.d_feat}) "
            f"do not match manifest header (d_text={manifest.header.d_text}, "
            f"d_feat={manifest.header.d_feat})"
        )
    if bounds is None:
        bounds = checkpoint.bounds if checkpoint is not None else CalibBounds()

    def eval_one(rec) -> tuple[MetricsReport, dict]:
        sample = load_sample(manifest, rec)
        fit = fit_oracle(sample.y, sample.gt, bounds)
        if use_oracle:
            if unclamped:
                if fit.alpha_raw <= 0.0:
                    raise DataError(
                        f"record {rec.id!r}: unclamped oracle scale is nonpositive"
                    )
                calib = ConstrainedCalib(fit.alpha_raw, fit.beta_raw)
            else:
                calib = ConstrainedCalib(fit.alpha_ls, fit.beta_ls)
        elif global_calib is not None:
            calib = global_calib
        else:
            _, calib = predict_calibration(
                checkpoint.env_head,
                checkpoint.sel_head,
                sample.embeddings[0],
                checkpoint.feat_scaler.apply(sample.feat),
                bounds,
                mode=mode,
            )
        dhat = recover_metric(sample.y, calib, bounds.eps)
        report = compute_metrics(dhat, sample.gt, eval_cfg)
        row = {
            "id": rec.id,
            "alpha": calib.alpha,
            "beta": calib.beta,
            "alpha_ls": fit.alpha_ls,
            "beta_ls": fit.beta_ls,
            "abs_rel": report.abs_rel,
            "rmse": report.rmse,
        }
        return report, row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(eval_one, manifest.records))
    else:
        results = [eval_one(rec) for rec in manifest.records]
    reports = [r for r, _ in results]
    rows = [row for _, row in results]
    return EvalResult(report=aggregate_metrics(reports), rows=rows)


def fit_global_baseline(manifest: Manifest, bounds: CalibBounds) -> ConstrainedCalib:
    """Single least-squares fit pooled over every valid pixel of every image."""
    import math

    n_total = 0
    parts_y: list[float] = []
    parts_g: list[float] = []
    parts_yy: list[float] = []
    parts_yg: list[float] = []
    for rec in manifest.records:
        sample = load_sample(manifest, rec)
        mask = sample.gt.mask
        if not mask.any():
            continue
        y = sample.y.values[mask]
        g = 1.0 / np.maximum(sample.gt.values[mask], bounds.eps)
        n, sy, sg, syy, syg = masked_sums(y, g)
        n_total += n
        parts_y.append(sy)
        parts_g.append(sg)
        parts_yy.append(syy)
        parts_yg.append(syg)
    if n_total == 0:
        raise DataError("fit_global_baseline: no valid pixels in the manifest")
    moments = moments_from_sums(
        n_total,
        math.fsum(parts_y),
        math.fsum(parts_g),
        math.fsum(parts_yy),
        math.fsum(parts_yg),
    )
    target = fit_from_moments(*moments, bounds)
    return ConstrainedCalib(target.alpha_ls, target.beta_ls)


def pipeline_grad_check(seed: int = 0, h: float = 1e-5, tol: float = 1e-4):
    """Check the full unified-loss gradient against central differences.

    Uses reduced-width heads and a small planted sample so every scalar
    parameter can be probed; the code path (both heads, compose, map,
    recover, clamps) is exactly the training one.
    """
    rng = np.random.default_rng(seed)
    bounds = CalibBounds()
    d_t, d_s, hidden = 6, 5, 8
    z = rng.standard_normal(d_t)
    s = rng.standard_normal(d_s)
    yv = rng.uniform(0.05, 1.0, size=(8, 8))
    gt = 1.0 / (1.6 * yv + 0.5) * np.exp(0.03 * rng.standard_normal((8, 8)))
    gt[rng.random((8, 8)) < 0.05] = 0.0
    Y, D = InverseDepthMap(values=yv), DepthMap(values=gt)
    target = oracle_targets(fit_oracle(Y, D, bounds), bounds)
    weights = LossWeights()

    def make_heads():
        env = EnvelopeHead.create(d_t, bounds.r_max, seed=seed, hidden=hidden)
        sel = SelectorHead.create(d_s, seed=seed + 1, hidden=hidden)
        # output layers are zero at creation; fill them so gradients flow
        # through every parameter of the checked pipeline
        fill = np.random.default_rng(seed + 2)
        for layer in (env.head_mu, env.head_r, sel.net.layers[-1]):
            layer.weight[:] = fill.normal(0.0, 0.3, size=layer.weight.shape)
            layer.bias[:] = fill.normal(0.0, 0.3, size=layer.bias.shape)
        return env, sel

    env0, sel0 = make_heads()
    n_env = len(env0.params())

    def fn(params):
        env, sel = make_heads()
        env.set_params([p.copy() for p in params[:n_env]])
        sel.set_params([p.copy() for p in params[n_env:]])
        fw = forward_sample(env, sel, z, s, Y, D, bounds)
        bd, eg, sg = unified_loss(fw, target, weights, env, sel, bounds)
        return bd.total, eg + sg

    return grad_check(fn, env0.params() + sel0.params(), h=h, tol=tol)


def caption_sensitivity(
    manifest: Manifest,
    checkpoint: Checkpoint,
    mode: str = "full",
    threads: int = 1,
) -> SensitivityResult:
    """Spread of predicted ln(alpha) and beta_tilde across a record's captions.

    Vision features stay fixed per image; only the caption embedding varies.
    Per-image population std; dataset numbers are means over images.
    """
    if any(len(rec.text_emb_paths) < 2 for rec in manifest.records):
        raise DataError("caption_sensitivity requires K >= 2 embeddings per record")
    bounds = checkpoint.bounds

    def pop_std(arr: np.ndarray) -> float:
        # identical predictions must report exactly 0, not a mean-rounding ulp
        if np.all(arr == arr[0]):
            return 0.0
        return float(arr.std())

    def one(rec) -> dict:
        sample = load_sample(manifest, rec)
        ln_alphas = []
        beta_tildes = []
        s = checkpoint.feat_scaler.apply(sample.feat)
        for k in range(sample.embeddings.shape[0]):
            theta, _ = predict_calibration(
                checkpoint.env_head,
                checkpoint.sel_head,
                sample.embeddings[k],
                s,
                bounds,
                mode=mode,
            )
            ln_alphas.append(np.log(softplus(theta.alpha_tilde)))
            beta_tildes.append(theta.beta_tilde)
        la = np.array(ln_alphas)
        bt = np.array(beta_tildes)
        return {
            "id": rec.id,
            "mean_ln_alpha": float(la.mean()),
            "std_ln_alpha": pop_std(la),
            "mean_beta_tilde": float(bt.mean()),
            "std_beta_tilde": pop_std(bt),
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, manifest.records))
    else:
        rows = [one(rec) for rec in manifest.records]
    return SensitivityResult(
        mode=mode,
        rows=rows,
        mean_ln_alpha=float(np.mean([r["mean_ln_alpha"] for r in rows])),
        std_ln_alpha=float(np.mean([r["std_ln_alpha"] for r in rows])),
        mean_beta_tilde=float(np.mean([r["mean_beta_tilde"] for r in rows])),
        std_beta_tilde=float(np.mean([r["std_beta_tilde"] for r in rows])),
    )
