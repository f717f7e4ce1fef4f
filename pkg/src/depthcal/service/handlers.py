"""Service handlers: one function per workflow.

Each handler takes a request model, does the work through the core library,
writes any artifacts (tensor files, checkpoints, reports, tables) on the
local filesystem, and returns a response model. DataError / DomainError
propagate to the caller: the app maps them to HTTP 400, the CLI to exit
code 2. Report and table files are written deterministically (sorted JSON
keys, repr-formatted floats, no timestamps).
"""

from __future__ import annotations

import json
from pathlib import Path

from .. import __version__
from ..calib import CalibBounds
from ..errors import DataError
from ..losses import LossWeights
from ..manifest import load_manifest, load_sample
from ..metrics import EvalConfig
from ..oracle import fit_oracle, oracle_targets
from ..synthetic import SynthConfig, gen_synthetic
from ..trainer import (
    TrainConfig,
    caption_sensitivity,
    evaluate,
    fit_global_baseline,
    pipeline_grad_check,
    train,
)
from ..checkpoint import load_checkpoint, save_checkpoint
from .schemas import (
    CalibBoundsModel,
    EvalRequest,
    EvalResponse,
    GlobalFitRequest,
    GlobalFitResponse,
    GradCheckRequest,
    GradCheckResponse,
    HealthResponse,
    OracleRequest,
    OracleResponse,
    SensitivityModeStats,
    SensitivityRequest,
    SensitivityResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
)

FULL_SCALE_D_TEXT = 512
FULL_SCALE_D_FEAT = 1024


def _bounds(model: CalibBoundsModel) -> CalibBounds:
    return CalibBounds(**model.model_dump())


def _write_csv(path, header: list[str], rows: list[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in header))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def synth(req: SynthRequest) -> SynthResponse:
    d_text = FULL_SCALE_D_TEXT if req.paper_dims else req.d_text
    d_feat = FULL_SCALE_D_FEAT if req.paper_dims else req.d_feat
    cfg = SynthConfig(
        n_samples=req.n,
        height=req.height,
        width=req.width,
        sigma_n=req.sigma_n,
        sigma_t=req.sigma_t,
        sigma_f=req.sigma_f,
        d_text=d_text,
        d_feat=d_feat,
        k_captions=req.k_captions,
        seed=req.seed,
        bounds=_bounds(req.bounds),
    )
    gen_synthetic(cfg, req.out)
    out = Path(req.out)
    return SynthResponse(
        manifest=str(out / "manifest.jsonl"),
        truth=str(out / "truth.jsonl"),
        n_samples=req.n,
    )


def run_train(req: TrainRequest) -> TrainResponse:
    manifest = load_manifest(req.manifest)
    cfg = TrainConfig(
        epochs=req.epochs,
        batch_size=req.batch_size,
        lr_max=req.lr_max,
        lr_min=req.lr_min,
        weights=LossWeights(
            lambda_env=req.lambda_env, lambda_r=req.lambda_r, lambda_cal=req.lambda_cal
        ),
        bounds=_bounds(req.bounds),
        seed=req.seed,
        hidden=req.hidden,
        trunk_depth=req.trunk_depth,
        sel_depth=req.sel_depth,
        weight_decay=req.weight_decay,
        threads=req.threads,
        eval_every=req.eval_every,
    )
    val_manifest = load_manifest(req.val_manifest) if req.val_manifest else None
    ckpt = train(manifest, cfg, val_manifest=val_manifest)
    save_checkpoint(ckpt, req.out)
    final = ckpt.log[-1]
    return TrainResponse(
        checkpoint=req.out,
        epochs=cfg.epochs,
        final_total_loss=final["total"],
        final_depth_loss=final["depth"],
        skipped_total=sum(e["skipped"] for e in ckpt.log),
    )


def run_eval(req: EvalRequest) -> EvalResponse:
    manifest = load_manifest(req.manifest)
    eval_cfg = EvalConfig(
        min_depth=req.min_depth,
        max_depth=req.max_depth,
        clamp_predictions=req.clamp_predictions,
    )
    sources = sum([req.ckpt is not None, req.use_oracle, req.use_global])
    if sources != 1:
        raise DataError("eval needs exactly one of --ckpt, --use-oracle, --global")
    checkpoint = load_checkpoint(req.ckpt) if req.ckpt else None
    global_calib = (
        fit_global_baseline(manifest, _bounds(req.bounds)) if req.use_global else None
    )
    result = evaluate(
        manifest,
        checkpoint,
        eval_cfg,
        use_oracle=req.use_oracle,
        unclamped=req.unclamped,
        global_calib=global_calib,
        mode=req.mode,
        threads=req.threads,
        bounds=None if req.ckpt else _bounds(req.bounds),
    )
    report_path = None
    if req.out:
        doc = {
            "metrics": result.report.as_dict(),
            "eval_config": {
                "min_depth": req.min_depth,
                "max_depth": req.max_depth,
                "clamp_predictions": req.clamp_predictions,
            },
            "source": "oracle" if req.use_oracle else ("global" if req.use_global else "checkpoint"),
            "mode": req.mode,
            "unclamped": req.unclamped,
            "protocol": "per-image metrics averaged across images",
        }
        Path(req.out).write_text(
            json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        report_path = req.out
    table_path = None
    if req.table_out:
        _write_csv(
            req.table_out,
            ["id", "alpha", "beta", "alpha_ls", "beta_ls", "abs_rel", "rmse"],
            result.rows,
        )
        table_path = req.table_out
    r = result.report
    return EvalResponse(
        abs_rel=r.abs_rel,
        rmse=r.rmse,
        rmse_log=r.rmse_log,
        log10=r.log10,
        d1=r.d1,
        d2=r.d2,
        d3=r.d3,
        n_images=r.n_images,
        n_pixels=r.n_pixels,
        report_path=report_path,
        table_path=table_path,
    )


def run_oracle(req: OracleRequest) -> OracleResponse:
    manifest = load_manifest(req.manifest)
    bounds = _bounds(req.bounds)
    rows = []
    for rec in manifest.records:
        sample = load_sample(manifest, rec)
        t = oracle_targets(fit_oracle(sample.y, sample.gt, bounds), bounds)
        rows.append(
            {
                "id": rec.id,
                "alpha_raw": t.alpha_raw,
                "beta_raw": t.beta_raw,
                "alpha_ls": t.alpha_ls,
                "beta_ls": t.beta_ls,
                "alpha_tilde_star": t.theta_tilde_star.alpha_tilde,
                "beta_tilde_star": t.theta_tilde_star.beta_tilde,
                "n_valid": t.n_valid,
                "degenerate": t.degenerate,
            }
        )
    _write_csv(
        req.out,
        [
            "id",
            "alpha_raw",
            "beta_raw",
            "alpha_ls",
            "beta_ls",
            "alpha_tilde_star",
            "beta_tilde_star",
            "n_valid",
            "degenerate",
        ],
        rows,
    )
    return OracleResponse(n_rows=len(rows), table_path=req.out)


def run_global(req: GlobalFitRequest) -> GlobalFitResponse:
    manifest = load_manifest(req.manifest)
    calib = fit_global_baseline(manifest, _bounds(req.bounds))
    return GlobalFitResponse(alpha=calib.alpha, beta=calib.beta)


def run_gradcheck(req: GradCheckRequest) -> GradCheckResponse:
    report = pipeline_grad_check(seed=req.seed, h=req.h, tol=req.tol)
    return GradCheckResponse(
        max_rel_err=report.max_rel_err,
        n_params=report.n_params,
        tol=report.tol,
        passed=report.passed,
    )


def run_sensitivity(req: SensitivityRequest) -> SensitivityResponse:
    manifest = load_manifest(req.manifest)
    checkpoint = load_checkpoint(req.ckpt)
    modes = []
    all_rows = []
    for mode in ("full", "language", "vision"):
        res = caption_sensitivity(manifest, checkpoint, mode=mode, threads=req.threads)
        modes.append(
            SensitivityModeStats(
                mode=mode,
                mean_ln_alpha=res.mean_ln_alpha,
                std_ln_alpha=res.std_ln_alpha,
                mean_beta_tilde=res.mean_beta_tilde,
                std_beta_tilde=res.std_beta_tilde,
            )
        )
        for row in res.rows:
            all_rows.append({"mode": mode, **row})
    table_path = None
    if req.out:
        _write_csv(
            req.out,
            ["mode", "id", "mean_ln_alpha", "std_ln_alpha", "mean_beta_tilde", "std_beta_tilde"],
            all_rows,
        )
        table_path = req.out
    return SensitivityResponse(
        modes=modes, n_images=len(manifest.records), table_path=table_path
    )
