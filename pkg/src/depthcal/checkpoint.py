"""Checkpoint directory format.

One metadata document (metadata.json, sorted keys, no timestamps) plus one
tensor file per parameter array:

    layer{i}.weight.npy / layer{i}.bias.npy      envelope trunk
    mu.weight.npy / mu.bias.npy                  envelope center head
    r.weight.npy / r.bias.npy                    envelope radius head
    sel.layer{i}.weight.npy / sel.layer{i}.bias.npy

Optimizer moment buffers mirror the parameter names as opt.m.<name>.npy and
opt.v.<name>.npy. Checkpoints are self-describing: dims, bounds, the full
training configuration, and the training log all live in the metadata, and
save -> load roundtrips bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .calib import CalibBounds
from .errors import DataError
from .heads import EnvelopeHead, SelectorHead
from .losses import LossWeights
from .nn import AdamWState, MLP, DenseLayer
from .npyio import read_npy, write_npy
from .trainer import Checkpoint, FeatureScaler, TrainConfig

__all__ = ["save_checkpoint", "load_checkpoint", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1


def _param_names(trunk_depth: int, sel_depth: int) -> list[str]:
    names = []
    for i in range(trunk_depth):
        names.extend([f"layer{i}.weight", f"layer{i}.bias"])
    names.extend(["mu.weight", "mu.bias", "r.weight", "r.bias"])
    for i in range(sel_depth):
        names.extend([f"sel.layer{i}.weight", f"sel.layer{i}.bias"])
    return names


def save_checkpoint(ckpt: Checkpoint, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ckpt.config
    names = _param_names(cfg.trunk_depth, cfg.sel_depth)
    params = ckpt.env_head.params() + ckpt.sel_head.params()
    if len(params) != len(names):
        raise DataError("checkpoint: parameter list does not match naming scheme")
    for name, arr in zip(names, params):
        write_npy(out / f"{name}.npy", arr)
    for name, m, v in zip(names, ckpt.opt_state.m, ckpt.opt_state.v):
        write_npy(out / f"opt.m.{name}.npy", m)
        write_npy(out / f"opt.v.{name}.npy", v)
    write_npy(out / "feat.mean.npy", ckpt.feat_scaler.mean)
    write_npy(out / "feat.std.npy", ckpt.feat_scaler.std)
    meta = {
        "version": CHECKPOINT_VERSION,
        "d_text": ckpt.d_text,
        "d_feat": ckpt.d_feat,
        "opt_t": ckpt.opt_state.t,
        "config": asdict(cfg),
        "log": ckpt.log,
    }
    (out / "metadata.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["weights"] = LossWeights(**d["weights"])
    d["bounds"] = CalibBounds(**d["bounds"])
    return TrainConfig(**d)


def load_checkpoint(ckpt_dir) -> Checkpoint:
    path = Path(ckpt_dir)
    meta_path = path / "metadata.json"
    if not meta_path.is_file():
        raise DataError(f"checkpoint metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    version = meta.get("version")
    if version != CHECKPOINT_VERSION:
        raise DataError(
            f"checkpoint version {version!r} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    cfg = _config_from_dict(meta["config"])
    names = _param_names(cfg.trunk_depth, cfg.sel_depth)
    params = [read_npy(path / f"{name}.npy") for name in names]
    m = [read_npy(path / f"opt.m.{name}.npy") for name in names]
    v = [read_npy(path / f"opt.v.{name}.npy") for name in names]

    n_trunk = 2 * cfg.trunk_depth
    trunk_layers = [
        DenseLayer(weight=params[2 * i], bias=params[2 * i + 1])
        for i in range(cfg.trunk_depth)
    ]
    env_head = EnvelopeHead(
        trunk=MLP(layers=trunk_layers),
        head_mu=DenseLayer(weight=params[n_trunk], bias=params[n_trunk + 1]),
        head_r=DenseLayer(weight=params[n_trunk + 2], bias=params[n_trunk + 3]),
        r_max=cfg.bounds.r_max,
    )
    sel_layers = [
        DenseLayer(weight=params[n_trunk + 4 + 2 * i], bias=params[n_trunk + 5 + 2 * i])
        for i in range(cfg.sel_depth)
    ]
    sel_head = SelectorHead(net=MLP(layers=sel_layers))
    if env_head.d_in != meta["d_text"] or sel_head.d_in != meta["d_feat"]:
        raise DataError("checkpoint tensors do not match recorded dims")
    return Checkpoint(
        env_head=env_head,
        sel_head=sel_head,
        opt_state=AdamWState(m=m, v=v, t=int(meta["opt_t"])),
        config=cfg,
        d_text=int(meta["d_text"]),
        d_feat=int(meta["d_feat"]),
        log=list(meta["log"]),
        feat_scaler=FeatureScaler(
            mean=read_npy(path / "feat.mean.npy"),
            std=read_npy(path / "feat.std.npy"),
        ),
    )
