"""Command-line entry point.

Thin client over the service layer: every subcommand builds the same
pydantic request model the HTTP API accepts and either calls the handler in
process (default) or posts it to a running service (--server URL). Each run
echoes its fully resolved configuration before doing any work; reruns with
the same printed configuration and --threads 1 reproduce outputs byte for
byte.

Exit codes: 0 success, 1 usage error, 2 data/computation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from .errors import DepthcalError
from .service import handlers
from .service.schemas import (
    EvalRequest,
    GlobalFitRequest,
    GradCheckRequest,
    OracleRequest,
    SensitivityRequest,
    SynthRequest,
    TrainRequest,
)

USAGE_EXIT = 1
DATA_EXIT = 2


class CliParser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; the contract is 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_EXIT)


BOUNDS_FIELDS = ("beta_min", "beta_max", "alpha_max", "eps", "r_max")


def _add_bounds_flags(p: CliParser) -> None:
    p.add_argument("--beta-min", type=float, dest="beta_min")
    p.add_argument("--beta-max", type=float, dest="beta_max")
    p.add_argument("--alpha-max", type=float, dest="alpha_max")
    p.add_argument("--eps", type=float, dest="eps")
    p.add_argument("--r-max", type=float, dest="r_max")


def _add_common(p: CliParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for this subcommand")
    p.add_argument("--server", help="base URL of a running service; posts instead of running in process")


def build_parser() -> CliParser:
    parser = CliParser(prog="depthcal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma-n", type=float, dest="sigma_n")
    p.add_argument("--sigma-t", type=float, dest="sigma_t")
    p.add_argument("--sigma-f", type=float, dest="sigma_f")
    p.add_argument("--d-text", type=int, dest="d_text")
    p.add_argument("--d-feat", type=int, dest="d_feat")
    p.add_argument("--k-captions", type=int, dest="k_captions")
    p.add_argument("--paper-dims", action="store_true", dest="paper_dims", default=None)
    _add_bounds_flags(p)

    p = sub.add_parser("train", help="train the calibration heads")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--out", help="checkpoint directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr-max", type=float, dest="lr_max")
    p.add_argument("--lr-min", type=float, dest="lr_min")
    p.add_argument("--lambda-env", type=float, dest="lambda_env")
    p.add_argument("--lambda-r", type=float, dest="lambda_r")
    p.add_argument("--lambda-cal", type=float, dest="lambda_cal")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--threads", type=int)
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--val-manifest", dest="val_manifest")
    _add_bounds_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint, the oracle, or the global baseline")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--ckpt")
    p.add_argument("--use-oracle", action="store_true", dest="use_oracle", default=None)
    p.add_argument("--unclamped", action="store_true", default=None)
    p.add_argument("--global", action="store_true", dest="use_global", default=None)
    p.add_argument("--mode", choices=["full", "language", "vision"])
    p.add_argument("--min-depth", type=float, dest="min_depth")
    p.add_argument("--max-depth", type=float, dest="max_depth")
    p.add_argument("--no-clamp", action="store_false", dest="clamp_predictions", default=None)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--table-out", dest="table_out", help="per-image CSV path")
    p.add_argument("--threads", type=int)
    _add_bounds_flags(p)

    p = sub.add_parser("oracle", help="per-image closed-form fits to CSV")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--out", help="CSV path")
    _add_bounds_flags(p)

    p = sub.add_parser("global", help="fit one scale and shift over the whole dataset")
    _add_common(p)
    p.add_argument("--manifest")
    _add_bounds_flags(p)

    p = sub.add_parser("gradcheck", help="full-pipeline gradient check vs finite differences")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("sensitivity", help="calibration spread across captions, all forward modes")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--ckpt")
    p.add_argument("--out", help="per-image CSV path")
    p.add_argument("--threads", type=int)

    return parser


def _merge_request(args: argparse.Namespace, model_cls):
    """config-file values < explicitly given flags; pydantic fills the rest."""
    merged: dict = {}
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise DepthcalError(f"config file not found: {cfg_path}")
        merged.update(json.loads(cfg_path.read_text(encoding="utf-8")))
    bounds = dict(merged.get("bounds", {}))
    for key, value in vars(args).items():
        if key in ("command", "config", "server") or value is None:
            continue
        if key in BOUNDS_FIELDS:
            bounds[key] = value
        else:
            merged[key] = value
    if bounds:
        merged["bounds"] = bounds
    return model_cls(**merged)


COMMANDS = {
    "synth": (SynthRequest, handlers.synth, "synth"),
    "train": (TrainRequest, handlers.run_train, "train"),
    "eval": (EvalRequest, handlers.run_eval, "eval"),
    "oracle": (OracleRequest, handlers.run_oracle, "oracle"),
    "global": (GlobalFitRequest, handlers.run_global, "global"),
    "gradcheck": (GradCheckRequest, handlers.run_gradcheck, "gradcheck"),
    "sensitivity": (SensitivityRequest, handlers.run_sensitivity, "sensitivity"),
}


def _post_remote(server: str, route: str, request) -> dict:
    import httpx

    url = f"{server.rstrip('/')}/v1/{route}"
    resp = httpx.post(url, json=request.model_dump(), timeout=None)
    if resp.status_code == 422:
        sys.stderr.write(f"error: invalid request: {resp.text}\n")
        sys.exit(USAGE_EXIT)
    if resp.status_code != 200:
        sys.stderr.write(f"error: {resp.status_code}: {resp.text}\n")
        sys.exit(DATA_EXIT)
    return resp.json()


def main(argv: list[str] | None = None) -> int:
    import logging

    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    model_cls, handler, route = COMMANDS[args.command]
    try:
        request = _merge_request(args, model_cls)
    except ValidationError as exc:
        sys.stderr.write(f"error: invalid configuration: {exc}\n")
        return USAGE_EXIT
    except (DepthcalError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_EXIT

    if args.command == "eval":
        sources = sum([request.ckpt is not None, request.use_oracle, request.use_global])
        if sources != 1:
            sys.stderr.write(
                "error: eval needs exactly one of --ckpt, --use-oracle, --global\n"
            )
            return USAGE_EXIT

    print(json.dumps({"command": args.command, "config": request.model_dump()}, sort_keys=True))

    try:
        if getattr(args, "server", None):
            result = _post_remote(args.server, route, request)
        else:
            result = handler(request).model_dump()
    except DepthcalError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_EXIT

    print(json.dumps(result, sort_keys=True))
    if args.command == "gradcheck" and not result["passed"]:
        sys.stderr.write("error: gradient check exceeded tolerance\n")
        return DATA_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
