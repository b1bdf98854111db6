"""Command-line entry point.

Exit codes: 0 success, 1 invalid config, 2 missing inputs, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from . import config, pipeline
from .container import ContainerError
from .nn.functional import NumericalError

log = logging.getLogger("jmsc")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (JSON); defaults apply when omitted")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--checkpoint", type=Path, help="backbone checkpoint")
    common.add_argument("--threads", type=int, help="torch intra-op threads")
    common.add_argument("--deterministic", action="store_true", help="single-threaded, deterministic kernels")
    common.add_argument("--data", type=Path, help="dataset directory (default: paths.data)")

    p = argparse.ArgumentParser(prog="jmsc", description="Multimodal masked latent prediction pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate and write a dataset")
    sub.add_parser("pretrain", parents=[common], help="self-supervised backbone pretraining")
    th = sub.add_parser("train-heads", parents=[common], help="train task heads on a frozen backbone")
    th.add_argument("--untrained", action="store_true", help="use a randomly initialised backbone")
    ev = sub.add_parser("evaluate", parents=[common], help="evaluate backbone + heads on the test split")
    ev.add_argument("--heads", type=Path, help="directory holding head checkpoints (default: --checkpoint's dir)")
    sub.add_parser("ablate", parents=[common], help="run the configured ablation matrix")
    sub.add_parser("grad-check", parents=[common], help="finite-difference gradient checks")
    return p


def _configure_numerics(args) -> None:
    if args.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    elif args.threads:
        torch.set_num_threads(args.threads)


def _load_config(args) -> config.RunConfig:
    if args.config is not None and not args.config.is_file():
        raise FileNotFoundError(2, "config file not found", str(args.config))
    cfg = config.load(args.config) if args.config else config.RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "untrained", False):
        cfg = cfg.replace(heads__untrained_backbone=True)
    return config.validate(cfg)


def _dispatch(args, cfg: config.RunConfig) -> int:
    data = args.data or Path(cfg.paths.data)
    run = Path(cfg.paths.run)
    if args.command == "generate":
        out = args.out or data
        m = pipeline.run_generate(cfg, out)
        print(f"wrote {m['n_windows']} windows ({m['n_train']} train / {m['n_test']} test) to {out}")
    elif args.command == "pretrain":
        ckpt = pipeline.run_pretrain(cfg, data, args.out or run)
        print(f"backbone checkpoint: {ckpt}")
    elif args.command == "train-heads":
        out = args.out or (args.checkpoint.parent / "heads" if args.checkpoint else run / "heads")
        for path in pipeline.run_train_heads(cfg, data, args.checkpoint, out):
            print(f"head checkpoint: {path}")
    elif args.command == "evaluate":
        out = args.out or run / "eval"
        res = pipeline.run_evaluate(cfg, data, args.checkpoint, args.heads, out)
        rep = res["report"]
        print(json.dumps({k: rep[k] for k in ("ade", "fde", "acc1", "acc3", "mean_l1_rsrp_diff", "rmse", "mae")}))
        print(f"report: {res['paths']['report']}")
    elif args.command == "ablate":
        out = args.out or run / "ablation"
        pipeline.run_ablate(cfg, data, out, args.checkpoint)
        print(f"ablation table: {Path(out) / 'ablation.csv'}")
    elif args.command == "grad-check":
        from .gradsuite import run_suite

        reports = run_suite(cfg.seed)
        lines = [r.line() for r in reports]
        print("\n".join(lines))
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "grad_check.txt").write_text("\n".join(lines) + "\n")
        return EXIT_OK if all(r.passed() for r in reports) else EXIT_NUMERIC
    return EXIT_OK


def run(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("JMSC_LOG", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    _configure_numerics(args)
    try:
        cfg = _load_config(args)
    except FileNotFoundError as exc:
        print(f"error: config file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except config.ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _dispatch(args, cfg)
    except config.ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ContainerError as exc:
        print(f"error: unreadable input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
