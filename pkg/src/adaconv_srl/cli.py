"""Command-line entry point: train, evaluate, predict, sweep, gen-synth."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import Optional, Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULT_GROUPS, ConfigError, TrainConfig, load_config, parse_groups
from .conll import ConllFormatError, TreeError, read_conll09
from .convolution import param_count
from .synth import generate_corpus, generate_sentences
from .train import evaluate, predict, train
from .vocab import load_contextual_vectors

SWEEP_KEYS = {"z": "importance", "l": "pool_size", "filters": "filters", "depth": "depth"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(TrainConfig):
        p.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", default=None, metavar="VALUE")


def _overrides(args) -> dict:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def _config(args) -> TrainConfig:
    return load_config(args.config, _overrides(args))


def cmd_train(args) -> int:
    cfg = _config(args)
    train_sents = read_conll09(cfg.train) if cfg.train else generate_sentences(50, cfg.seed)
    os.makedirs(cfg.output, exist_ok=True)
    result = train(cfg, train_sents, log_path=os.path.join(cfg.output, "metrics.tsv"))
    save_checkpoint(result.checkpoint, os.path.join(cfg.output, "model.ckpt"))
    with open(os.path.join(cfg.output, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
    print(json.dumps({"best_epoch": result.best_epoch, "best_f1": result.best_f1,
                      "epochs": len(result.history), "seconds": round(result.seconds, 3),
                      "output": cfg.output}))
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.model)
    sents = read_conll09(args.data)
    ctx = load_contextual_vectors(args.contextual, sents) if args.contextual else None
    print(json.dumps(evaluate(ckpt, sents, ctx).as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    sents = read_conll09(args.data)
    ctx = load_contextual_vectors(args.contextual, sents) if args.contextual else None
    text = predict(ckpt, sents, ctx)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    return 0


def _sweep_override(cfg: TrainConfig, param: str, value: str) -> TrainConfig:
    key = SWEEP_KEYS[param]
    if key == "filters":
        # a bare count applies to every window size of the variant's default groups
        if ":" not in value:
            groups = parse_groups(cfg.filters or DEFAULT_GROUPS[cfg.variant])
            value = ",".join(f"{int(value)}:{s}" for _, s in groups)
        return cfg.replace(filters=value).validate()
    return cfg.with_overrides({key: value}).validate()


def sweep(cfg: TrainConfig, param: str, values: Sequence[str], sentences=None) -> list:
    """Train once per value; rows of (value, best F1, best epoch, filter-producing params)."""
    if sentences is None:
        sentences = read_conll09(cfg.train) if cfg.train else generate_sentences(50, cfg.seed)
    dev = read_conll09(cfg.dev) if cfg.dev else None
    rows = []
    for value in values:
        run = _sweep_override(cfg, param, value)
        result = train(run, sentences, dev)
        d = result.model.encoder_dim
        counts = param_count(result.model.conv_config, d).as_dict()
        rows.append((value, result.best_f1, result.best_epoch, counts[run.generation]))
    return rows


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [v.strip() for v in args.values.split(";" if ":" in args.values else ",") if v.strip()]
    print(f"{args.param}\tf1\tbest_epoch\tconv_params")
    for value, f1, epoch, count in sweep(cfg, args.param, values):
        print(f"{value}\t{f1:.6f}\t{epoch}\t{count}", flush=True)
    return 0


def cmd_gen_synth(args) -> int:
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(generate_corpus(args.sentences, args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaconv-srl",
                                     description="Adaptive-convolution semantic role labeling")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics log")
    p.add_argument("--config", default=None, help="key=value config file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "print a JSON P/R/F1 report"),
                                 ("predict", cmd_predict, "write CoNLL-2009 predictions")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--contextual", default=None, help="contextual vector sidecar")
        if name == "predict":
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="F1 curve over one hyperparameter")
    p.add_argument("--param", required=True, choices=sorted(SWEEP_KEYS))
    p.add_argument("--values", required=True,
                   help="comma-separated values (';'-separated for explicit filter groups)")
    p.add_argument("--config", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-synth", help="write the synthetic CoNLL-2009 corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConllFormatError, TreeError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
