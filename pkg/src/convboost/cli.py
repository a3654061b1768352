"""Command-line interface: ``convboost {synth,train,compare,predict}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import pipeline
from .dataio import load_dataset, read_pgm, save_dataset, synthesize_dataset
from .errors import ConfigError, ConvBoostError, DataError
from .pipeline import ExperimentConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("convboost")

# flag dest -> (section or None, config key)
OVERRIDES = {
    "seed": (None, "seed"),
    "side": (None, "target_side"),
    "test_fraction": (None, "test_fraction"),
    "paper_order": (None, "paper_order"),
    "epochs": ("cnn", "epochs"),
    "lr": ("cnn", "learning_rate"),
    "batch_size": ("cnn", "batch_size"),
    "boost_lr": ("boost", "learning_rate"),
    "max_depth": ("boost", "max_depth"),
    "n_estimators": ("boost", "n_estimators"),
    "reg_lambda": ("boost", "reg_lambda"),
    "gamma": ("boost", "gamma"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the ``--config`` JSON file, then explicit flags."""
    cfg = ExperimentConfig().to_dict()
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        ExperimentConfig.from_dict(loaded)  # reject unknown keys early
        for key, value in loaded.items():
            if isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        (cfg if section is None else cfg[section])[key] = value
    if getattr(args, "no_augment", False):
        cfg["augment"] = False
    return ExperimentConfig.from_dict(cfg)


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override its values)")
    p.add_argument("--data", required=True, help="dataset manifest CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--side", type=int, help="preprocessed image side length")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="CNN learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--boost-lr", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--paper-order", action="store_const", const=True, default=None,
                   help="augment before splitting (original ordering)")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic image dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a CNN or hybrid model")
    _experiment_flags(p)
    p.add_argument("--mode", choices=("cnn", "hybrid"), default="hybrid")

    p = sub.add_parser("compare", help="train once, evaluate CNN and hybrid heads side by side")
    _experiment_flags(p)

    p = sub.add_parser("predict", help="classify one image with a saved model")
    p.add_argument("--model", required=True, help="model directory written by train")
    p.add_argument("--image", required=True, help="PGM image")
    return parser


def cmd_synth(args) -> int:
    ds = synthesize_dataset(args.seed, args.per_class, args.classes, args.side)
    manifest = save_dataset(ds, args.out)
    print(json.dumps({"manifest": str(manifest), "samples": len(ds), "classes": ds.class_names}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(args.data)
    config = {**cfg.to_dict(), "data": args.data, "mode": args.mode}
    if args.mode == "cnn":
        result = pipeline.train_baseline_cnn(ds, cfg)
    else:
        result = pipeline.train_hybrid(ds, cfg)
    pipeline.write_run(result, args.out, config, figures=not args.no_figures)
    print(json.dumps({"mode": args.mode, "out": args.out, **result.metrics.headline()}))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(args.data)
    report = pipeline.run_experiment(cfg, ds)
    report.config = {**report.config, "data": args.data}
    pipeline.write_report(report, args.out, figures=not args.no_figures)
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = pipeline.load_model(args.model)
    try:
        pixels = read_pgm(args.image)
    except OSError as exc:
        raise DataError(f"cannot read image {args.image}: {exc}") from exc
    name, probs = model.predict(pixels)
    print(json.dumps({"class": name, "probabilities": dict(zip(model.class_names, map(float, probs)))}))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "compare": cmd_compare, "predict": cmd_predict}


def _thread_limit():
    value = os.environ.get("CONVBOOST_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (AssertionError, FloatingPointError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
