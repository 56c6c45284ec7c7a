"""Command-line front door: synth, diagnose, train, evaluate.

Exit codes: 0 success, 1 config/model error, 2 data error, 3 diagnostics
outside the acceptable window, 4 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import parallel
from .config import build_from_settings, load_config
from .data import (
    augment_dataset,
    load_dataset,
    synth_dataset,
    write_category_table,
    write_dataset,
)
from .errors import ConfigError, DataError, DivergenceError, ModelFormatError
from .initdiag import diagnose, init_weights, render_report
from .model_io import load_model, save_model
from .net import Loss
from .rng import derive
from .train import evaluate, prepare_classification, prepare_regression, train

_METRICS_TEMPLATE = (
    "accuracy_percent={accuracy!r}\nmape_percent={mape!r}\nmae={mae!r}\n"
    "loss={loss!r}\n"
)


def _add_common(p, data_required=False):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="worker count; 0 means hardware concurrency "
                        f"(default: ${parallel.ENV_WORKERS} or 1)")
    p.add_argument("--data", required=data_required,
                   help="dataset directory of .pgm files")
    p.add_argument("--task", choices=("classify", "regress"),
                   default="classify")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ignet",
        description="Convolutional network engine with initialization "
                    "diagnostics and freezeconnect regularization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic drawing corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--rows", type=int, default=36)
    p.add_argument("--cols", type=int, default=58)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("diagnose",
                       help="report startup MAVs against the derivative window")
    p.add_argument("--config", required=True)
    p.add_argument("--probe", type=int, default=32)
    p.add_argument("--report-out", help="also write the table to this file")
    _add_common(p)

    p = sub.add_parser("train", help="run the cross-validated training harness")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, data_required=True)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--config", help="optional config for encoder groups")
    _add_common(p, data_required=True)
    return parser


def _set_workers(args) -> None:
    if getattr(args, "workers", None) is not None:
        parallel.set_worker_count(args.workers)
    else:
        parallel.set_worker_count(
            parallel.resolve_worker_count(None)
        )


def _prepare(samples, task, settings):
    if task == "classify":
        return prepare_classification(samples, settings.encoder)
    examples, strata = prepare_regression(samples)
    return examples, strata, None


def _load_probe_samples(args, settings):
    rows, cols = settings.input_dims[1], settings.input_dims[2]
    if args.data:
        return load_dataset(args.data, target_rows=rows, target_cols=cols)
    per_class = max(1, -(-args.probe // 3))
    return synth_dataset(3, per_class, dims=(rows, cols), seed=args.seed)


def cmd_synth(args) -> int:
    samples = synth_dataset(args.classes, args.per_class,
                            dims=(args.rows, args.cols), seed=args.seed)
    try:
        os.makedirs(args.out, exist_ok=True)
        write_dataset(samples, args.out)
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_diagnose(args) -> int:
    settings = load_config(args.config)
    _set_workers(args)
    samples = _load_probe_samples(args, settings)
    examples, _, table = _prepare(samples, args.task, settings)
    auto = len(table) if table is not None else 1
    net, amps = build_from_settings(settings, auto_units=auto)
    init_weights(net, amps, derive(args.seed, 0))
    probe = [(ex.image, ex.target) for ex in examples[: args.probe]]
    report = diagnose(net, probe, settings.diag_window)
    text = render_report(report)
    print(text)
    if args.report_out:
        with open(args.report_out, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    return 0 if report.all_in_window else 3


def cmd_train(args) -> int:
    settings = load_config(args.config)
    _set_workers(args)
    rows, cols = settings.input_dims[1], settings.input_dims[2]
    samples = load_dataset(args.data, target_rows=rows, target_cols=cols)
    if settings.augment.multiplier > 1:
        samples = augment_dataset(samples, settings.augment, args.seed)
    examples, strata, table = _prepare(samples, args.task, settings)
    auto = len(table) if table is not None else 1
    net, amps = build_from_settings(settings, auto_units=auto)
    init_weights(net, amps, derive(args.seed, 0))
    net, history = train(net, examples, strata, settings.cv,
                         settings.optimizer, args.task, args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_model(net, os.path.join(args.out, "model.ign"))
    history.write_csv(os.path.join(args.out, "history.csv"))
    last = history.rows[-1]
    with open(os.path.join(args.out, "metrics.txt"), "w",
              encoding="ascii") as fh:
        fh.write("[test]\n" + _format_metrics(last.test))
        fh.write("[validation]\n" + _format_metrics(last.validation))
    if table is not None:
        write_category_table(table, os.path.join(args.out, "categories.txt"))
    print(f"trained {history.epochs_run} passes; outputs in {args.out}")
    return 0


def _format_metrics(m) -> str:
    return _METRICS_TEMPLATE.format(accuracy=m.accuracy, mape=m.mape,
                                    mae=m.mae, loss=m.loss)


def cmd_evaluate(args) -> int:
    net = load_model(args.model)
    _set_workers(args)
    settings = load_config(args.config) if args.config else None
    rows, cols = net.input_dims[1], net.input_dims[2]
    samples = load_dataset(args.data, target_rows=rows, target_cols=cols)
    if args.task == "classify":
        if net.loss is not Loss.CROSS_ENTROPY:
            print("config error: model was not trained for classification",
                  file=sys.stderr)
            return 1
        from .config import Settings

        enc = (settings or Settings()).encoder
        examples, _, table = prepare_classification(samples, enc)
        if len(table) != net.output_size:
            raise DataError(
                f"dataset yields {len(table)} categories, model expects "
                f"{net.output_size}"
            )
    else:
        examples, _ = prepare_regression(samples)
    metrics = evaluate(net, examples, args.task)
    print(_format_metrics(metrics), end="")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "synth": cmd_synth,
        "diagnose": cmd_diagnose,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ModelFormatError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
