"""Command-line experiment runner.

Subcommands: train, evaluate, sweep, attack, summarize. Flags override
config-file values which override documented defaults; every run echoes
the resolved configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, SemcomError
from .experiments import (CSV_COLUMNS, ExperimentConfig, _format_cell,
                          load_datasets, parse_config, run_experiment,
                          summarize, write_resolved)
from .training import evaluate, load_bundle, save_bundle, train, train_rng


def _add_common_flags(parser):
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--channel", help="channel kind: awgn or rayleigh")
    parser.add_argument("--snr-db", type=float, help="communication channel SNR (dB)")
    parser.add_argument("--nc", type=int, help="encoder output size n_c")
    parser.add_argument("--weights", help="loss weights w_sem,w_rec,w_sens")
    parser.add_argument("--dataset-path", help="CIFAR-10 binary batch directory")
    parser.add_argument("--synthetic", action="store_true",
                        help="use the seeded synthetic dataset")
    parser.add_argument("--subset", type=int, help="stratified training subset size")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel grid workers")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--learning-rate", type=float)


def _overrides_from_args(args):
    overrides = {}

    def put(key, value):
        if value is not None:
            overrides[key] = value

    put("channel.kind", getattr(args, "channel", None))
    put("channel.snr_db", getattr(args, "snr_db", None))
    put("model.n_c", getattr(args, "nc", None))
    put("data.path", getattr(args, "dataset_path", None))
    put("data.subset", getattr(args, "subset", None))
    put("seed", getattr(args, "seed", None))
    put("out", getattr(args, "out", None))
    put("workers", getattr(args, "workers", None))
    put("train.epochs", getattr(args, "epochs", None))
    put("train.batch_size", getattr(args, "batch_size", None))
    put("train.learning_rate", getattr(args, "learning_rate", None))
    put("experiment", getattr(args, "experiment", None))
    put("grid.psr_db", getattr(args, "psr_grid", None))
    put("grid.snr_db", getattr(args, "snr_grid", None))
    put("grid.sensing_snr_db", getattr(args, "sensing_grid", None))
    put("grid.n_c", getattr(args, "nc_grid", None))
    if getattr(args, "synthetic", False):
        overrides["data.synthetic"] = True

    weights = getattr(args, "weights", None)
    if weights is not None:
        parts = weights.split(",")
        if len(parts) != 3:
            raise ConfigError(
                f"config key 'weights': expected w_sem,w_rec,w_sens, got {weights!r}"
            )
        try:
            w = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"config key 'weights': {exc}") from exc
        overrides["weights.semantic"] = w[0]
        overrides["weights.reconstruction"] = w[1]
        overrides["weights.sensing"] = w[2]
    return overrides


def _config_from_args(args) -> ExperimentConfig:
    return parse_config(getattr(args, "config", None), _overrides_from_args(args))


def _cmd_train(args):
    config = _config_from_args(args)
    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(config, out_dir)
    train_ds, _ = load_datasets(config)
    tc = config.train_config(config.values["model.n_c"])
    bundle, history = train(tc, train_ds)
    save_bundle(bundle, out_dir / "checkpoints")
    lines = ["epoch,semantic_ce,reconstruction_mse,sensing_ce,total"]
    for epoch, rec in enumerate(history):
        lines.append(",".join([str(epoch), repr(rec.semantic_ce),
                               repr(rec.reconstruction_mse), repr(rec.sensing_ce),
                               repr(rec.total)]))
    (out_dir / "history.csv").write_text("\n".join(lines) + "\n")
    print(f"trained {len(bundle.models())} models for {tc.epochs} epochs; "
          f"checkpoints in {out_dir / 'checkpoints'}")
    return 0


def _cmd_evaluate(args):
    config = _config_from_args(args)
    bundle = load_bundle(args.models)
    _, test_ds = load_datasets(config)
    channel = config.channel()
    sensing = config.sensing() if bundle.sensing is not None else None
    record = evaluate(bundle, test_ds, channel, sensing,
                      train_rng(config.seed, "channel"))
    row = {
        "channel": channel.kind, "snr_db": record.snr_db, "n_c": record.n_c,
        "psr_db": None, "task_accuracy": record.task_accuracy,
        "reconstruction_mse": record.reconstruction_mse,
        "sensing_accuracy": record.sensing_accuracy,
        "seed": config.seed, "samples": record.sample_count,
    }
    print(",".join(CSV_COLUMNS))
    print(",".join(_format_cell(row[c]) for c in CSV_COLUMNS))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(
            ",".join(CSV_COLUMNS) + "\n"
            + ",".join(_format_cell(row[c]) for c in CSV_COLUMNS) + "\n")
    return 0


def _cmd_sweep(args):
    return run_experiment(_config_from_args(args))


def _cmd_attack(args):
    args.experiment = "accuracy_vs_psr"
    return run_experiment(_config_from_args(args))


def _cmd_summarize(args):
    report, ok = summarize(args.csv)
    print(report, end="")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semcom",
        description="Multi-task semantic communications simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model bundle, save checkpoints")
    _add_common_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate saved checkpoints")
    _add_common_flags(p_eval)
    p_eval.add_argument("--models", required=True, help="checkpoint directory")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="run a figure-style sweep experiment")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--experiment", help="|".join(
        ("task_accuracy_vs_snr", "reconstruction_vs_snr",
         "sensing_vs_snr", "accuracy_vs_psr")))
    p_sweep.add_argument("--snr-grid", help="comma list, e.g. -5,0,5,10,15")
    p_sweep.add_argument("--sensing-grid", help="comma list of sensing SNRs")
    p_sweep.add_argument("--nc-grid", help="comma list of n_c values")
    p_sweep.add_argument("--psr-grid", help="comma list of PSRs")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_attack = sub.add_parser("attack", help="accuracy-vs-PSR attack sweep")
    _add_common_flags(p_attack)
    p_attack.add_argument("--psr-grid", help="comma list of PSRs")
    p_attack.set_defaults(func=_cmd_attack)

    p_sum = sub.add_parser("summarize", help="trend verdicts over metrics CSVs")
    p_sum.add_argument("csv", nargs="+", help="metrics.csv paths")
    p_sum.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SemcomError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
