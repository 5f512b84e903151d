"""Experiment runner: config parsing, sweeps, CSV/plot emission, trends.

Four experiment kinds mirror the performance figures: task accuracy and
reconstruction loss against communication SNR, sensing accuracy against
sensing SNR, and task accuracy against attack PSR. Matched mode trains
one model per sweep point; randomized mode trains one model per n_c
over an SNR range and evaluates it across the grid.

Every run echoes its fully resolved configuration to ``resolved.cfg``
and appends one CSV row per grid point as soon as it is available, so
partial results survive an abort. Reruns with the same (config, seed)
produce byte-identical outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from .attack import AttackParams, evaluate_attack
from .channel import CHANNEL_KINDS, FADING_MODES, ChannelParams
from .errors import ConfigError
from .models import ModelConfig
from .sensing import SensingScenario
from .training import (MetricsRecord, MultiTaskWeights, TrainConfig, evaluate,
                       train)

DATASET_ENV = "SEMCOM_DATASET"

EXPERIMENTS = (
    "task_accuracy_vs_snr",
    "reconstruction_vs_snr",
    "sensing_vs_snr",
    "accuracy_vs_psr",
)

CSV_COLUMNS = ["channel", "snr_db", "n_c", "psr_db", "task_accuracy",
               "reconstruction_mse", "sensing_accuracy", "seed", "samples"]
ATTACK_CSV_COLUMNS = CSV_COLUMNS + ["attack"]

EVAL_STREAM = 30
SYNTH_TRAIN_STREAM = 31
SYNTH_TEST_STREAM = 32

ACCURACY_TOLERANCE = 0.02
MSE_RELATIVE_TOLERANCE = 0.05


def _parse_float_list(v):
    if isinstance(v, str):
        v = [part for part in v.replace(";", ",").split(",") if part.strip()]
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError("expected a nonempty comma-separated list")
    return [float(x) for x in v]


def _parse_int_list(v):
    return [int(x) for x in _parse_float_list(v)]


def _parse_bool(v):
    if isinstance(v, bool):
        return v
    low = str(v).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_choice(options):
    def parse(v):
        s = str(v).lower()
        if s not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return s
    return parse


def _parse_opt_str(v):
    return None if v in (None, "", "null", "none") else str(v)


def _parse_opt_int(v):
    return None if v in (None, "", "null", "none") else int(v)


def _parse_seed(v):
    s = int(v)
    if s < 0:
        raise ValueError("seed must be nonnegative")
    return s


# key -> (default, parser)
CONFIG_SCHEMA = {
    "experiment": ("task_accuracy_vs_snr", _parse_choice(EXPERIMENTS)),
    "seed": (1, _parse_seed),
    "out": ("runs/out", str),
    "workers": (1, int),
    "channel.kind": ("awgn", _parse_choice(CHANNEL_KINDS)),
    "channel.snr_db": (10.0, float),
    "channel.fading": ("per-dim", _parse_choice(FADING_MODES)),
    "channel.h_floor": (1e-3, float),
    "sensing.snr_db": (10.0, float),
    "sensing.prior": (0.5, float),
    "model.n_c": (20, int),
    "weights.semantic": (1.0, float),
    "weights.reconstruction": (1.0, float),
    "weights.sensing": (1.0, float),
    "train.epochs": (20, int),
    "train.batch_size": (64, int),
    "train.learning_rate": (1e-3, float),
    "train.snr_mode": ("matched", _parse_choice(("matched", "randomized"))),
    "grid.snr_db": ([-5.0, 0.0, 5.0, 10.0, 15.0], _parse_float_list),
    "grid.n_c": ([10, 20, 40], _parse_int_list),
    "grid.psr_db": ([-30.0, -25.0, -20.0, -15.0, -10.0, -5.0], _parse_float_list),
    "grid.sensing_snr_db": ([-5.0, 0.0, 5.0, 10.0, 15.0], _parse_float_list),
    "data.path": (None, _parse_opt_str),
    "data.synthetic": (False, _parse_bool),
    "data.subset": (None, _parse_opt_int),
    "data.synth_train": (2000, int),
    "data.synth_test": (1000, int),
}


def _flatten(mapping, prefix=""):
    flat = {}
    for key, value in mapping.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self):
        return self.values["experiment"]

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def out(self):
        return Path(self.values["out"])

    def channel(self, snr_db=None) -> ChannelParams:
        return ChannelParams(
            kind=self.values["channel.kind"],
            snr_db=self.values["channel.snr_db"] if snr_db is None else snr_db,
            fading=self.values["channel.fading"],
            h_floor=self.values["channel.h_floor"],
        )

    def sensing(self, snr_db=None) -> SensingScenario:
        return SensingScenario(
            sensing_snr_db=self.values["sensing.snr_db"] if snr_db is None else snr_db,
            presence_prior=self.values["sensing.prior"],
            fading=self.values["channel.fading"],
        )

    def weights(self) -> MultiTaskWeights:
        return MultiTaskWeights(
            w_semantic=self.values["weights.semantic"],
            w_reconstruction=self.values["weights.reconstruction"],
            w_sensing=self.values["weights.sensing"],
        )

    def train_config(self, n_c, snr_db=None, sensing_snr_db=None,
                     snr_mode=None, snr_range=None) -> TrainConfig:
        return TrainConfig(
            cfg=ModelConfig(n_c=n_c),
            channel=self.channel(snr_db),
            sensing=self.sensing(sensing_snr_db),
            weights=self.weights(),
            epochs=self.values["train.epochs"],
            batch_size=self.values["train.batch_size"],
            learning_rate=self.values["train.learning_rate"],
            seed=self.values["seed"],
            train_snr_mode=snr_mode or self.values["train.snr_mode"],
            snr_range=snr_range or (-5.0, 15.0),
        )


def parse_config(path=None, overrides=None) -> ExperimentConfig:
    """Layered config: defaults, then file values, then flag overrides."""
    values = {key: default for key, (default, _) in CONFIG_SCHEMA.items()}

    def apply(source: dict, origin):
        for key, raw in source.items():
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown config key '{key}' ({origin})")
            _, parser = CONFIG_SCHEMA[key]
            try:
                values[key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key '{key}': {exc}") from exc

    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        apply(_flatten(loaded), origin=str(path))
    if overrides:
        apply(dict(overrides), origin="flags")

    for key in ("grid.snr_db", "grid.n_c", "grid.psr_db", "grid.sensing_snr_db"):
        if not values[key]:
            raise ConfigError(f"config key '{key}': empty grid")
    if values["workers"] < 1:
        raise ConfigError("config key 'workers': must be >= 1")
    return ExperimentConfig(values)


def write_resolved(config: ExperimentConfig, out_dir: Path):
    lines = []
    for key in sorted(config.values):
        value = config.values[key]
        if isinstance(value, list):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    (out_dir / "resolved.cfg").write_text("\n".join(lines) + "\n")


def load_datasets(config: ExperimentConfig):
    """Real CIFAR-10 when a path is configured, synthetic otherwise."""
    path = config.values["data.path"] or os.environ.get(DATASET_ENV)
    if config.values["data.synthetic"] or not path:
        if not config.values["data.synthetic"] and not path:
            raise ConfigError(
                "no dataset: set data.path / --dataset-path / $SEMCOM_DATASET "
                "or pass --synthetic"
            )
        seed = config.seed

        def derived(stream):
            return int(np.random.SeedSequence((seed, stream)).generate_state(1)[0])

        train_ds = data_mod.synth_dataset(
            config.values["data.synth_train"], classes=10,
            seed=derived(SYNTH_TRAIN_STREAM), split="train")
        test_ds = data_mod.synth_dataset(
            config.values["data.synth_test"], classes=10,
            seed=derived(SYNTH_TEST_STREAM), split="test")
    else:
        train_ds, test_ds = data_mod.load_cifar10(path)
    n_sub = config.values["data.subset"]
    if n_sub:
        train_ds = data_mod.subset(train_ds, min(n_sub, len(train_ds)), seed=config.seed)
        test_ds = data_mod.subset(test_ds, min(max(n_sub // 5, 500), len(test_ds)),
                                  seed=config.seed)
    return train_ds, test_ds


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _eval_rng(seed, task_index, eval_index):
    return np.random.default_rng(
        np.random.SeedSequence((seed, EVAL_STREAM, task_index, eval_index)))


def _metric_row(config, record: MetricsRecord, kind, x):
    """One CSV row carrying only the experiment's target metric; ``x``
    is the swept value (communication or sensing SNR)."""
    row = {
        "channel": config.values["channel.kind"],
        "snr_db": x,
        "n_c": record.n_c,
        "psr_db": None,
        "task_accuracy": None,
        "reconstruction_mse": None,
        "sensing_accuracy": None,
        "seed": config.seed,
        "samples": record.sample_count,
    }
    if kind == "task_accuracy_vs_snr":
        row["task_accuracy"] = record.task_accuracy
    elif kind == "reconstruction_vs_snr":
        row["reconstruction_mse"] = record.reconstruction_mse
    elif kind == "sensing_vs_snr":
        row["sensing_accuracy"] = record.sensing_accuracy
    return row


def _snr_tasks(config: ExperimentConfig):
    """(task_index, n_c, eval_xs) triples; matched mode trains per point."""
    kind = config.experiment
    xs = (config.values["grid.sensing_snr_db"] if kind == "sensing_vs_snr"
          else config.values["grid.snr_db"])
    tasks = []
    for n_c in config.values["grid.n_c"]:
        if config.values["train.snr_mode"] == "matched":
            tasks.extend((n_c, [x]) for x in xs)
        else:
            tasks.append((n_c, list(xs)))
    return [(i, n_c, xs_i) for i, (n_c, xs_i) in enumerate(tasks)]


def _run_snr_task(config: ExperimentConfig, task, train_ds, test_ds):
    task_index, n_c, xs = task
    kind = config.experiment
    rows = []
    if kind == "sensing_vs_snr":
        for j, x in enumerate(xs):
            # sensing sweeps are matched per sensing-SNR point; the
            # communication channel stays at its configured SNR
            tc = config.train_config(n_c, sensing_snr_db=x)
            bundle, _ = train(tc, train_ds)
            record = evaluate(bundle, test_ds, tc.channel, tc.sensing,
                              _eval_rng(config.seed, task_index, j))
            rows.append(_metric_row(config, record, kind, x))
    else:
        if config.values["train.snr_mode"] == "matched":
            tc = config.train_config(n_c, snr_db=xs[0])
        else:
            tc = config.train_config(
                n_c, snr_mode="randomized", snr_range=(min(xs), max(xs)))
        bundle, _ = train(tc, train_ds)
        for j, x in enumerate(xs):
            record = evaluate(bundle, test_ds, config.channel(x), None,
                              _eval_rng(config.seed, task_index, j))
            rows.append(_metric_row(config, record, kind, x))
    return rows


def _run_attack_task(config: ExperimentConfig, train_ds, test_ds):
    tc = config.train_config(config.values["model.n_c"])
    bundle, _ = train(tc, train_ds)
    grid = [AttackParams("fgsm", psr) for psr in config.values["grid.psr_db"]]
    grid += [AttackParams("gaussian", psr) for psr in config.values["grid.psr_db"]]
    return evaluate_attack(bundle, test_ds, grid, tc.channel, seed=config.seed)


def _pool_entry(args):
    return _run_snr_task(*args)


def _write_curves(config: ExperimentConfig, rows, out_dir: Path):
    kind = config.experiment
    metric = {
        "task_accuracy_vs_snr": "task_accuracy",
        "reconstruction_vs_snr": "reconstruction_mse",
        "sensing_vs_snr": "sensing_accuracy",
        "accuracy_vs_psr": "task_accuracy",
    }[kind]
    curves_dir = out_dir / "curves"
    curves_dir.mkdir(exist_ok=True)
    if kind == "accuracy_vs_psr":
        for attack in ("fgsm", "gaussian"):
            points = sorted((r["psr_db"], r[metric]) for r in rows
                            if r.get("attack") == attack)
            name = f"task_accuracy_vs_psr_{attack}.dat"
            _write_curve(curves_dir / name, points)
        return
    channel = config.values["channel.kind"]
    for n_c in config.values["grid.n_c"]:
        points = sorted((r["snr_db"], r[metric]) for r in rows if r["n_c"] == n_c)
        _write_curve(curves_dir / f"{metric}_{channel}_nc{n_c}.dat", points)


def _write_curve(path, points):
    lines = [f"{_format_cell(float(x))} {_format_cell(float(y))}" for x, y in points]
    path.write_text("\n".join(lines) + "\n")


def run_experiment(config: ExperimentConfig) -> int:
    """Train/evaluate every grid point; emit CSV, curves and resolved.cfg.

    Rows are flushed as they complete; an error at a grid point is
    re-raised with the point's context after the flush.
    """
    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(config, out_dir)
    train_ds, test_ds = load_datasets(config)

    kind = config.experiment
    columns = ATTACK_CSV_COLUMNS if kind == "accuracy_vs_psr" else CSV_COLUMNS
    csv_path = out_dir / "metrics.csv"
    all_rows = []
    with open(csv_path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        fh.flush()

        def emit(rows):
            for row in rows:
                fh.write(",".join(_format_cell(row.get(c)) for c in columns) + "\n")
            fh.flush()
            all_rows.extend(rows)

        if kind == "accuracy_vs_psr":
            try:
                emit(_run_attack_task(config, train_ds, test_ds))
            except Exception as exc:
                raise RuntimeError(
                    f"experiment {kind} failed (n_c={config.values['model.n_c']}, "
                    f"snr_db={config.values['channel.snr_db']}): {exc}"
                ) from exc
        else:
            tasks = _snr_tasks(config)
            workers = min(config.values["workers"], len(tasks))
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    futures = [pool.submit(_pool_entry, (config, task, train_ds, test_ds))
                               for task in tasks]
                    for task, future in zip(tasks, futures):
                        try:
                            emit(future.result())
                        except Exception as exc:
                            raise RuntimeError(
                                f"experiment {kind} failed at grid point "
                                f"(n_c={task[1]}, x={task[2]}): {exc}"
                            ) from exc
            else:
                for task in tasks:
                    try:
                        emit(_run_snr_task(config, task, train_ds, test_ds))
                    except Exception as exc:
                        raise RuntimeError(
                            f"experiment {kind} failed at grid point "
                            f"(n_c={task[1]}, x={task[2]}): {exc}"
                        ) from exc

    _write_curves(config, all_rows, out_dir)
    return 0


# --- trend summary ---------------------------------------------------------


def _read_rows(path):
    import csv as csv_mod

    with open(path, newline="") as fh:
        reader = csv_mod.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{path}: CSV missing columns {missing}")
        return list(reader)


def _check_monotone(points, direction, tolerance, relative=False):
    """Return offending (x_prev, x, delta) triples under the tolerance."""
    offences = []
    for (x0, v0), (x1, v1) in zip(points, points[1:]):
        if direction == "up":
            allowed = v0 - tolerance
            if v1 < allowed:
                offences.append((x0, x1, v1 - v0))
        else:
            allowed = v0 * (1 + tolerance) if relative else v0 + tolerance
            if v1 > allowed:
                offences.append((x0, x1, v1 - v0))
    return offences


def summarize(csv_paths):
    """Monotonicity verdicts per curve; returns (report text, all_pass)."""
    lines = []
    ok = True
    for path in csv_paths:
        rows = _read_rows(path)
        attack_rows = [r for r in rows if r.get("attack")]
        plain_rows = [r for r in rows if not r.get("attack")]

        for kind in ("fgsm",):
            pts = sorted((float(r["psr_db"]), float(r["task_accuracy"]))
                         for r in attack_rows
                         if r.get("attack") == kind and r.get("psr_db"))
            if len(pts) >= 2:
                bad = _check_monotone(pts, "down", ACCURACY_TOLERANCE)
                ok &= not bad
                lines.append(_verdict(path, f"task_accuracy vs psr [{kind}]",
                                       "non-increasing (2pp tol)", bad))

        groups = {}
        for r in plain_rows:
            groups.setdefault((r["channel"], r["n_c"]), []).append(r)
        for (channel, n_c), grp in sorted(groups.items()):
            for metric, direction, tol, rel in (
                ("task_accuracy", "up", ACCURACY_TOLERANCE, False),
                ("reconstruction_mse", "down", MSE_RELATIVE_TOLERANCE, True),
                ("sensing_accuracy", "up", ACCURACY_TOLERANCE, False),
            ):
                pts = sorted((float(r["snr_db"]), float(r[metric]))
                             for r in grp if r.get(metric))
                if len(pts) < 2:
                    continue
                bad = _check_monotone(pts, direction, tol, relative=rel)
                ok &= not bad
                rule = ("non-decreasing (2pp tol)" if direction == "up"
                        else "non-increasing (5% tol)")
                lines.append(_verdict(
                    path, f"{metric} vs snr [channel={channel}, n_c={n_c}]", rule, bad))
    if not lines:
        lines.append("no curves with at least two points found")
    return "\n".join(lines) + "\n", ok


def _verdict(path, curve, rule, offences):
    if not offences:
        return f"PASS {path}: {curve} {rule}"
    detail = "; ".join(f"x={a}->{b} delta={d:+.4g}" for a, b, d in offences)
    return f"FAIL {path}: {curve} {rule}: {detail}"
