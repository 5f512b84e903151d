"""Joint multi-task training through the channel, plus evaluation.

One forward pass drives all active heads: the encoder output is power
normalized, transmitted (with equalization under fading) to the
semantic and reconstruction decoders, and reflected off the sensing
environment to the sensing decoder. The total loss is the weighted sum
of the per-task losses; a zero weight removes that decoder's gradient
path entirely (the decoder is not even built by default).

Every stochastic ingredient draws from its own seed-derived stream
(data order, dropout, channel, sensing), so a run with some weights
zeroed follows bit-exactly the same trajectory as a build where those
decoders are absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, equalize, normalize_power, transmit
from .data import Dataset
from .errors import TrainingDivergedError
from .losses import categorical_cross_entropy, mean_squared_error, weighted_sum
from .model import Model
from .models import BUILDERS, ModelConfig
from .optim import Adam
from .sensing import SensingScenario, make_sensing_batch
from .tape import Tape, Var, backward

# disjoint from the model-init streams in models.py
TRAIN_STREAM = {"data": 10, "dropout": 11, "channel": 12, "sensing": 13, "snr": 14}

DECODER_ROLES = ("semantic", "reconstruction", "sensing")

# spec-facing loss names; cross-entropy is shared by the 10-class
# semantic head and the 2-class sensing head
semantic_loss = categorical_cross_entropy
reconstruction_loss = mean_squared_error
sensing_loss = categorical_cross_entropy


@dataclass(frozen=True)
class MultiTaskWeights:
    w_semantic: float = 1.0
    w_reconstruction: float = 1.0
    w_sensing: float = 1.0

    def __post_init__(self):
        vals = (self.w_semantic, self.w_reconstruction, self.w_sensing)
        if any(w < 0 for w in vals):
            raise ValueError(f"loss weights must be nonnegative, got {vals}")
        if not any(w > 0 for w in vals):
            raise ValueError("at least one loss weight must be positive")

    def weight(self, role):
        return {
            "semantic": self.w_semantic,
            "reconstruction": self.w_reconstruction,
            "sensing": self.w_sensing,
        }[role]


@dataclass
class LossBreakdown:
    semantic_ce: float = 0.0
    reconstruction_mse: float = 0.0
    sensing_ce: float = 0.0
    total: float = 0.0


@dataclass
class TrainConfig:
    cfg: ModelConfig = field(default_factory=ModelConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    sensing: SensingScenario = field(default_factory=SensingScenario)
    weights: MultiTaskWeights = field(default_factory=MultiTaskWeights)
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 1
    train_snr_mode: str = "matched"  # or "randomized"
    snr_range: tuple = (-5.0, 15.0)
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.train_snr_mode not in ("matched", "randomized"):
            raise ValueError(
                f"train_snr_mode {self.train_snr_mode!r}: expected 'matched' or 'randomized'"
            )


@dataclass
class MetricsRecord:
    task_accuracy: float | None
    reconstruction_mse: float | None
    sensing_accuracy: float | None
    snr_db: float
    n_c: int
    sample_count: int


@dataclass
class ModelBundle:
    encoder: Model
    semantic: Model | None = None
    reconstruction: Model | None = None
    sensing: Model | None = None

    def decoder(self, role):
        return getattr(self, role)

    def active_roles(self, weights: MultiTaskWeights):
        roles = []
        for role in DECODER_ROLES:
            if weights.weight(role) > 0:
                if self.decoder(role) is None:
                    raise ValueError(
                        f"weights activate the {role} decoder but the bundle has none"
                    )
                roles.append(role)
        return roles

    def active_parameters(self, weights: MultiTaskWeights):
        params = list(self.encoder.parameters())
        for role in self.active_roles(weights):
            params.extend(self.decoder(role).parameters())
        return params

    def models(self):
        out = {"encoder": self.encoder}
        for role in DECODER_ROLES:
            if self.decoder(role) is not None:
                out[role] = self.decoder(role)
        return out


def train_rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence((seed, TRAIN_STREAM[stream])))


def build_bundle(cfg: ModelConfig, seed=1, weights: MultiTaskWeights | None = None,
                 dtype=np.float32, include=None) -> ModelBundle:
    """Build encoder plus the decoders named in ``include`` (default:
    those with positive weight; all three when weights is None)."""
    if include is None:
        if weights is None:
            include = DECODER_ROLES
        else:
            include = tuple(r for r in DECODER_ROLES if weights.weight(r) > 0)
    kwargs = {"seed": seed, "dtype": dtype}
    return ModelBundle(
        encoder=BUILDERS["encoder"](cfg, **kwargs),
        **{role: BUILDERS[role](cfg, **kwargs) for role in include},
    )


def _forward_losses(bundle, images, labels, config, channel, rngs, tape):
    """Shared graph: encoder -> channel -> active heads. Returns the
    per-role loss Vars keyed by role."""
    x = Var(np.asarray(images, dtype=bundle.encoder.dtype))
    z = bundle.encoder.forward(x, tape)
    zn = normalize_power(z, tape)
    losses = {}
    active = bundle.active_roles(config.weights)
    if "semantic" in active or "reconstruction" in active:
        y, h = transmit(zn, channel, rngs["channel"], tape)
        if h is not None:
            y = equalize(y, h, channel.h_floor, tape)
        if "semantic" in active:
            probs = bundle.semantic.forward(y, tape)
            losses["semantic"] = categorical_cross_entropy(probs, labels, tape)
        if "reconstruction" in active:
            xhat = bundle.reconstruction.forward(y, tape)
            losses["reconstruction"] = mean_squared_error(xhat, x.data, tape)
    if "sensing" in active:
        echo, echo_labels = make_sensing_batch(zn, config.sensing, rngs["sensing"], tape)
        sprobs = bundle.sensing.forward(echo, tape)
        losses["sensing"] = categorical_cross_entropy(sprobs, echo_labels, tape)
    return losses


def train_step(bundle: ModelBundle, batch, config: TrainConfig, rngs,
               optimizer: Adam, channel: ChannelParams | None = None) -> LossBreakdown:
    """One joint forward/backward pass and one optimizer update."""
    images, labels = batch
    if len(images) == 0:
        raise ValueError("train_step: empty batch")
    channel = config.channel if channel is None else channel
    tape = Tape(training=True, rng=rngs["dropout"])
    losses = _forward_losses(bundle, images, labels, config, channel, rngs, tape)

    w = config.weights
    terms = [(w.weight(role), var) for role, var in losses.items()]
    total_var = weighted_sum(terms, tape)
    if not np.isfinite(total_var.data):
        parts = {role: float(var.data) for role, var in losses.items()}
        raise TrainingDivergedError(
            f"non-finite total loss {float(total_var.data)} (components: {parts}); "
            "reduce the learning rate or check the input data"
        )

    grads = backward(tape, 1.0)
    optimizer.step(grads)

    sem = float(losses["semantic"].data) if "semantic" in losses else 0.0
    rec = float(losses["reconstruction"].data) if "reconstruction" in losses else 0.0
    sen = float(losses["sensing"].data) if "sensing" in losses else 0.0
    total = w.w_semantic * sem + w.w_reconstruction * rec + w.w_sensing * sen
    return LossBreakdown(sem, rec, sen, total)


def train(config: TrainConfig, dataset: Dataset):
    """Train a bundle on ``dataset``; returns (bundle, per-epoch history).

    Deterministic given the seed: two runs with equal (config, dataset)
    produce bit-identical parameters.
    """
    if len(dataset) == 0:
        raise ValueError("train: empty dataset")
    if dataset.images.shape[1:] != config.cfg.input_shape:
        raise ValueError(
            f"dataset images {dataset.images.shape[1:]} do not match "
            f"model input {config.cfg.input_shape}"
        )
    dtype = np.dtype(config.dtype)
    bundle = build_bundle(config.cfg, config.seed, config.weights, dtype)
    optimizer = Adam(bundle.active_parameters(config.weights), lr=config.learning_rate)
    rngs = {name: train_rng(config.seed, name) for name in TRAIN_STREAM}

    history: list[LossBreakdown] = []
    n = len(dataset)
    for _ in range(config.epochs):
        order = rngs["data"].permutation(n)
        sums = np.zeros(4)
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = (dataset.images[idx], dataset.labels[idx])
            channel = config.channel
            if config.train_snr_mode == "randomized":
                lo, hi = config.snr_range
                snr = float(rngs["snr"].uniform(lo, hi))
                channel = ChannelParams(config.channel.kind, snr,
                                        config.channel.fading, config.channel.h_floor)
            step_losses = train_step(bundle, batch, config, rngs, optimizer, channel)
            k = len(idx)
            sums += k * np.array([step_losses.semantic_ce, step_losses.reconstruction_mse,
                                  step_losses.sensing_ce, step_losses.total])
            seen += k
        history.append(LossBreakdown(*(sums / seen)))
    return bundle, history


def save_bundle(bundle: ModelBundle, directory):
    """Write one checkpoint file per model into ``directory``."""
    from pathlib import Path

    from .model import save_model

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for role, model in bundle.models().items():
        save_model(model, directory / f"{role}.npz")


def load_bundle(directory) -> ModelBundle:
    """Rebuild a bundle from the checkpoints present in ``directory``."""
    from pathlib import Path

    from .model import load_model

    directory = Path(directory)
    encoder_path = directory / "encoder.npz"
    if not encoder_path.exists():
        raise FileNotFoundError(f"no encoder checkpoint at {encoder_path}")
    kwargs = {}
    for role in DECODER_ROLES:
        path = directory / f"{role}.npz"
        if path.exists():
            kwargs[role] = load_model(path)
    return ModelBundle(encoder=load_model(encoder_path), **kwargs)


def evaluate(bundle: ModelBundle, dataset: Dataset, channel: ChannelParams,
             sensing: SensingScenario | None, rng, batch_size=256,
             return_predictions=False) -> MetricsRecord:
    """Inference-mode metrics over a dataset with fresh channel draws.

    Deterministic given ``rng``'s seed. Sensing accuracy is measured on
    fresh reflection draws when a scenario is given and the bundle has a
    sensing decoder.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("evaluate: empty dataset")
    n_c = bundle.encoder.output_shape[0]
    correct = 0
    sq_err_sum = 0.0
    sq_err_count = 0
    sensing_correct = 0
    sensing_count = 0
    task_preds = []
    sensing_preds = []
    sensing_labels_all = []

    for start in range(0, n, batch_size):
        images = dataset.images[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        z = bundle.encoder.forward(images)
        zn = normalize_power(z)
        y, h = transmit(zn, channel, rng)
        if h is not None:
            y = equalize(y, h, channel.h_floor)
        if bundle.semantic is not None:
            probs = bundle.semantic.forward(y).data
            pred = probs.argmax(axis=1)
            correct += int((pred == labels).sum())
            if return_predictions:
                task_preds.append(pred)
        if bundle.reconstruction is not None:
            xhat = bundle.reconstruction.forward(y).data
            diff = xhat - images.astype(xhat.dtype)
            sq_err_sum += float((diff * diff).sum())
            sq_err_count += diff.size
        if sensing is not None and bundle.sensing is not None:
            echo, echo_labels = make_sensing_batch(zn, sensing, rng)
            spred = bundle.sensing.forward(echo).data.argmax(axis=1)
            sensing_correct += int((spred == echo_labels).sum())
            sensing_count += len(echo_labels)
            if return_predictions:
                sensing_preds.append(spred)
                sensing_labels_all.append(echo_labels)

    record = MetricsRecord(
        task_accuracy=correct / n if bundle.semantic is not None else None,
        reconstruction_mse=sq_err_sum / sq_err_count if sq_err_count else None,
        sensing_accuracy=sensing_correct / sensing_count if sensing_count else None,
        snr_db=channel.snr_db,
        n_c=n_c,
        sample_count=n,
    )
    if return_predictions:
        extras = {
            "task_predictions": np.concatenate(task_preds) if task_preds else None,
            "sensing_predictions": np.concatenate(sensing_preds) if sensing_preds else None,
            "sensing_labels": np.concatenate(sensing_labels_all) if sensing_labels_all else None,
        }
        return record, extras
    return record
