"""White-box FGSM attack on encoder inputs under a PSR budget.

PSR (perturbation-to-signal ratio, dB) is perturbation energy over
clean-input energy per sample. For FGSM the perturbation is
eps * sign(grad), so ||delta||^2 = eps^2 * d over d elements and the
budget solves to eps = sqrt(10^(psr/10) * ||x||^2 / d). The gradient is
taken through encoder -> normalization -> one frozen channel draw ->
semantic decoder, making the attack a pure function of the input; the
same frozen draw is used to score the perturbed batch, and the Gaussian
baseline follows the identical protocol with a random direction scaled
to the exact PSR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, draw_fading, equalize, noise_std, normalize_power
from .errors import ZeroPowerError
from .losses import categorical_cross_entropy
from .tape import Tape, Var, backward
from .training import ModelBundle, evaluate

PSR_CAP_DB = 300.0

# rng stream ids (disjoint from models/training streams)
ATTACK_STREAM_CLEAN = 20
ATTACK_STREAM_POINT = 21


@dataclass
class AttackParams:
    kind: str = "fgsm"  # "fgsm" | "gaussian"
    psr_db: float = -10.0

    def __post_init__(self):
        self.kind = str(self.kind).lower()
        if self.kind not in ("fgsm", "gaussian"):
            raise ValueError(f"attack kind {self.kind!r}: expected 'fgsm' or 'gaussian'")
        self.psr_db = float(self.psr_db)
        if not np.isfinite(self.psr_db):
            raise ValueError(f"psr_db must be finite, got {self.psr_db}")


def _sample_axes(x):
    # batched on axis 0 for (B, n) vectors and (B, H, W, C) images;
    # a bare (n,) or (H, W, C) array is a single sample
    if x.ndim in (2, 4):
        return tuple(range(1, x.ndim))
    return tuple(range(x.ndim))


def _sample_energy(x):
    axes = _sample_axes(x)
    energy = (x.astype(np.float64) ** 2).sum(axis=axes)
    if np.any(energy == 0.0):
        raise ZeroPowerError("attack budget undefined on an all-zero sample")
    return energy, axes


def psr_to_epsilon(psr_db, x):
    """Per-sample FGSM step size meeting the PSR budget exactly."""
    x = np.asarray(x)
    energy, axes = _sample_energy(x)
    d = int(np.prod([x.shape[a] for a in axes]))
    psr = np.clip(psr_db, -PSR_CAP_DB, PSR_CAP_DB)
    eps = np.sqrt(10.0 ** (psr / 10.0) * energy / d)
    return float(eps) if np.isscalar(energy) or energy.ndim == 0 else eps


def realized_psr_db(x, x_pert):
    """Recompute the PSR of a produced perturbation (round-trip check)."""
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(x_pert, dtype=np.float64) - x
    energy, axes = _sample_energy(x)
    pert = (delta ** 2).sum(axis=axes)
    return 10.0 * np.log10(pert / energy)


def fgsm(loss_fn, x, epsilon):
    """x_adv = x + eps * sign(grad_x loss); sign(0) = 0.

    ``loss_fn(x_var, tape)`` must return a scalar Var differentiable
    w.r.t. the input (any stochastic draws frozen inside the closure).
    ``epsilon`` is a scalar or per-sample vector.
    """
    x = np.asarray(x)
    tape = Tape(training=False)
    x_var = Var(x)
    loss_fn(x_var, tape)
    grads = backward(tape, 1.0)
    grad = grads.get(x_var)
    if grad is None:
        raise ValueError("fgsm: loss gradient w.r.t. the input is unavailable")
    eps = np.asarray(epsilon, dtype=x.dtype)
    if eps.ndim == 1:
        eps = eps.reshape((-1,) + (1,) * (x.ndim - 1))
    return x + eps * np.sign(grad).astype(x.dtype, copy=False)


def gaussian_perturb(x, psr_db, rng):
    """Random perturbation scaled to meet the PSR budget exactly."""
    x = np.asarray(x)
    energy, axes = _sample_energy(x)
    psr = np.clip(psr_db, -PSR_CAP_DB, PSR_CAP_DB)
    target = np.sqrt(10.0 ** (psr / 10.0) * energy)
    noise = rng.standard_normal(x.shape)
    norm = np.sqrt((noise ** 2).sum(axis=axes, keepdims=True))
    norm = np.maximum(norm, 1e-300)
    delta = noise * (np.asarray(target).reshape(norm.shape) / norm)
    return x + delta.astype(x.dtype, copy=False)


def frozen_semantic_chain(bundle: ModelBundle, labels, channel: ChannelParams, rng):
    """Loss closure through one frozen channel draw.

    Draws fading and noise for the batch once; returns ``loss_fn`` (a
    pure function of the input) plus the frozen draws so the caller can
    score predictions under the same channel realization.
    """
    if bundle.semantic is None:
        raise ValueError("attack needs a semantic decoder in the bundle")
    labels = np.asarray(labels)
    n_c = bundle.encoder.output_shape[0]
    dtype = bundle.encoder.dtype
    shape = (len(labels), n_c)
    h = None
    if channel.kind == "rayleigh":
        h = draw_fading(rng, shape, channel.fading).astype(dtype, copy=False)
    noise = (noise_std(channel.snr_db) * rng.standard_normal(shape)).astype(dtype, copy=False)

    def received(zn_var, tape):
        y_data = zn_var.data + noise if h is None else h * zn_var.data + noise
        y = Var(y_data)
        if tape is not None:
            if h is None:
                tape.record("frozen_channel", (zn_var,), y, lambda g: (g,))
            else:
                tape.record("frozen_channel", (zn_var,), y, lambda g: (g * h,))
        if h is not None:
            y = equalize(y, h, channel.h_floor, tape)
        return y

    def predict(x):
        z = bundle.encoder.forward(x)
        y = received(normalize_power(z), None)
        return bundle.semantic.forward(y).data.argmax(axis=1)

    def loss_fn(x_var, tape):
        z = bundle.encoder.forward(x_var, tape)
        zn = normalize_power(z, tape)
        y = received(zn, tape)
        probs = bundle.semantic.forward(y, tape)
        return categorical_cross_entropy(probs, labels, tape)

    return loss_fn, predict


def attack_rng(seed, point_index=None):
    if point_index is None:
        return np.random.default_rng(np.random.SeedSequence((seed, ATTACK_STREAM_CLEAN)))
    return np.random.default_rng(np.random.SeedSequence((seed, ATTACK_STREAM_POINT, point_index)))


def evaluate_attack(bundle: ModelBundle, dataset, grid, channel: ChannelParams,
                    seed=1, batch_size=128):
    """Task accuracy over the test set per attack grid point.

    Returns one row dict per point plus a leading clean baseline row
    (attack "none", psr empty). The clean row reuses :func:`evaluate`
    with the derived clean-stream rng, so it matches a direct evaluation
    at the same seed exactly.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("evaluate_attack: empty attack grid")
    n = len(dataset)
    n_c = bundle.encoder.output_shape[0]

    clean = evaluate(bundle, dataset, channel, None, attack_rng(seed))
    rows = [{
        "channel": channel.kind, "snr_db": channel.snr_db, "n_c": n_c,
        "psr_db": None, "task_accuracy": clean.task_accuracy,
        "reconstruction_mse": None, "sensing_accuracy": None,
        "seed": seed, "samples": n, "attack": "none",
    }]

    for i, params in enumerate(grid):
        rng = attack_rng(seed, i)
        correct = 0
        for start in range(0, n, batch_size):
            images = dataset.images[start:start + batch_size]
            labels = dataset.labels[start:start + batch_size]
            loss_fn, predict = frozen_semantic_chain(bundle, labels, channel, rng)
            if params.kind == "fgsm":
                eps = psr_to_epsilon(params.psr_db, images)
                x_pert = fgsm(loss_fn, images, eps)
            else:
                x_pert = gaussian_perturb(images, params.psr_db, rng)
            correct += int((predict(x_pert) == labels).sum())
        rows.append({
            "channel": channel.kind, "snr_db": channel.snr_db, "n_c": n_c,
            "psr_db": params.psr_db, "task_accuracy": correct / n,
            "reconstruction_mse": None, "sensing_accuracy": None,
            "seed": seed, "samples": n, "attack": params.kind,
        })
    return rows
