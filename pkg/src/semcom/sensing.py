"""Monostatic sensing environment.

The transmitted (power-normalized) latent reflects off a possibly
present target and returns through a round-trip channel: present means
r = g*x + n with a Rayleigh-magnitude round-trip gain of unit second
moment, absent means r = n. The sensing decoder reads the raw echo (no
equalization: the target's channel is unknown by definition).

The classical baseline is an energy detector thresholding ||r||^2; its
Monte-Carlo accuracy is the reference the learned detector is measured
against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import FADING_MODES, draw_fading, noise_std
from .tape import Tape, Var


@dataclass
class SensingScenario:
    target_present: bool = True
    sensing_snr_db: float = 10.0
    presence_prior: float = 0.5
    fading: str = "per-dim"

    def __post_init__(self):
        self.sensing_snr_db = float(self.sensing_snr_db)
        if not np.isfinite(self.sensing_snr_db):
            raise ValueError(f"sensing_snr_db must be finite, got {self.sensing_snr_db}")
        self.presence_prior = float(self.presence_prior)
        if not 0.0 <= self.presence_prior <= 1.0:
            raise ValueError(f"presence_prior must be in [0, 1], got {self.presence_prior}")
        if self.fading not in FADING_MODES:
            raise ValueError(f"fading {self.fading!r}: expected one of {FADING_MODES}")


def simulate_reflection(x, scenario: SensingScenario, rng):
    """One echo for a fixed presence state.

    Returns ``(r, label)`` with label 1 when the target is present
    (r = g*x + n) and 0 when absent (r = n, independent of x).
    """
    arr = np.asarray(x)
    sigma = noise_std(scenario.sensing_snr_db)
    if scenario.target_present:
        g = draw_fading(rng, arr.shape, scenario.fading)
        noise = sigma * rng.standard_normal(arr.shape)
        return g * arr + noise, 1
    noise = sigma * rng.standard_normal(arr.shape)
    return noise, 0


def make_sensing_batch(latents, scenario: SensingScenario, rng, tape: Tape | None = None):
    """Per-sample independent presence draws over a batch of latents.

    Gains and noise are drawn for every row regardless of the presence
    outcome, so the RNG consumption never depends on the labels. The
    gradient w.r.t. the latents is presence * g (zero for absent rows).
    """
    is_var = isinstance(latents, Var)
    arr = latents.data if is_var else np.asarray(latents)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"make_sensing_batch: expected a nonempty (batch, n_c) array, got {arr.shape}")
    B = arr.shape[0]
    presence = rng.random(B) < scenario.presence_prior
    gains = draw_fading(rng, arr.shape, scenario.fading)
    sigma = noise_std(scenario.sensing_snr_db)
    noise = (sigma * rng.standard_normal(arr.shape)).astype(arr.dtype, copy=False)
    effective = (presence[:, None] * gains).astype(arr.dtype, copy=False)
    r = effective * arr + noise
    labels = presence.astype(np.int64)
    if not is_var:
        return r, labels
    out = Var(r)
    if tape is None:
        return out, labels

    def bwd(g):
        return (g * effective,)

    tape.record("sensing_reflection", (latents,), out, bwd)
    return out, labels


def _best_threshold(energies, labels):
    """Threshold on energy maximizing accuracy (predict present above)."""
    order = np.argsort(energies, kind="stable")
    e = energies[order]
    y = labels[order]
    n = y.size
    ones_total = int(y.sum())
    # cut after position i: first i predicted absent, rest present
    zeros_prefix = np.concatenate(([0], np.cumsum(y == 0)))
    ones_suffix = ones_total - np.concatenate(([0], np.cumsum(y == 1)))
    correct = zeros_prefix + ones_suffix
    best = int(np.argmax(correct))
    if best == 0:
        return -np.inf
    if best == n:
        return np.inf
    return 0.5 * (e[best - 1] + e[best])


def energy_detector_accuracy(latents, sensing_snr_db, presence_prior=0.5, rng=None,
                             fading="per-dim", rounds=20, eval_rounds=20):
    """Monte-Carlo accuracy of the energy-detection oracle.

    Simulates echoes for the given latents, fits the accuracy-optimal
    threshold on one set of draws and reports accuracy on a fresh set.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    latents = np.asarray(latents, dtype=np.float64)
    scenario = SensingScenario(sensing_snr_db=sensing_snr_db,
                               presence_prior=presence_prior, fading=fading)

    def collect(n_rounds):
        es, ys = [], []
        for _ in range(n_rounds):
            r, labels = make_sensing_batch(latents, scenario, rng)
            es.append((r * r).sum(axis=1))
            ys.append(labels)
        return np.concatenate(es), np.concatenate(ys)

    e_fit, y_fit = collect(rounds)
    threshold = _best_threshold(e_fit, y_fit)
    e_ev, y_ev = collect(eval_rounds)
    predicted = (e_ev > threshold).astype(np.int64)
    return float((predicted == y_ev).mean()), threshold
