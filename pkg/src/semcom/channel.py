"""Stochastic channel between encoder and decoders.

Real-valued signals; SNR is defined per dimension after power
normalization, so noise variance is 10^(-snr_db/10) on a unit-power
input. Rayleigh fading is a per-dimension positive magnitude gain with
unit second moment (``fading="per-block"`` draws one gain per sample
instead); the receiver equalizes with perfect CSI. All operations are
differentiable pass-throughs for end-to-end training: the noise and
fading draws are recorded as constants.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignalWarning, UnnormalizedInputWarning
from .tape import Tape, Var

SNR_CAP_DB = 300.0
NORM_FLOOR = 1e-12
CHANNEL_KINDS = ("awgn", "rayleigh")
FADING_MODES = ("per-dim", "per-block")
# Rayleigh scale for unit second moment: E[h^2] = 2*scale^2 = 1
RAYLEIGH_SCALE = 1.0 / np.sqrt(2.0)


@dataclass
class ChannelParams:
    kind: str = "awgn"
    snr_db: float = 10.0
    fading: str = "per-dim"
    h_floor: float = 1e-3

    def __post_init__(self):
        self.kind = str(self.kind).lower()
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"channel kind {self.kind!r}: expected one of {CHANNEL_KINDS}")
        self.snr_db = float(self.snr_db)
        if not np.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if self.fading not in FADING_MODES:
            raise ValueError(f"fading {self.fading!r}: expected one of {FADING_MODES}")


def noise_std(snr_db) -> float:
    """Per-dimension noise standard deviation for a unit-power signal."""
    snr = float(np.clip(snr_db, -SNR_CAP_DB, SNR_CAP_DB))
    return float(np.sqrt(10.0 ** (-snr / 10.0)))


def draw_fading(rng, signal_shape, fading="per-dim"):
    """Rayleigh magnitude gains with unit second moment."""
    if fading == "per-dim":
        shape = signal_shape
    elif fading == "per-block":
        shape = (signal_shape[0], 1) if len(signal_shape) == 2 else (1,)
    else:
        raise ValueError(f"fading {fading!r}: expected one of {FADING_MODES}")
    return rng.rayleigh(scale=RAYLEIGH_SCALE, size=shape)


def normalize_power(z, tape: Tape | None = None):
    """Scale each sample so its mean squared value per dimension is 1.

    An all-zero sample would be unscalable; the norm gets a 1e-12 floor
    and a DegenerateSignalWarning is issued for it.
    """
    is_var = isinstance(z, Var)
    arr = z.data if is_var else np.asarray(z)
    mean_sq = (arr * arr).mean(axis=-1, keepdims=True)
    if np.any(mean_sq < NORM_FLOOR ** 2):
        warnings.warn(
            "normalize_power: zero-power sample hit the 1e-12 norm floor",
            DegenerateSignalWarning,
            stacklevel=2,
        )
    root = np.sqrt(mean_sq)
    norm = root + NORM_FLOOR
    y = arr / norm
    if not is_var:
        return y
    out = Var(y.astype(arr.dtype, copy=False))
    if tape is None:
        return out
    n = arr.shape[-1]
    safe_root = np.maximum(root, NORM_FLOOR)

    def bwd(g):
        dot = (g * arr).sum(axis=-1, keepdims=True)
        return (g / norm - arr * (dot / (n * safe_root * norm * norm)),)

    return tape.record("normalize_power", (z,), out, bwd)


def _check_normalized(arr, strict):
    power = (arr * arr).mean(axis=-1)
    off = np.abs(power - 1.0) > 0.10
    if np.any(off):
        worst = float(power.reshape(-1)[np.argmax(np.abs(power - 1.0))])
        msg = (
            f"transmit: input not power-normalized (worst sample power {worst:.4g}, "
            "expected 1 within 10%)"
        )
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, UnnormalizedInputWarning, stacklevel=3)


def transmit(x, params: ChannelParams, rng, tape: Tape | None = None, strict=False):
    """Send ``x`` through the configured channel.

    Returns ``(y, h)`` where ``h`` is the fading realization (None for
    AWGN). AWGN: y = x + n. Rayleigh: y = h*x + n, fresh h per call.
    The gradient w.r.t. x is the identity (AWGN) or h (Rayleigh); the
    draws are constants.
    """
    is_var = isinstance(x, Var)
    arr = x.data if is_var else np.asarray(x)
    _check_normalized(arr, strict)
    sigma = noise_std(params.snr_db)
    h = None
    if params.kind == "rayleigh":
        h = draw_fading(rng, arr.shape, params.fading).astype(arr.dtype, copy=False)
    noise = (sigma * rng.standard_normal(arr.shape)).astype(arr.dtype, copy=False)
    y = arr + noise if h is None else h * arr + noise
    if not is_var:
        return y, h
    out = Var(y)
    if tape is None:
        return out, h

    if h is None:
        def bwd(g):
            return (g,)
    else:
        def bwd(g):
            return (g * h,)

    tape.record("transmit", (x,), out, bwd)
    return out, h


def equalize(y, h, h_floor=1e-3, tape: Tape | None = None):
    """Zero-forcing equalization with perfect CSI: y / max(h, h_floor)."""
    if h is None:
        raise ValueError("equalize: missing fading realization (AWGN output needs none)")
    is_var = isinstance(y, Var)
    arr = y.data if is_var else np.asarray(y)
    denom = np.maximum(h, h_floor).astype(arr.dtype, copy=False)
    out_data = arr / denom
    if not is_var:
        return out_data
    out = Var(out_data)
    if tape is None:
        return out

    def bwd(g):
        return (g / denom,)

    return tape.record("equalize", (y,), out, bwd)
