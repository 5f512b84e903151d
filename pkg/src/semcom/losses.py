"""Loss functions for the three receiver tasks.

Each loss accepts a Var (taped, differentiable) or a plain ndarray and
returns the same kind. Cross-entropy takes probabilities (the decoders
end in softmax) with the true-class probability floored at 1e-12, so the
loss stays finite for confidently wrong predictions; combined with the
max-shifted softmax this keeps the whole head stable at large logits.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError
from .tape import Tape, Var

PROB_FLOOR = 1e-12


def categorical_cross_entropy(probs, labels, tape: Tape | None = None):
    """Mean over the batch of -log(probability of the true class)."""
    is_var = isinstance(probs, Var)
    p = probs.data if is_var else np.asarray(probs)
    labels = np.asarray(labels)
    if p.ndim != 2:
        raise ShapeMismatchError(f"cross-entropy expects (batch, classes) probabilities, got {p.shape}")
    B, K = p.shape
    if labels.shape != (B,):
        raise ShapeMismatchError(f"labels shape {labels.shape} does not match batch size {B}")
    if labels.min() < 0 or labels.max() >= K:
        bad = labels[(labels < 0) | (labels >= K)][0]
        raise ValueError(f"label {bad} out of range [0, {K - 1}]")

    p_true = p[np.arange(B), labels]
    value = np.asarray(-np.log(np.maximum(p_true, PROB_FLOOR)).mean(), dtype=p.dtype)
    if not is_var:
        return value
    out = Var(value)
    if tape is None:
        return out

    def bwd(g):
        dp = np.zeros_like(p)
        live = p_true > PROB_FLOOR
        rows = np.arange(B)[live]
        dp[rows, labels[live]] = -g / (B * p_true[live])
        return (dp,)

    return tape.record("categorical_ce", (probs,), out, bwd)


def mean_squared_error(pred, target, tape: Tape | None = None):
    """Mean over all elements of the squared difference."""
    is_var = isinstance(pred, Var)
    a = pred.data if is_var else np.asarray(pred)
    t = target.data if isinstance(target, Var) else np.asarray(target)
    if a.shape != t.shape:
        raise ShapeMismatchError(f"MSE shapes differ: {a.shape} vs {t.shape}")
    diff = a - t
    value = np.asarray((diff * diff).mean(), dtype=a.dtype)
    if not is_var:
        return value
    out = Var(value)
    if tape is None:
        return out
    scale = 2.0 / diff.size

    def bwd(g):
        return (g * scale * diff,)

    return tape.record("mse", (pred,), out, bwd)


def weighted_sum(terms, tape: Tape | None = None):
    """Combine scalar loss Vars: sum of weight * value.

    ``terms`` is a sequence of (weight, Var) pairs; weights are plain
    floats treated as constants.
    """
    if not terms:
        raise ValueError("weighted_sum needs at least one term")
    weights = [float(w) for w, _ in terms]
    vars_ = [v for _, v in terms]
    value = vars_[0].data.dtype.type(0)
    for w, v in zip(weights, vars_):
        value = value + v.data.dtype.type(w) * v.data
    out = Var(np.asarray(value))
    if tape is None:
        return out

    def bwd(g):
        return tuple(np.asarray(g * v.data.dtype.type(w)) for w, v in zip(weights, vars_))

    return tape.record("weighted_sum", tuple(vars_), out, bwd)
