"""Gradient verification against central finite differences.

Gradient-check mode is 64-bit only: the comparison at relative error
1e-6 is meaningless in float32. Stochastic draws are frozen by
reconstructing the tape RNG from the same seed for every evaluation, so
dropout masks (and any noise a custom chain draws from ``tape.rng``)
are identical across the analytic pass and every perturbed pass.
"""

from __future__ import annotations

import numpy as np

from .errors import NonScalarLossError
from .losses import categorical_cross_entropy, mean_squared_error
from .tape import Tape, Var, backward

REL_ERR_DENOM_FLOOR = 1e-12


def _sum_all(x: Var, tape: Tape | None):
    value = np.asarray(x.data.sum(), dtype=x.data.dtype)
    out = Var(value)
    if tape is None:
        return out

    def bwd(g):
        return (np.full_like(x.data, g),)

    return tape.record("sum_all", (x,), out, bwd)


def _loss_closure(model, loss, labels, target):
    if callable(loss):
        return loss
    if loss == "sum":
        return lambda x, tape: _sum_all(model.forward(x, tape), tape)
    if loss == "mse":
        tgt = np.zeros((1,) + model.output_shape) if target is None else np.asarray(target)
        return lambda x, tape: mean_squared_error(model.forward(x, tape), tgt, tape)
    if loss == "ce":
        if labels is None:
            raise ValueError("loss='ce' requires labels")
        lab = np.asarray(labels)
        return lambda x, tape: categorical_cross_entropy(model.forward(x, tape), lab, tape)
    raise ValueError(f"unknown loss id {loss!r}: expected 'sum', 'mse', 'ce' or a callable")


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), REL_ERR_DENOM_FLOOR)


def grad_check_fn(fn, params, x, *, fd_step=1e-5, seed=0, max_entries=None,
                  entry_seed=0, check_input=True) -> float:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn(x_var, tape)`` must return a scalar Var and be deterministic
    given the tape (stochastic draws must come from ``tape.rng`` or be
    re-seeded inside). Checks every entry of every parameter and of the
    input, or a random subset of ``max_entries`` per tensor. Returns the
    maximum elementwise relative error.
    """
    x = np.array(x, dtype=np.float64)
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(
                f"gradient-check mode requires float64 parameters, got {p.data.dtype} for {p!r}"
            )

    x_var = Var(x)
    tape = Tape(training=True, rng=np.random.default_rng(seed))
    out = fn(x_var, tape)
    if out.data.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {out.data.shape}")
    grads = backward(tape, 1.0)
    x_grad = grads.get(x_var) if check_input else None

    def loss_value():
        eval_tape = Tape(training=True, rng=np.random.default_rng(seed))
        return float(fn(Var(x), eval_tape).data)

    entry_rng = np.random.default_rng(entry_seed)

    def entries_of(arr):
        n = arr.size
        if max_entries is None or n <= max_entries:
            return range(n)
        return entry_rng.choice(n, size=max_entries, replace=False)

    def fd_and_compare(arr, analytic):
        worst = 0.0
        flat = (np.zeros_like(arr) if analytic is None else analytic).reshape(-1)
        for k in entries_of(arr):
            orig = arr.flat[k]
            arr.flat[k] = orig + fd_step
            hi = loss_value()
            arr.flat[k] = orig - fd_step
            lo = loss_value()
            arr.flat[k] = orig
            fd = (hi - lo) / (2.0 * fd_step)
            worst = max(worst, relative_error(float(flat[k]), fd))
        return worst

    max_err = 0.0
    for p in params:
        max_err = max(max_err, fd_and_compare(p.data, grads.get(p)))
    if check_input:
        max_err = max(max_err, fd_and_compare(x, x_grad))
    return max_err


def grad_check(model, x, loss="sum", *, labels=None, target=None, fd_step=1e-5,
               seed=0, max_entries=None, check_input=True) -> float:
    """Gradient check a whole model under a named loss head.

    Loss ids: ``sum`` (sum of outputs), ``mse`` (against ``target`` or
    zeros), ``ce`` (categorical cross-entropy on probability outputs,
    needs ``labels``); or pass a callable ``fn(x_var, tape) -> Var``.
    """
    if model.dtype != np.float64:
        raise ValueError(
            f"gradient-check mode requires a float64 model, got {model.dtype}"
        )
    fn = _loss_closure(model, loss, labels, target)
    return grad_check_fn(fn, model.parameters(), x, fd_step=fd_step, seed=seed,
                         max_entries=max_entries, check_input=check_input)
