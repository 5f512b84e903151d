"""Reverse-mode automatic differentiation over dense arrays.

Values flowing through a taped computation are wrapped in :class:`Var`
(a NumPy array plus an identity used for gradient routing). Every
differentiable operation appends one :class:`OpRecord` to a
:class:`Tape`; :func:`backward` replays the records in exact reverse
execution order and accumulates gradients, so fan-out (one value feeding
several consumers) is handled by summation.

A tape also carries the Training/Inference mode flag and the RNG used by
stochastic layers (dropout). With ``tape=None`` every operation in the
package still computes its forward value; nothing is recorded and
nothing can be differentiated, which is the inference fast path.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import EmptyTapeError, SeedShapeError


class Var:
    """A node in a taped computation: an ndarray plus routing identity."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Var):
    """A trainable :class:`Var` with a stable name for checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(data)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class OpRecord:
    """One executed operation: inputs, output, and its backward closure.

    ``backward(grad_out)`` returns one gradient per input (``None`` for
    inputs that do not receive gradient, e.g. frozen noise).
    """

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: Sequence[Var], output: Var,
                 backward: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of executed operations plus the mode flag.

    In Training mode dropout draws masks from ``rng``; in Inference mode
    dropout is the identity. A tape is single-writer: one forward pass
    followed by at most one backward pass.
    """

    def __init__(self, training: bool = False, rng: np.random.Generator | None = None):
        self.training = training
        self.rng = rng
        self.records: list[OpRecord] = []

    def record(self, op, inputs, output, backward):
        self.records.append(OpRecord(op, inputs, output, backward))
        return output

    def __len__(self):
        return len(self.records)


def backward(tape: Tape, loss_gradient=1.0) -> dict[Var, np.ndarray]:
    """Run reverse accumulation over ``tape``.

    The tape must end in a scalar loss; ``loss_gradient`` is the seed
    (1.0 for a plain loss). Returns a map from every leaf Var that
    received gradient (parameters and the original network inputs) to
    its gradient array; gradients of intermediate values are freed as
    soon as they have been propagated. Stochastic draws recorded as
    constants (channel noise, fading, dropout masks) receive no
    gradient.
    """
    if not tape.records:
        raise EmptyTapeError("backward on an empty tape: no operations recorded")

    root = tape.records[-1].output
    seed = np.asarray(loss_gradient, dtype=root.data.dtype)
    if seed.shape != root.data.shape:
        raise SeedShapeError(
            f"seed shape {seed.shape} does not match final output shape {root.data.shape}"
        )

    grads: dict[Var, np.ndarray] = {root: seed}
    for rec in reversed(tape.records):
        # pop: once an op has consumed its output gradient the entry is
        # dead (outputs are produced exactly once), so free it eagerly
        g_out = grads.pop(rec.output, None)
        if g_out is None:
            continue
        in_grads = rec.backward(g_out)
        for var, g in zip(rec.inputs, in_grads):
            if g is None:
                continue
            acc = grads.get(var)
            if acc is None:
                grads[var] = g
            else:
                grads[var] = acc + g
    return grads
