"""Layer set for the fixed encoder/decoder architectures.

Seven kinds: Conv2D, MaxPool2D, Dropout, Flatten, Dense, Reshape,
Activation. Shapes are per-sample (batch dimension implicit and always
leading); images are channels-last. Each layer's ``forward`` records a
single tape entry whose closure owns every cached array, so a built
model itself is immutable during forward/backward and can be evaluated
concurrently from several threads.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import ShapeMismatchError, UnknownActivationError
from .tape import Parameter, Tape, Var

ACTIVATIONS = ("relu", "linear", "softmax")


def _canon_activation(name):
    low = str(name).lower()
    if low not in ACTIVATIONS:
        raise UnknownActivationError(
            f"unknown activation {name!r}: expected one of {ACTIVATIONS}"
        )
    return low


def _act_forward(name, z):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    return z


def _act_backward(name, g, out):
    """Gradient through an activation given its forward *output*."""
    if name == "relu":
        return g * (out > 0)
    if name == "softmax":
        return out * (g - (g * out).sum(axis=-1, keepdims=True))
    return g


class Layer:
    """Base layer: hyperparameters at construction, parameters at build."""

    kind = "Layer"

    def __init__(self):
        self.params: list[Parameter] = []
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape, rng, dtype, name=""):
        """Validate ``input_shape``, allocate parameters, return output shape."""
        self.input_shape = tuple(input_shape)
        self.output_shape = self._build(self.input_shape, rng, dtype, name)
        return self.output_shape

    def _build(self, input_shape, rng, dtype, name):
        raise NotImplementedError

    def forward(self, x: Var, tape: Tape | None = None) -> Var:
        raise NotImplementedError

    def spec(self) -> dict:
        """Self-description used by the structural audit and checkpoints."""
        raise NotImplementedError

    def _check_input(self, x):
        got = tuple(x.data.shape[1:])
        if got != self.input_shape:
            raise ShapeMismatchError(
                f"{self.kind}: input shape {got} does not match built shape {self.input_shape}"
            )


class Conv2D(Layer):
    """3x3 convolution, stride 1, SAME padding, fused activation.

    The spatial grid is preserved; only pooling layers shrink it. The
    forward pass gathers padded patches into columns (hot kernel) and
    runs one GEMM per batch; the backward pass is the transposed pair of
    GEMMs plus the scatter-add adjoint of the patch gather.
    """

    kind = "Conv2D"

    def __init__(self, filters, kernel_size=(3, 3), activation="relu"):
        super().__init__()
        self.filters = int(filters)
        self.kernel_size = tuple(int(k) for k in kernel_size)
        if self.filters < 1:
            raise ValueError(f"Conv2D: filters must be positive, got {filters}")
        kh, kw = self.kernel_size
        if kh < 1 or kw < 1 or kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(
                f"Conv2D: kernel size must be odd and positive for SAME padding, got {self.kernel_size}"
            )
        self.activation = _canon_activation(activation)

    def _build(self, input_shape, rng, dtype, name):
        if len(input_shape) != 3:
            raise ShapeMismatchError(
                f"Conv2D: expected (H, W, C) input, got shape {input_shape}"
            )
        H, W, C = input_shape
        kh, kw = self.kernel_size
        fan_in = kh * kw * C
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(kh, kw, C, self.filters)).astype(dtype)
        b = np.zeros(self.filters, dtype=dtype)
        self.params = [Parameter(w, f"{name}/W"), Parameter(b, f"{name}/b")]
        return (H, W, self.filters)

    def forward(self, x, tape=None):
        self._check_input(x)
        w_p, b_p = self.params
        B = x.data.shape[0]
        H, W, C = self.input_shape
        kh, kw = self.kernel_size
        ph, pw = kh // 2, kw // 2

        xpad = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        cols = backend.im2col(xpad, kh, kw).reshape(B * H * W, kh * kw * C)
        wmat = w_p.data.reshape(kh * kw * C, self.filters)
        z = cols @ wmat + b_p.data
        a = _act_forward(self.activation, z)
        out = Var(a.reshape(B, H, W, self.filters))
        if tape is None:
            return out

        act = self.activation
        act_out = a if act != "linear" else None

        def bwd(g):
            gz = g.reshape(B * H * W, self.filters)
            if act != "linear":
                gz = _act_backward(act, gz, act_out)
            dw = (cols.T @ gz).reshape(w_p.data.shape)
            db = gz.sum(axis=0)
            dcols = (gz @ wmat.T).reshape(B, H * W, kh * kw * C)
            gpad = backend.col2im_add(np.ascontiguousarray(dcols), H + 2 * ph, W + 2 * pw, C, kh, kw)
            gx = gpad[:, ph:ph + H, pw:pw + W, :]
            return np.ascontiguousarray(gx), dw, db

        return tape.record("conv2d", (x, w_p, b_p), out, bwd)

    def spec(self):
        return {
            "kind": self.kind,
            "filters": self.filters,
            "kernel_size": list(self.kernel_size),
            "activation": self.activation,
        }

    @classmethod
    def from_spec(cls, d):
        return cls(d["filters"], tuple(d["kernel_size"]), d["activation"])


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2; first maximum wins on ties."""

    kind = "MaxPool2D"

    def __init__(self, pool_size=(2, 2)):
        super().__init__()
        self.pool_size = tuple(int(k) for k in pool_size)
        if self.pool_size != (2, 2):
            raise ValueError(f"MaxPool2D: only (2, 2) pooling is supported, got {self.pool_size}")

    def _build(self, input_shape, rng, dtype, name):
        if len(input_shape) != 3:
            raise ShapeMismatchError(
                f"MaxPool2D: expected (H, W, C) input, got shape {input_shape}"
            )
        H, W, C = input_shape
        if H % 2 or W % 2:
            raise ShapeMismatchError(
                f"MaxPool2D: spatial dims must be even to pool by (2, 2), got shape {input_shape}"
            )
        return (H // 2, W // 2, C)

    def forward(self, x, tape=None):
        self._check_input(x)
        data = np.ascontiguousarray(x.data)
        pooled, idx = backend.maxpool2_forward(data)
        out = Var(pooled)
        if tape is None:
            return out

        def bwd(g):
            return (backend.maxpool2_backward(np.ascontiguousarray(g), idx),)

        return tape.record("maxpool2d", (x,), out, bwd)

    def spec(self):
        return {"kind": self.kind, "pool_size": list(self.pool_size)}

    @classmethod
    def from_spec(cls, d):
        return cls(tuple(d["pool_size"]))


class Dropout(Layer):
    """Inverted dropout: identity in inference, rescaled mask in training."""

    kind = "Dropout"

    def __init__(self, rate=0.25):
        super().__init__()
        rate = float(rate)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"Dropout: rate must be in [0, 1), got {rate}")
        self.rate = rate

    def _build(self, input_shape, rng, dtype, name):
        return tuple(input_shape)

    def forward(self, x, tape=None):
        self._check_input(x)
        if tape is None or not tape.training or self.rate == 0.0:
            out = Var(x.data)
            if tape is not None:
                tape.record("dropout_id", (x,), out, lambda g: (g,))
            return out
        if tape.rng is None:
            raise ValueError("Dropout: training tape has no rng to draw masks from")
        keep = 1.0 - self.rate
        scale = np.asarray(1.0 / keep, dtype=x.data.dtype)
        mask = (tape.rng.random(x.data.shape) >= self.rate).astype(x.data.dtype)
        out = Var(x.data * mask * scale)

        def bwd(g):
            return (g * mask * scale,)

        return tape.record("dropout", (x,), out, bwd)

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    @classmethod
    def from_spec(cls, d):
        return cls(d["rate"])


class Flatten(Layer):
    kind = "Flatten"

    def _build(self, input_shape, rng, dtype, name):
        return (int(np.prod(input_shape)),)

    def forward(self, x, tape=None):
        self._check_input(x)
        B = x.data.shape[0]
        out = Var(np.ascontiguousarray(x.data).reshape(B, -1))
        if tape is None:
            return out
        in_shape = x.data.shape

        def bwd(g):
            return (g.reshape(in_shape),)

        return tape.record("flatten", (x,), out, bwd)

    def spec(self):
        return {"kind": self.kind}

    @classmethod
    def from_spec(cls, d):
        return cls()


class Dense(Layer):
    """Fully connected layer with fused activation."""

    kind = "Dense"

    def __init__(self, units, activation="linear"):
        super().__init__()
        self.units = int(units)
        if self.units < 1:
            raise ValueError(f"Dense: units must be positive, got {units}")
        self.activation = _canon_activation(activation)

    def _build(self, input_shape, rng, dtype, name):
        if len(input_shape) != 1:
            raise ShapeMismatchError(
                f"Dense: expected flat (d,) input, got shape {input_shape}"
            )
        d = input_shape[0]
        limit = np.sqrt(6.0 / d)
        w = rng.uniform(-limit, limit, size=(d, self.units)).astype(dtype)
        b = np.zeros(self.units, dtype=dtype)
        self.params = [Parameter(w, f"{name}/W"), Parameter(b, f"{name}/b")]
        return (self.units,)

    def forward(self, x, tape=None):
        self._check_input(x)
        w_p, b_p = self.params
        z = x.data @ w_p.data + b_p.data
        a = _act_forward(self.activation, z)
        out = Var(a)
        if tape is None:
            return out

        act = self.activation
        x_data = x.data

        def bwd(g):
            gz = _act_backward(act, g, a) if act != "linear" else g
            dw = x_data.T @ gz
            db = gz.sum(axis=0)
            gx = gz @ w_p.data.T
            return gx, dw, db

        return tape.record("dense", (x, w_p, b_p), out, bwd)

    def spec(self):
        return {"kind": self.kind, "units": self.units, "activation": self.activation}

    @classmethod
    def from_spec(cls, d):
        return cls(d["units"], d["activation"])


class Reshape(Layer):
    kind = "Reshape"

    def __init__(self, target_shape):
        super().__init__()
        self.target_shape = tuple(int(s) for s in target_shape)

    def _build(self, input_shape, rng, dtype, name):
        if int(np.prod(input_shape)) != int(np.prod(self.target_shape)):
            raise ShapeMismatchError(
                f"Reshape: cannot map shape {tuple(input_shape)} onto {self.target_shape}"
            )
        return self.target_shape

    def forward(self, x, tape=None):
        self._check_input(x)
        B = x.data.shape[0]
        out = Var(np.ascontiguousarray(x.data).reshape((B,) + self.target_shape))
        if tape is None:
            return out
        in_shape = x.data.shape

        def bwd(g):
            return (g.reshape(in_shape),)

        return tape.record("reshape", (x,), out, bwd)

    def spec(self):
        return {"kind": self.kind, "target_shape": list(self.target_shape)}

    @classmethod
    def from_spec(cls, d):
        return cls(tuple(d["target_shape"]))


class Activation(Layer):
    """Standalone activation layer (relu, linear or softmax)."""

    kind = "Activation"

    def __init__(self, name):
        super().__init__()
        self.activation = _canon_activation(name)

    def _build(self, input_shape, rng, dtype, name):
        return tuple(input_shape)

    def forward(self, x, tape=None):
        self._check_input(x)
        a = _act_forward(self.activation, x.data)
        out = Var(a)
        if tape is None:
            return out
        act = self.activation

        def bwd(g):
            return (_act_backward(act, g, a),)

        return tape.record(f"activation_{act}", (x,), out, bwd)

    def spec(self):
        return {"kind": self.kind, "activation": self.activation}

    @classmethod
    def from_spec(cls, d):
        return cls(d["activation"])


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv2D, MaxPool2D, Dropout, Flatten, Dense, Reshape, Activation)
}


def layer_from_spec(d: dict) -> Layer:
    try:
        cls = LAYER_KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown layer kind {d.get('kind')!r}") from None
    return cls.from_spec(d)


def apply_layer(layer: Layer, x, tape: Tape | None = None) -> Var:
    """Run one layer on ``x`` (Var or ndarray), recording on ``tape``."""
    if not isinstance(x, Var):
        x = Var(x)
    return layer.forward(x, tape)
