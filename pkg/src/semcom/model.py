"""Model container: an ordered layer list with a role tag, plus checkpoints.

Checkpoint format (version 1): a single ``.npz`` holding a ``__meta__``
JSON string (role, input shape, init seed, dtype, ordered layer specs)
and one array per parameter in layer order. The format is
self-describing: loading rebuilds the layers from their specs and
overwrites the freshly initialized parameters with the stored arrays.
"""

from __future__ import annotations

import json

import numpy as np

from .layers import Layer, layer_from_spec
from .tape import Parameter, Tape, Var

CHECKPOINT_VERSION = 1


class Model:
    """Ordered layers built for a fixed input shape, tagged by role."""

    def __init__(self, layers, input_shape, role="model", seed=None,
                 dtype=np.float32, rng=None, config=None):
        self.layers: list[Layer] = list(layers)
        self.role = role
        self.input_shape = tuple(input_shape)
        self.init_seed = seed
        self.dtype = np.dtype(dtype)
        self.config = config
        if rng is None:
            rng = np.random.default_rng(seed)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer.build(shape, rng, self.dtype, name=f"{layer.kind.lower()}_{i}")
        self.output_shape = shape

    def forward(self, x, tape: Tape | None = None) -> Var:
        if not isinstance(x, Var):
            x = Var(np.asarray(x, dtype=self.dtype))
        for layer in self.layers:
            x = layer.forward(x, tape)
        return x

    def predict(self, x) -> np.ndarray:
        """Inference-mode forward pass on a plain array."""
        return self.forward(x, tape=None).data

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def copy_weights_from(self, other: "Model"):
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine.data = theirs.data.copy()

    def __repr__(self):
        kinds = ",".join(l.kind for l in self.layers)
        return f"Model(role={self.role!r}, layers=[{kinds}])"


def save_model(model: Model, path):
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "role": model.role,
        "input_shape": list(model.input_shape),
        "init_seed": model.init_seed,
        "dtype": model.dtype.name,
        "config": model.config,
        "layers": model.layer_specs(),
    }
    arrays = {f"p{i}": p.data for i, p in enumerate(model.parameters())}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path) -> Model:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint format {meta['format_version']} not supported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        layers = [layer_from_spec(d) for d in meta["layers"]]
        model = Model(
            layers,
            input_shape=tuple(meta["input_shape"]),
            role=meta["role"],
            seed=meta["init_seed"],
            dtype=np.dtype(meta["dtype"]),
            config=meta.get("config"),
        )
        for i, p in enumerate(model.parameters()):
            stored = archive[f"p{i}"]
            if stored.shape != p.data.shape:
                raise ValueError(
                    f"checkpoint parameter {i} has shape {stored.shape}, model expects {p.data.shape}"
                )
            p.data = stored.astype(model.dtype, copy=True)
    return model
