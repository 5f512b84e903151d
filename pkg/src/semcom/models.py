"""Builders for the four networks: encoder plus three task decoders.

Layer sequences are fixed presets; a structural audit can verify any
built model against its preset. Builders are deterministic given
(config, seed): each role initializes from its own derived RNG stream,
so the presence or absence of one decoder never shifts another model's
initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, Reshape
from .model import Model

# stable stream ids per role (seed, id) -> rng; training streams live in
# training.py and use disjoint ids
ROLE_STREAM = {"encoder": 0, "semantic": 1, "reconstruction": 2, "sensing": 3}

DROPOUT_RATE = 0.25
CONV_FILTERS = (32, 64, 128)
ENCODER_HIDDEN_DENSE = 512
RECONSTRUCTION_HIDDEN = (128, 256, 512)


@dataclass(frozen=True)
class ModelConfig:
    """Shared architecture knobs: latent size and source geometry.

    ``n_c`` is both the encoder output size and the number of channel
    uses per source sample. It must be even: the sensing decoder has a
    hidden layer of width n_c/2.
    """

    n_c: int = 20
    input_shape: tuple = (32, 32, 3)
    num_classes: int = 10

    def __post_init__(self):
        if not isinstance(self.n_c, int) or self.n_c < 2 or self.n_c % 2:
            raise ValueError(f"n_c must be an even integer >= 2, got {self.n_c!r}")
        shape = tuple(int(s) for s in self.input_shape)
        object.__setattr__(self, "input_shape", shape)
        if len(shape) != 3 or any(s < 1 for s in shape):
            raise ValueError(f"input_shape must be (H, W, C), got {shape}")
        if shape[0] % 8 or shape[1] % 8:
            raise ValueError(
                f"input H and W must be divisible by 8 (three pooling stages), got {shape}"
            )
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def source_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def is_preset(self) -> bool:
        """True for the full-scale 32x32x3 / 10-class configuration."""
        return self.input_shape == (32, 32, 3) and self.num_classes == 10


def _role_rng(seed, role):
    return np.random.default_rng(np.random.SeedSequence((seed, ROLE_STREAM[role])))


def _cfg_dict(cfg):
    return {
        "n_c": cfg.n_c,
        "input_shape": list(cfg.input_shape),
        "num_classes": cfg.num_classes,
    }


def encoder_layers(cfg: ModelConfig):
    layers = []
    for filters in CONV_FILTERS:
        layers += [Conv2D(filters, activation="relu"), MaxPool2D(), Dropout(DROPOUT_RATE)]
    layers += [
        Flatten(),
        Dense(ENCODER_HIDDEN_DENSE, activation="relu"),
        Dropout(DROPOUT_RATE),
        Dense(cfg.n_c, activation="linear"),
    ]
    return layers


def semantic_decoder_layers(cfg: ModelConfig):
    return [
        Dense(cfg.n_c, activation="relu"),
        Dense(cfg.n_c, activation="relu"),
        Dense(cfg.num_classes, activation="softmax"),
    ]


def reconstruction_decoder_layers(cfg: ModelConfig):
    widths = (cfg.n_c,) + RECONSTRUCTION_HIDDEN
    layers = [Dense(w, activation="relu") for w in widths]
    layers.append(Dense(cfg.source_dim, activation="linear"))
    layers.append(Reshape(cfg.input_shape))
    return layers


def sensing_decoder_layers(cfg: ModelConfig):
    return [
        Dense(cfg.n_c, activation="relu"),
        Dense(cfg.n_c // 2, activation="relu"),
        Dense(2, activation="softmax"),
    ]


def build_encoder(cfg: ModelConfig, seed=0, dtype=np.float32) -> Model:
    """Conv tower 32/64/128 with pool+dropout blocks, then 512-wide
    dense and a linear n_c output."""
    return Model(
        encoder_layers(cfg),
        input_shape=cfg.input_shape,
        role="encoder",
        seed=seed,
        dtype=dtype,
        rng=_role_rng(seed, "encoder"),
        config=_cfg_dict(cfg),
    )


def build_semantic_decoder(cfg: ModelConfig, seed=0, dtype=np.float32) -> Model:
    """Two n_c-wide relu layers into a softmax over the class labels."""
    return Model(
        semantic_decoder_layers(cfg),
        input_shape=(cfg.n_c,),
        role="semantic",
        seed=seed,
        dtype=dtype,
        rng=_role_rng(seed, "semantic"),
        config=_cfg_dict(cfg),
    )


def build_reconstruction_decoder(cfg: ModelConfig, seed=0, dtype=np.float32) -> Model:
    """Dense chain n_c -> 128 -> 256 -> 512 -> source_dim, reshaped to
    the image geometry; relu throughout except the linear output."""
    return Model(
        reconstruction_decoder_layers(cfg),
        input_shape=(cfg.n_c,),
        role="reconstruction",
        seed=seed,
        dtype=dtype,
        rng=_role_rng(seed, "reconstruction"),
        config=_cfg_dict(cfg),
    )


def build_sensing_decoder(cfg: ModelConfig, seed=0, dtype=np.float32) -> Model:
    """Presence detector: n_c -> n_c/2 relu layers into a 2-way softmax."""
    return Model(
        sensing_decoder_layers(cfg),
        input_shape=(cfg.n_c,),
        role="sensing",
        seed=seed,
        dtype=dtype,
        rng=_role_rng(seed, "sensing"),
        config=_cfg_dict(cfg),
    )


BUILDERS = {
    "encoder": build_encoder,
    "semantic": build_semantic_decoder,
    "reconstruction": build_reconstruction_decoder,
    "sensing": build_sensing_decoder,
}

_LAYER_TEMPLATES = {
    "encoder": encoder_layers,
    "semantic": semantic_decoder_layers,
    "reconstruction": reconstruction_decoder_layers,
    "sensing": sensing_decoder_layers,
}


def compression_ratio(cfg: ModelConfig) -> float:
    """Latent size over source dimensionality (0.65% for n_c=20)."""
    return cfg.n_c / cfg.source_dim


def audit_structure(model: Model):
    """Verify a built model's layers against the preset for its role.

    Raises ValueError with the first mismatch; returns the expected spec
    list on success.
    """
    if model.role not in _LAYER_TEMPLATES:
        raise ValueError(f"model role {model.role!r} has no preset to audit against")
    if model.config is None:
        raise ValueError("model carries no config; cannot reconstruct its preset")
    cfg = ModelConfig(
        n_c=model.config["n_c"],
        input_shape=tuple(model.config["input_shape"]),
        num_classes=model.config["num_classes"],
    )
    expected = [layer.spec() for layer in _LAYER_TEMPLATES[model.role](cfg)]
    actual = model.layer_specs()
    if len(expected) != len(actual):
        raise ValueError(
            f"{model.role}: expected {len(expected)} layers, found {len(actual)}"
        )
    for i, (want, got) in enumerate(zip(expected, actual)):
        if want != got:
            raise ValueError(
                f"{model.role}: layer {i} mismatch: expected {want}, found {got}"
            )
    return expected
