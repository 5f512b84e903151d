"""Dataset ingestion: CIFAR-10 binary batches and a synthetic fallback.

CIFAR-10 binary format, bit-exact: records of 3073 bytes = 1 label byte
(0-9) followed by 3072 pixel bytes in channel-planar order (1024 R,
1024 G, 1024 B, each plane row-major 32x32). Pixels are scaled to [0, 1]
by /255; ``write_cifar10_batch`` inverts the scaling exactly, so a
parsed batch re-serializes to the original bytes.

The synthetic dataset (class-conditioned Gaussian blobs) exists so the
full test suite and the experiment runner work without any download.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptDatasetError

RECORD_BYTES = 3073
IMAGE_SHAPE = (32, 32, 3)
TRAIN_BATCH_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_BATCH_FILES = ["test_batch.bin"]


@dataclass
class Dataset:
    """Images in [0, 1], integer labels, and a split tag."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"image count {self.images.shape[0]} != label count {self.labels.shape[0]}"
            )

    def __len__(self):
        return self.images.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0


def parse_cifar10_batch(raw: bytes, source="<bytes>"):
    """Decode one binary batch into (images, labels)."""
    if len(raw) % RECORD_BYTES:
        offset = len(raw) - (len(raw) % RECORD_BYTES)
        raise CorruptDatasetError(
            f"{source}: size {len(raw)} is not a multiple of {RECORD_BYTES}; "
            f"trailing partial record starts at offset {offset}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise CorruptDatasetError(
            f"{source}: record {int(bad[0])} has label byte {int(labels[bad[0]])} > 9"
        )
    planes = records[:, 1:].reshape(-1, 3, 32, 32)
    images = planes.transpose(0, 2, 3, 1).astype(np.float32) / np.float32(255)
    return images, labels


def write_cifar10_batch(path, images, labels):
    """Serialize images/labels back to the binary batch format."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    pixels = np.rint(images * 255.0).astype(np.uint8)
    planes = pixels.transpose(0, 3, 1, 2).reshape(len(labels), 3072)
    records = np.empty((len(labels), RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels.astype(np.uint8)
    records[:, 1:] = planes
    Path(path).write_bytes(records.tobytes())


def _find_batch_dir(directory):
    directory = Path(directory)
    if (directory / TRAIN_BATCH_FILES[0]).exists():
        return directory
    nested = directory / "cifar-10-batches-bin"
    if (nested / TRAIN_BATCH_FILES[0]).exists():
        return nested
    raise FileNotFoundError(
        f"no CIFAR-10 binary batches under {directory} "
        f"(expected {TRAIN_BATCH_FILES[0]} or cifar-10-batches-bin/)"
    )


def load_cifar10(directory):
    """Load the train/test splits from the standard binary batch files."""
    batch_dir = _find_batch_dir(directory)

    def load_files(names, split):
        images, labels = [], []
        for name in names:
            path = batch_dir / name
            imgs, labs = parse_cifar10_batch(path.read_bytes(), source=str(path))
            images.append(imgs)
            labels.append(labs)
        return Dataset(np.concatenate(images), np.concatenate(labels), split=split)

    return load_files(TRAIN_BATCH_FILES, "train"), load_files(TEST_BATCH_FILES, "test")


def _class_means(classes, image_shape, structure_seed):
    """Smooth per-class mean images: coarse random grids upsampled 4x."""
    H, W, C = image_shape
    ch, cw = max(H // 4, 1), max(W // 4, 1)
    means = np.empty((classes, H, W, C), dtype=np.float64)
    for k in range(classes):
        rng = np.random.default_rng(np.random.SeedSequence((structure_seed, 777, k)))
        coarse = rng.uniform(0.15, 0.85, size=(ch, cw, C))
        means[k] = np.kron(coarse, np.ones((H // ch, W // cw, 1)))[:H, :W, :]
    return means


def synth_dataset(n, classes=10, seed=0, image_shape=IMAGE_SHAPE, split="train",
                  noise_sigma=0.08, structure_seed=0):
    """Class-conditioned Gaussian-blob images, deterministic per seed.

    Labels are assigned round-robin so counts are exactly balanced when
    ``classes`` divides ``n``. Class means depend only on
    ``structure_seed``, so train/test splits generated with different
    ``seed`` values share the same class structure.
    """
    if n <= 0:
        raise ValueError(f"synth_dataset: n must be positive, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 778)))
    means = _class_means(classes, image_shape, structure_seed)
    labels = np.arange(n, dtype=np.int64) % classes
    noise = rng.normal(0.0, noise_sigma, size=(n,) + tuple(image_shape))
    images = np.clip(means[labels] + noise, 0.0, 1.0).astype(np.float32)
    return Dataset(images, labels, split=split)


def subset(dataset: Dataset, n, seed=0) -> Dataset:
    """Class-stratified random subset of size ``n``, order shuffled."""
    total = len(dataset)
    if n > total:
        raise ValueError(f"subset: requested {n} samples from a dataset of {total}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 779)))
    classes, counts = np.unique(dataset.labels, return_counts=True)
    # largest-remainder apportionment: exact when n is divisible evenly
    quotas = counts * (n / total)
    base = np.floor(quotas).astype(int)
    remainder = n - int(base.sum())
    if remainder:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
    picks = []
    for cls, take in zip(classes, base):
        idx = np.nonzero(dataset.labels == cls)[0]
        picks.append(rng.permutation(idx)[:take])
    chosen = np.concatenate(picks)
    chosen = rng.permutation(chosen)
    return Dataset(dataset.images[chosen], dataset.labels[chosen], split=dataset.split)
