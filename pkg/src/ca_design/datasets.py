"""Dataset loading and synthetic scene generation.

MNIST is read from its IDX files when available. When no IDX files are on
hand, a deterministic 28x28 handwritten-digit surrogate is synthesized from
scikit-learn's bundled 8x8 digits (upsampled and augmented, with train and
test drawn from disjoint source images).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed dataset files or bad generation parameters."""


IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Scenes normalized to [0, 1] plus their task targets."""

    scenes: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if len(self.scenes) != len(self.targets):
            raise DatasetError(
                f"{len(self.scenes)} scenes but {len(self.targets)} targets"
            )

    def __len__(self) -> int:
        return len(self.scenes)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Parse MNIST IDX files bit-exactly; pixels are scaled by 1/255."""
    img_blob = Path(images_path).read_bytes()
    if len(img_blob) < 16:
        raise DatasetError(f"{images_path}: truncated image header")
    magic, count, rows, cols = struct.unpack(">4i", img_blob[:16])
    if magic != IMAGE_MAGIC:
        raise DatasetError(
            f"{images_path}: bad magic 0x{magic:08x} (expected 0x{IMAGE_MAGIC:08x})"
        )
    expected = 16 + count * rows * cols
    if len(img_blob) != expected:
        raise DatasetError(
            f"{images_path}: file size {len(img_blob)} does not match "
            f"header arithmetic ({expected} expected)"
        )
    images = np.frombuffer(img_blob, dtype=np.uint8, offset=16)
    scenes = images.reshape(count, rows * cols).astype(np.float64) / 255.0

    lbl_blob = Path(labels_path).read_bytes()
    if len(lbl_blob) < 8:
        raise DatasetError(f"{labels_path}: truncated label header")
    magic, lbl_count = struct.unpack(">2i", lbl_blob[:8])
    if magic != LABEL_MAGIC:
        raise DatasetError(
            f"{labels_path}: bad magic 0x{magic:08x} (expected 0x{LABEL_MAGIC:08x})"
        )
    if len(lbl_blob) != 8 + lbl_count:
        raise DatasetError(f"{labels_path}: file size does not match header count")
    if lbl_count != count:
        raise DatasetError(
            f"count mismatch: {count} images but {lbl_count} labels"
        )
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(scenes, labels)


def gen_synthetic_cube(
    rows: int, cols: int, planes: int, blob_count: int, rng: np.random.Generator
) -> np.ndarray:
    """Smooth spectral cube: a sum of separable Gaussian blobs clamped to [0, 1]."""
    if min(rows, cols, planes) < 1:
        raise DatasetError("cube dimensions must be >= 1")
    cube = np.zeros((rows, cols, planes))
    r = np.arange(rows, dtype=np.float64)
    c = np.arange(cols, dtype=np.float64)
    p = np.arange(planes, dtype=np.float64)
    for _ in range(blob_count):
        amp = rng.uniform(0.3, 0.9)
        gr = np.exp(-0.5 * ((r - rng.uniform(0, rows - 1)) / max(rows / 4.0, 2.0)) ** 2)
        gc = np.exp(-0.5 * ((c - rng.uniform(0, cols - 1)) / max(cols / 4.0, 2.0)) ** 2)
        gp = np.exp(
            -0.5 * ((p - rng.uniform(0, planes - 1)) / max(planes / 3.0, 1.0)) ** 2
        )
        cube += amp * gr[:, None, None] * gc[None, :, None] * gp[None, None, :]
    return np.clip(cube, 0.0, 1.0)


def gen_synthetic_cubes(
    count: int, rows: int, cols: int, planes: int, blobs: int, rng
) -> Dataset:
    """Reconstruction dataset of smooth cubes; targets are the scenes."""
    scenes = np.stack(
        [gen_synthetic_cube(rows, cols, planes, blobs, rng) for _ in range(count)]
    )
    return Dataset(scenes, scenes.copy())


def make_digit_surrogate(
    n_train: int,
    n_test: int,
    rng: np.random.Generator,
    size: int = 28,
):
    """28x28 digit-classification stand-in built from sklearn's 8x8 digits.

    Source images are split disjointly between train and test before
    augmentation (small rotations and shifts), so no augmented test sample
    shares a source image with the training set.
    """
    from scipy import ndimage
    from sklearn.datasets import load_digits

    raw = load_digits()
    base = raw.images / 16.0
    labels = raw.target
    upsampled = np.stack(
        [
            np.clip(ndimage.zoom(img, size / 8.0, order=1), 0.0, 1.0)
            for img in base
        ]
    )

    order = rng.permutation(len(base))
    n_src_test = max(10, len(base) // 6)
    test_src = order[:n_src_test]
    train_src = order[n_src_test:]

    def synth(src_idx, count):
        scenes = np.empty((count, size * size))
        ys = np.empty(count, dtype=np.int64)
        for i in range(count):
            j = src_idx[rng.integers(len(src_idx))]
            img = upsampled[j]
            angle = rng.uniform(-12.0, 12.0)
            img = ndimage.rotate(img, angle, reshape=False, order=1, mode="constant")
            shift = rng.uniform(-2.0, 2.0, size=2)
            img = ndimage.shift(img, shift, order=1, mode="constant")
            scenes[i] = np.clip(img, 0.0, 1.0).ravel()
            ys[i] = labels[j]
        return Dataset(scenes, ys)

    return synth(train_src, n_train), synth(test_src, n_test)


def build_dataset(spec: dict, rng: np.random.Generator):
    """Instantiate (train, test) datasets from a config dataset spec."""
    kind = spec.get("kind", "digits")
    if kind == "mnist":
        for key in ("images", "labels", "test_images", "test_labels"):
            if key not in spec:
                raise DatasetError(f"mnist dataset spec requires {key!r}")
        train = load_mnist_idx(spec["images"], spec["labels"])
        test = load_mnist_idx(spec["test_images"], spec["test_labels"])
        return train, test
    if kind == "digits":
        return make_digit_surrogate(
            spec.get("train_size", 6000), spec.get("test_size", 1000), rng
        )
    if kind == "synthetic_cubes":
        count = spec.get("count", 64)
        rows, cols = spec.get("rows", 16), spec.get("cols", 16)
        planes, blobs = spec.get("planes", 4), spec.get("blobs", 3)
        train = gen_synthetic_cubes(count, rows, cols, planes, blobs, rng)
        test = gen_synthetic_cubes(
            max(count // 4, 1), rows, cols, planes, blobs, rng
        )
        return train, test
    raise DatasetError(f"unknown dataset kind {kind!r}")
