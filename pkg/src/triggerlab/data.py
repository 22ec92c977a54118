"""Dataset loading and generation.

Images are float arrays of shape (N, H, W, C) with values in [0, 1];
labels are integer arrays. MNIST-style IDX files load and save bit-exactly.
A deterministic synthetic 10-class digit-like dataset stands in for MNIST
when the real files are unavailable (fast CI, offline machines).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "LabeledDataset",
    "IdxFormatError",
    "load_idx",
    "save_idx",
    "export_raw",
    "synth_dataset",
    "subset",
    "split",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(RuntimeError):
    pass


@dataclass
class LabeledDataset:
    """Immutable image/label pairs; pixels in [0, 1]."""

    images: np.ndarray   # (N, H, W, C) float32
    labels: np.ndarray   # (N,) int64
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.images) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def take(self, indices):
        return LabeledDataset(self.images[indices], self.labels[indices], self.num_classes)


def load_idx(image_path, label_path, num_classes=10):
    """Load an IDX image/label file pair, rescaling bytes to [0, 1]."""
    image_path, label_path = Path(image_path), Path(label_path)
    with open(image_path, "rb") as f:
        header = f.read(16)
        if len(header) != 16:
            raise IdxFormatError(f"{image_path}: truncated header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{image_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        raw = f.read()
    if len(raw) != count * rows * cols:
        raise IdxFormatError(
            f"{image_path}: payload holds {len(raw)} bytes, header promises "
            f"{count * rows * cols}")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols, 1)

    with open(label_path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise IdxFormatError(f"{label_path}: truncated header")
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{label_path}: magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = f.read()
    if len(raw) != label_count:
        raise IdxFormatError(
            f"{label_path}: payload holds {len(raw)} labels, header promises {label_count}")
    if label_count != count:
        raise IdxFormatError(
            f"count mismatch: {count} images vs {label_count} labels")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return LabeledDataset(images.astype(np.float32) / 255.0, labels, num_classes)


def save_idx(dataset, image_path, label_path):
    """Write a dataset as an IDX pair (pixels quantized back to bytes)."""
    n, rows, cols, c = dataset.images.shape
    if c != 1:
        raise ValueError("IDX export supports single-channel images only")
    pixels = np.rint(dataset.images[..., 0] * 255.0).astype(np.uint8)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def export_raw(dataset, directory):
    """Dump every image as a raw byte grid plus a labels.txt, for inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(len(dataset)):
        pixels = np.rint(dataset.images[i, :, :, 0] * 255.0).astype(np.uint8)
        (directory / f"{i:06d}.raw").write_bytes(pixels.tobytes())
    with open(directory / "labels.txt", "w") as f:
        for i, label in enumerate(dataset.labels):
            f.write(f"{i:06d} {int(label)}\n")


def _class_templates(rng, size=28):
    """Ten smooth blob templates, well separated in pixel space."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    templates = []
    for _ in range(10):
        grid = np.zeros((size, size))
        for _ in range(rng.integers(3, 6)):
            cy, cx = rng.uniform(6, size - 6, size=2)
            sy, sx = rng.uniform(1.5, 4.0, size=2)
            amp = rng.uniform(0.6, 1.0)
            grid += amp * np.exp(-(((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2))
        grid *= 0.9 / max(grid.max(), 1e-9)
        templates.append(grid)
    return templates


def synth_dataset(seed, n_per_class, size=28):
    """Deterministic 10-class synthetic digits: per-class templates plus
    small shifts, brightness jitter and pixel noise."""
    if n_per_class < 2:
        raise ValueError("n_per_class must be >= 2")
    rng = np.random.default_rng(seed)
    templates = _class_templates(rng, size)
    images = np.empty((10 * n_per_class, size, size, 1), dtype=np.float32)
    labels = np.empty(10 * n_per_class, dtype=np.int64)
    i = 0
    for cls, template in enumerate(templates):
        for _ in range(n_per_class):
            dy, dx = rng.integers(-1, 2, size=2)
            shifted = np.roll(np.roll(template, dy, axis=0), dx, axis=1)
            sample = shifted * rng.uniform(0.8, 1.0)
            sample += rng.normal(0.0, 0.03, size=shifted.shape)
            images[i, :, :, 0] = np.clip(sample, 0.0, 1.0)
            labels[i] = cls
            i += 1
    order = rng.permutation(len(labels))
    return LabeledDataset(images[order], labels[order], num_classes=10)


def _stratified_indices(labels, num_classes, n, rng):
    # spread n across classes as evenly as the class counts allow
    per_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    base, extra = divmod(n, num_classes)
    counts = np.full(num_classes, base)
    counts[rng.permutation(num_classes)[:extra]] += 1
    # classes short on samples hand their surplus quota to the others
    for _ in range(num_classes):
        deficit = 0
        for c in range(num_classes):
            if counts[c] > len(per_class[c]):
                deficit += counts[c] - len(per_class[c])
                counts[c] = len(per_class[c])
        if deficit == 0:
            break
        room = [c for c in range(num_classes) if counts[c] < len(per_class[c])]
        for c in rng.permutation(room)[:deficit]:
            counts[c] += 1
    chosen = [rng.choice(per_class[c], size=counts[c], replace=False)
              for c in range(num_classes)]
    return np.sort(np.concatenate(chosen))


def subset(dataset, n, seed):
    """Class-stratified random subset of n samples (per-class counts within 1)."""
    if n > len(dataset):
        raise ValueError(f"requested {n} samples from a dataset of {len(dataset)}")
    rng = np.random.default_rng(seed)
    idx = _stratified_indices(dataset.labels, dataset.num_classes, n, rng)
    return dataset.take(idx)


def split(dataset, n, seed):
    """Stratified split into (n samples, the rest)."""
    rng = np.random.default_rng(seed)
    idx = _stratified_indices(dataset.labels, dataset.num_classes, n, rng)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[idx] = True
    return dataset.take(idx), dataset.take(np.flatnonzero(~mask))
