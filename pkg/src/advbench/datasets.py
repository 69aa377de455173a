"""Synthetic datasets and IDX file I/O.

Images are (n, channels, height, width) float64 in [0, 1]; labels are int64
in [0, k).  Files use the MNIST IDX layout (big-endian dims, unsigned-byte
data): magic 0x00000803 for single-channel image sets, 0x00000804 for
multi-channel, 0x00000801 for labels, so real MNIST files load directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import AdvbenchError, FormatError, VersionError
from .rng import Stream

_IDX_UBYTE = 0x08


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4:
            raise AdvbenchError(f"images must be (n, c, h, w), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise AdvbenchError("labels length must match image count")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n])

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images).tobytes())
        h.update(np.ascontiguousarray(self.labels.astype(np.int64)).tobytes())
        return h.hexdigest()


def generate_blobs(seed: int, n: int, k: int = 4, image_size: int = 8) -> Dataset:
    """Gaussian-bump class templates plus per-pixel noise.

    Class j's template is a bump of amplitude 0.9 centered on a ring around
    the image center, so the k positions are distinct.  Labels are assigned
    round-robin (exact balance within 1) and then shuffled; per-pixel noise
    is N(0, 0.1^2); everything is clipped to [0, 1] and byte-deterministic
    in (seed, n, k, image_size).
    """
    if not 2 <= k <= 10:
        raise AdvbenchError(f"k must be in [2, 10], got {k}")
    if image_size < 4:
        raise AdvbenchError(f"image_size must be >= 4, got {image_size}")
    if n < 1:
        raise AdvbenchError(f"n must be >= 1, got {n}")

    s = image_size
    center = (s - 1) / 2.0
    ring = s / 3.0
    sigma = s / 6.0
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    templates = np.empty((k, 1, s, s))
    for j in range(k):
        ang = 2.0 * np.pi * j / k
        cy, cx = center + ring * np.sin(ang), center + ring * np.cos(ang)
        templates[j, 0] = 0.9 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))

    labels = np.arange(n) % k
    labels = labels[Stream(seed, "blobs-shuffle").permutation(n)]
    noise = Stream(seed, "blobs-noise").normal(n * s * s, sigma=0.1).reshape(n, 1, s, s)
    images = np.clip(templates[labels] + noise, 0.0, 1.0)
    return Dataset(images, labels.astype(np.int64))


def _quantize_u8(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_idx_images(path, images: np.ndarray) -> None:
    """Write images (values in [0, 1], quantized to bytes) as an IDX file."""
    n, c, h, w = images.shape
    data = _quantize_u8(images)
    with open(path, "wb") as f:
        if c == 1:
            f.write(struct.pack(">i", 0x00000803))
            f.write(struct.pack(">iii", n, h, w))
            f.write(data[:, 0].tobytes())
        else:
            f.write(struct.pack(">i", 0x00000804))
            f.write(struct.pack(">iiii", n, c, h, w))
            f.write(data.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">i", 0x00000801))
        f.write(struct.pack(">i", len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def _read_exact(f, count, path):
    data = f.read(count)
    if len(data) != count:
        raise FormatError(f"{path}: truncated IDX file (wanted {count} bytes, got {len(data)})")
    return data


def load_idx_images(path) -> np.ndarray:
    """Read an IDX image file into (n, c, h, w) float64 in [0, 1]."""
    with open(path, "rb") as f:
        magic = struct.unpack(">i", _read_exact(f, 4, path))[0]
        dtype_code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
        if magic >> 16 != 0 or dtype_code != _IDX_UBYTE:
            raise VersionError(f"{path}: unsupported IDX magic 0x{magic:08x}")
        if ndim == 3:
            n, h, w = struct.unpack(">iii", _read_exact(f, 12, path))
            c = 1
        elif ndim == 4:
            n, c, h, w = struct.unpack(">iiii", _read_exact(f, 16, path))
        else:
            raise FormatError(f"{path}: expected 3 or 4 dimensions, got {ndim}")
        if min(n, c, h, w) < 0:
            raise FormatError(f"{path}: negative dimension in header")
        raw = np.frombuffer(_read_exact(f, n * c * h * w, path), dtype=np.uint8)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after IDX payload")
    return raw.reshape(n, c, h, w).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = struct.unpack(">i", _read_exact(f, 4, path))[0]
        if magic != 0x00000801:
            raise VersionError(f"{path}: unsupported IDX label magic 0x{magic:08x}")
        n = struct.unpack(">i", _read_exact(f, 4, path))[0]
        raw = np.frombuffer(_read_exact(f, n, path), dtype=np.uint8)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after IDX payload")
    return raw.astype(np.int64)
