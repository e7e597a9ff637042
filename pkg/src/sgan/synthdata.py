"""Synthetic Gaussian mixtures and IDX (MNIST-style) image loading."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng

IDX_IMAGES_MAGIC = 2051  # 0x00000803
IDX_LABELS_MAGIC = 2049  # 0x00000801

# Generators end in tanh, so every mode must sit strictly inside (-1, 1)^2.
DEFAULT_RADIUS = 0.8
DEFAULT_STD = 0.01


@dataclass(frozen=True)
class MixtureSpec:
    centers: np.ndarray
    std: float
    weights: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=np.float64)
        if len(c) < 1:
            raise ValueError("a mixture needs at least one mode")
        if w.shape != (len(c),) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mode weights must be non-negative, one per center, summing to 1")
        if not self.std > 0:
            raise ValueError(f"std must be > 0, got {self.std}")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return len(self.centers)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "std": self.std, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d) -> "MixtureSpec":
        return cls(np.array(d["centers"]), float(d["std"]), np.array(d["weights"]))


def make_ring_mixture(k_modes: int = 8, radius: float = DEFAULT_RADIUS,
                      std: float = DEFAULT_STD) -> MixtureSpec:
    if k_modes < 1 or radius < 0:
        raise ValueError("need k_modes >= 1 and radius >= 0")
    ang = 2 * math.pi * np.arange(k_modes) / k_modes
    centers = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # exact zeros instead of 1e-16 noise from cos(pi/2)
    centers[np.abs(centers) < 1e-15] = 0.0
    return MixtureSpec(centers, std, np.full(k_modes, 1.0 / k_modes))


def sample_real(spec: MixtureSpec, n: int, rng: Rng, return_modes: bool = False):
    modes = rng.categorical(spec.weights, n)
    pts = spec.centers[modes] + spec.std * rng.normal((n, 2))
    return (pts, modes) if return_modes else pts


@dataclass
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.images)

    def subset(self, n: int) -> "ImageDataset":
        labels = None if self.labels is None else self.labels[:n]
        return ImageDataset(self.images[:n], labels, {**self.meta, "subset": n})

    def sample(self, n: int, rng: Rng) -> np.ndarray:
        return self.images[rng.integers(len(self.images), n)]


class IDXFormatError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(buf: bytes, magic: int, path, ndim: int) -> np.ndarray:
    if len(buf) < 4 + 4 * ndim:
        raise IDXFormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">i", buf[:4])
    if found != magic:
        raise IDXFormatError(f"{path}: bad magic number, expected {magic} got {found}")
    dims = struct.unpack(f">{ndim}i", buf[4:4 + 4 * ndim])
    body = buf[4 + 4 * ndim:]
    need = int(np.prod(dims))
    if len(body) < need:
        raise IDXFormatError(f"{path}: truncated file, header promises {need} bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=need).reshape(dims)


def normalize_pixels(raw) -> np.ndarray:
    """Map uint8 pixels onto [-1, 1]: (x/255 - 0.5)/0.5."""
    return (np.asarray(raw, dtype=np.float64) / 255.0 - 0.5) / 0.5


def load_idx(images_path, labels_path=None) -> ImageDataset:
    """Read IDX image (and optional label) files, plain or gzip-compressed."""
    raw = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path, 3)
    n, rows, cols = raw.shape
    images = normalize_pixels(raw.reshape(n, rows * cols))
    labels = None
    if labels_path is not None:
        labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path, 1).astype(np.int64)
        if len(labels) != n:
            raise IDXFormatError(f"count mismatch: {n} images but {len(labels)} labels")
    return ImageDataset(images, labels, {"source": str(images_path), "rows": rows, "cols": cols})


def write_idx(images_u8: np.ndarray, images_path, labels=None, labels_path=None, compress=False):
    """Write IDX files; used to build fixtures and small test datasets."""
    opener = gzip.open if compress else open
    imgs = np.asarray(images_u8, dtype=np.uint8)
    with opener(images_path, "wb") as f:
        f.write(struct.pack(">4i", IDX_IMAGES_MAGIC, *imgs.shape))
        f.write(imgs.tobytes())
    if labels is not None:
        lab = np.asarray(labels, dtype=np.uint8)
        with opener(labels_path, "wb") as f:
            f.write(struct.pack(">2i", IDX_LABELS_MAGIC, len(lab)))
            f.write(lab.tobytes())
