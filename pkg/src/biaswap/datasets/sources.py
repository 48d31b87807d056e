"""Raw image sources consumed by the dataset generators.

The generators never download anything: source tensors are either loaded from
files on disk (IDX for digit archives, pickled batches for CIFAR-style data) or
rendered locally. ``render_digit_source`` produces a self-contained stand-in
for a handwritten-digit archive: font glyphs under random affine jitter. Its
class signal (shape) is learnable but markedly harder than an injected color,
which is the property the bias protocol needs.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont


@dataclass
class ImageSource:
    """Unlabeled-bias raw images: grayscale N x H x W or color N x H x W x 3, float32 in [0, 1]."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels length mismatch")

    def __len__(self) -> int:
        return len(self.images)


def _render_glyph(digit: int, rng: np.random.Generator, font_path: str, out_size: int) -> np.ndarray:
    # Render large, jitter, then downsample for soft anti-aliased strokes.
    canvas = 4 * out_size
    size = int(rng.integers(int(2.2 * out_size), int(3.2 * out_size)))
    font = ImageFont.truetype(font_path, size)
    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
    x = (canvas - (right - left)) // 2 - left
    y = (canvas - (bottom - top)) // 2 - top
    draw.text((x, y), str(digit), fill=255, font=font)

    angle = float(rng.uniform(-25.0, 25.0))
    img = img.rotate(angle, resample=Image.BILINEAR, fillcolor=0)

    # Random shear + translation via an inverse affine map, sheared about the center.
    shear = float(rng.uniform(-0.25, 0.25))
    tx = float(rng.uniform(-0.1, 0.1)) * canvas
    ty = float(rng.uniform(-0.1, 0.1)) * canvas
    cy = canvas / 2.0
    img = img.transform(
        (canvas, canvas),
        Image.AFFINE,
        (1.0, shear, -shear * cy + tx, 0.0, 1.0, ty),
        resample=Image.BILINEAR,
        fillcolor=0,
    )

    img = img.resize((out_size, out_size), Image.LANCZOS)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    peak = arr.max()
    if peak > 0:
        arr = arr / peak
    return np.clip(arr, 0.0, 1.0)


def render_digit_source(n: int, seed: int, image_size: int = 28) -> ImageSource:
    """Deterministically render ``n`` jittered digit glyphs with balanced labels."""
    if n <= 0:
        raise ValueError("n must be positive")
    from matplotlib import font_manager  # ships DejaVu with matplotlib

    font_path = font_manager.findfont("DejaVu Sans")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % 10
    rng.shuffle(labels)
    images = np.stack([_render_glyph(int(lab), rng, font_path, image_size) for lab in labels])
    return ImageSource(images=images.astype(np.float32), labels=labels)


def _read_idx(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        zero, dtype_code, ndim = struct.unpack(">HBB", f.read(4))
        if zero != 0 or dtype_code != 0x08:
            raise ValueError(f"{path}: not an unsigned-byte IDX file")
        shape = struct.unpack(">" + "I" * ndim, f.read(4 * ndim))
        data = np.frombuffer(f.read(), dtype=np.uint8)
    return data.reshape(shape)


def load_idx_digit_source(images_path, labels_path) -> ImageSource:
    """Load a digit archive stored in the classic IDX format (optionally gzipped)."""
    images = _read_idx(Path(images_path)).astype(np.float32) / 255.0
    labels = _read_idx(Path(labels_path)).astype(np.int64)
    return ImageSource(images=images, labels=labels)


def load_pickled_batch_source(paths) -> ImageSource:
    """Load CIFAR-style pickled batches (dict with b'data' N x 3072 and b'labels')."""
    import pickle

    images, labels = [], []
    for p in paths:
        with open(p, "rb") as f:
            batch = pickle.load(f, encoding="bytes")
        data = batch[b"data"].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        images.append(data.astype(np.float32) / 255.0)
        labels.append(np.asarray(batch[b"labels"], dtype=np.int64))
    return ImageSource(images=np.concatenate(images), labels=np.concatenate(labels))
