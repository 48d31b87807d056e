"""Texture corruption functions with a 1-5 severity scale.

Each corruption is a pure function of (image, severity, seed): calling it
twice with the same arguments returns identical pixels. The mandatory set is
{brightness, contrast, saturate, pixelate}; jpeg and fog ship as working
plug-ins and further ones (snow, frost, spatter, elastic) can be registered
through ``register_corruption``.
"""
from __future__ import annotations

import io

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image

SEVERITY_RANGE = (1, 5)
DEFAULT_SEVERITY = 4


class UnknownCorruptionError(ValueError):
    pass


def _check_severity(severity: int) -> int:
    if not SEVERITY_RANGE[0] <= severity <= SEVERITY_RANGE[1]:
        raise ValueError(f"severity {severity} outside declared range {SEVERITY_RANGE}")
    return int(severity)


def _check_image(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("corruptions expect an H x W x 3 image")
    return np.asarray(image, dtype=np.float32)


def brightness(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    c = [0.1, 0.2, 0.3, 0.4, 0.5][_check_severity(severity) - 1]
    hsv = rgb_to_hsv(_check_image(image))
    hsv[:, :, 2] = np.clip(hsv[:, :, 2] + c, 0.0, 1.0)
    return hsv_to_rgb(hsv).astype(np.float32)


def contrast(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    c = [0.75, 0.6, 0.45, 0.3, 0.15][_check_severity(severity) - 1]
    image = _check_image(image)
    means = image.mean(axis=(0, 1), keepdims=True)
    return np.clip((image - means) * c + means, 0.0, 1.0).astype(np.float32)


def saturate(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    scale, shift = [(0.3, 0.0), (0.1, 0.0), (2.0, 0.0), (5.0, 0.1), (20.0, 0.2)][_check_severity(severity) - 1]
    hsv = rgb_to_hsv(_check_image(image))
    hsv[:, :, 1] = np.clip(hsv[:, :, 1] * scale + shift, 0.0, 1.0)
    return hsv_to_rgb(hsv).astype(np.float32)


def pixelate(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    c = [0.6, 0.5, 0.4, 0.3, 0.25][_check_severity(severity) - 1]
    image = _check_image(image)
    h, w = image.shape[:2]
    small = (max(1, int(h * c)), max(1, int(w * c)))
    pil = Image.fromarray((image * 255.0).round().astype(np.uint8))
    pil = pil.resize((small[1], small[0]), Image.BOX).resize((w, h), Image.NEAREST)
    return (np.asarray(pil, dtype=np.float32) / 255.0).astype(np.float32)


def jpeg(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    quality = [25, 18, 15, 10, 7][_check_severity(severity) - 1]
    pil = Image.fromarray((_check_image(image) * 255.0).round().astype(np.uint8))
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    out = Image.open(buf).convert("RGB")
    return (np.asarray(out, dtype=np.float32) / 255.0).astype(np.float32)


def fog(image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    # Smooth multiplicative haze from seeded low-frequency noise.
    amount, wibble = [(1.5, 2.0), (2.0, 2.0), (2.5, 1.7), (2.5, 1.5), (3.0, 1.4)][_check_severity(severity) - 1]
    image = _check_image(image)
    h, w = image.shape[:2]
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(max(2, h // 8), max(2, w // 8))) ** wibble
    pil = Image.fromarray((coarse * 255.0).astype(np.uint8))
    haze = np.asarray(pil.resize((w, h), Image.BILINEAR), dtype=np.float32) / 255.0
    peak = image.max()
    out = (image + amount * haze[:, :, None]) * peak / (peak + amount)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


CORRUPTIONS = {
    "brightness": brightness,
    "contrast": contrast,
    "saturate": saturate,
    "pixelate": pixelate,
    "jpeg": jpeg,
    "fog": fog,
}

MANDATORY_CORRUPTIONS = ("brightness", "contrast", "saturate", "pixelate")


def register_corruption(name: str, fn) -> None:
    """Plug in an additional corruption; it must be pure in (image, severity, seed)."""
    CORRUPTIONS[name] = fn


def get_corruption(name: str):
    try:
        return CORRUPTIONS[name]
    except KeyError:
        raise UnknownCorruptionError(
            f"unknown corruption {name!r}; available: {sorted(CORRUPTIONS)}"
        ) from None


def apply_corruption(name: str, image: np.ndarray, severity: int = DEFAULT_SEVERITY, seed: int = 0) -> np.ndarray:
    return get_corruption(name)(image, severity=severity, seed=seed)
