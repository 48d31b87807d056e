"""Importance maps from a GAP-headed classifier and the patch-sampling grid.

The importance of spatial location (x, y) for class c is
sum_k w[c, k] * f[k](x, y); averaging it over all locations reproduces the
class-c logit because the head is linear over global average pooling. The map
is turned into a sampling distribution with a temperature-smoothed softmax
over locations, and crop centers are drawn from it (or uniformly, which
reproduces the plain random-crop sampler).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import ConvGAP, UnsupportedArchitectureError
from .training import TrainedClassifier, feature_maps

SAMPLE_MODES = ("bias_tailored", "uniform")
DEFAULT_TEMPERATURE = 10.0


class MissingDistributionError(ValueError):
    pass


@dataclass
class ImportanceMap:
    values: np.ndarray  # H' x W' float32 at feature-map resolution
    class_index: int
    source_example_id: str = ""


@dataclass
class PatchDistribution:
    probabilities: np.ndarray  # H' x W', nonnegative, sums to 1
    temperature: float

    def __post_init__(self):
        p = self.probabilities
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-6:
            raise ValueError("probabilities must be nonnegative and sum to 1 within 1e-6")

    @property
    def grid_shape(self) -> tuple:
        return self.probabilities.shape

    def entropy(self) -> float:
        p = self.probabilities[self.probabilities > 0]
        return float(-(p * np.log(p)).sum())


def compute_cam(trained: TrainedClassifier, image: np.ndarray, class_index: int, example_id: str = "") -> ImportanceMap:
    """Importance map of one image for one class; requires the conv_gap head."""
    maps = compute_cam_batch(trained, image[None], [class_index])
    return ImportanceMap(values=maps[0], class_index=int(class_index), source_example_id=example_id)


def compute_cam_batch(trained: TrainedClassifier, images: np.ndarray, class_indices) -> np.ndarray:
    """Batched importance maps, shape (N, H', W')."""
    if not isinstance(trained.model, ConvGAP):
        raise UnsupportedArchitectureError("importance maps require the conv_gap architecture")
    fmaps, weights = feature_maps(trained, images)
    out = np.empty((len(images),) + fmaps.shape[2:], dtype=np.float32)
    for i, c in enumerate(class_indices):
        out[i] = np.tensordot(weights[int(c)], fmaps[i], axes=([0], [0]))
    return out


def to_sampling_distribution(imap: ImportanceMap, temperature: float = DEFAULT_TEMPERATURE) -> PatchDistribution:
    """Softmax over locations of values / temperature, computed with max-subtraction."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    v = np.asarray(imap.values, dtype=np.float64) / temperature
    v = v - v.max()
    e = np.exp(v)
    return PatchDistribution(probabilities=(e / e.sum()).astype(np.float64), temperature=float(temperature))


def uniform_patch_distribution(grid_shape) -> PatchDistribution:
    n = int(np.prod(grid_shape))
    return PatchDistribution(probabilities=np.full(grid_shape, 1.0 / n), temperature=float("inf"))


def sample_patch_centers(
    distribution: Optional[PatchDistribution],
    n: int,
    rng: np.random.Generator,
    mode: str = "bias_tailored",
    grid_shape: Optional[tuple] = None,
) -> np.ndarray:
    """Draw n grid cells i.i.d.; returns (n, 2) int array of (row, col) cells.

    ``uniform`` mode draws every cell with equal probability, which is the
    plain random-crop sampler the tailored one must degrade to.
    """
    if mode not in SAMPLE_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "bias_tailored":
        if distribution is None:
            raise MissingDistributionError("bias_tailored sampling requires a PatchDistribution")
        shape = distribution.grid_shape
        flat_p = distribution.probabilities.ravel()
        flat_p = flat_p / flat_p.sum()
        cells = rng.choice(len(flat_p), size=n, p=flat_p)
    else:
        shape = distribution.grid_shape if distribution is not None else grid_shape
        if shape is None:
            raise ValueError("uniform sampling needs a distribution or grid_shape")
        cells = rng.integers(0, int(np.prod(shape)), size=n)
    return np.stack(np.unravel_index(cells, shape), axis=1)


def cells_to_pixel_centers(cells: np.ndarray, image_shape: tuple, grid_shape: tuple) -> np.ndarray:
    """Map grid cells to pixel-space centers via the cumulative stride."""
    h, w = image_shape[:2]
    gh, gw = grid_shape
    stride_y, stride_x = h / gh, w / gw
    centers = np.empty_like(cells, dtype=np.float64)
    centers[:, 0] = (cells[:, 0] + 0.5) * stride_y
    centers[:, 1] = (cells[:, 1] + 0.5) * stride_x
    return centers


def crop_bounds(center: np.ndarray, patch_size: int, image_shape: tuple) -> tuple:
    """Top-left corner of a patch centered at ``center``, clamped inside the image."""
    h, w = image_shape[:2]
    top = int(np.clip(round(center[0] - patch_size / 2), 0, h - patch_size))
    left = int(np.clip(round(center[1] - patch_size / 2), 0, w - patch_size))
    return top, left


def sample_patches(
    image: np.ndarray,
    distribution: Optional[PatchDistribution],
    patch_size: int,
    n: int,
    rng: np.random.Generator,
    mode: str = "bias_tailored",
) -> tuple:
    """n crops of patch_size x patch_size plus the sampled (row, col) pixel centers.

    The returned centers are the un-clamped cell centers (so their statistics
    match the sampling distribution exactly); only the crop windows are
    clamped to fit in the image.
    """
    h, w = image.shape[:2]
    if patch_size > min(h, w):
        raise ValueError(f"patch_size {patch_size} larger than image {image.shape[:2]}")
    if distribution is None:
        raise MissingDistributionError("sample_patches needs a distribution to define the grid")
    cells = sample_patch_centers(distribution, n, rng, mode=mode)
    grid_shape = distribution.grid_shape
    centers = cells_to_pixel_centers(cells, image.shape, grid_shape)
    crops = []
    for center in centers:
        top, left = crop_bounds(center, patch_size, image.shape)
        crops.append(image[top : top + patch_size, left : left + patch_size])
    return np.stack(crops), centers
