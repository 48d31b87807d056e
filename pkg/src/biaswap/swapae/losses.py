"""Loss terms for the swapping autoencoder.

All adversarial terms use the non-saturating convention on discriminator
probabilities with an epsilon clamp, so every logged component is finite and
nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..cam import MissingDistributionError, cells_to_pixel_centers, crop_bounds, sample_patch_centers

D_PROB_EPS = 1e-6


@dataclass
class GanLosses:
    generator: torch.Tensor
    discriminator: torch.Tensor


@dataclass
class CooccurrenceLosses:
    generator: torch.Tensor
    discriminator: torch.Tensor


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all pixels and channels."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).mean()


def _nll(p: torch.Tensor) -> torch.Tensor:
    return -torch.log(p.clamp(D_PROB_EPS, 1.0 - D_PROB_EPS))


def gan_losses(real_probs: torch.Tensor, fake_probs: torch.Tensor) -> GanLosses:
    """Generator side -log D(fake); discriminator side -log D(real) - log(1 - D(fake))."""
    gen = _nll(fake_probs).mean()
    disc = (_nll(real_probs) + _nll(1.0 - fake_probs)).mean()
    return GanLosses(generator=gen, discriminator=disc)


def generator_adversarial_loss(fake_probs: torch.Tensor) -> torch.Tensor:
    return _nll(fake_probs).mean()


def _take_crops(images: torch.Tensor, cells: np.ndarray, grid_shape: tuple, patch_size: int) -> torch.Tensor:
    """Differentiable crops at the pixel centers of the given grid cells.

    images: (B, C, H, W); cells: (B, k, 2) -> crops (B, k, C, p, p).
    """
    b, k = cells.shape[:2]
    h, w = images.shape[2], images.shape[3]
    centers = cells_to_pixel_centers(cells.reshape(-1, 2), (h, w), grid_shape).reshape(b, k, 2)
    crops = []
    for i in range(b):
        per_image = []
        for j in range(k):
            top, left = crop_bounds(centers[i, j], patch_size, (h, w))
            per_image.append(images[i, :, top : top + patch_size, left : left + patch_size])
        crops.append(torch.stack(per_image))
    return torch.stack(crops)


def _sample_cells(distributions, batch_size: int, k: int, mode: str, grid_shape: tuple, rng: np.random.Generator) -> np.ndarray:
    cells = np.empty((batch_size, k, 2), dtype=np.int64)
    for i in range(batch_size):
        dist = distributions[i] if distributions is not None else None
        cells[i] = sample_patch_centers(dist, k, rng, mode=mode, grid_shape=grid_shape)
    return cells


def cooccurrence_loss(
    patch_discriminator,
    generated: torch.Tensor,
    style_images: torch.Tensor,
    mode: str,
    rng: np.random.Generator,
    generated_dists=None,
    style_dists=None,
    patch_size: int = 7,
    n_reference_crops: int = 4,
    sides: tuple = ("generator", "discriminator"),
) -> CooccurrenceLosses:
    """Patch co-occurrence terms for one batch.

    One crop is taken from each generated image and n reference crops from its
    style image. ``bias_tailored`` mode draws the crop centers from the given
    per-image distributions (each image's own map); ``uniform`` mode draws
    them uniformly over the same grid, reproducing the plain random-crop
    sampler. ``sides`` selects which terms to compute (the alternating trainer
    only needs one per phase); an unselected side is returned as None.
    """
    if mode not in ("bias_tailored", "uniform"):
        raise ValueError(f"unknown crop mode {mode!r}")
    if mode == "bias_tailored" and (generated_dists is None or style_dists is None):
        raise MissingDistributionError("bias_tailored co-occurrence needs distributions for both images")

    b = generated.shape[0]
    if generated_dists is not None:
        grid_shape = generated_dists[0].grid_shape
    elif style_dists is not None:
        grid_shape = style_dists[0].grid_shape
    else:
        grid_shape = (generated.shape[2] // 4, generated.shape[3] // 4)

    gen_cells = _sample_cells(generated_dists, b, 1, mode, grid_shape, rng)
    ref_cells = _sample_cells(style_dists, b, n_reference_crops, mode, grid_shape, rng)
    gen_crop = _take_crops(generated, gen_cells, grid_shape, patch_size)[:, 0]
    refs = _take_crops(style_images, ref_cells, grid_shape, patch_size)

    gen_term = None
    if "generator" in sides:
        fake_probs = patch_discriminator(gen_crop, refs)
        gen_term = _nll(fake_probs).mean()

    disc_term = None
    if "discriminator" in sides:
        real_cells = _sample_cells(style_dists, b, 1, mode, grid_shape, rng)
        real_crop = _take_crops(style_images, real_cells, grid_shape, patch_size)[:, 0]
        real_probs = patch_discriminator(real_crop, refs)
        fake_probs_detached = patch_discriminator(gen_crop.detach(), refs)
        disc_term = (_nll(real_probs) + _nll(1.0 - fake_probs_detached)).mean()
    return CooccurrenceLosses(generator=gen_term, discriminator=disc_term)
