"""Training loop and inference ops for the swapping autoencoder."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .losses import cooccurrence_loss, gan_losses, generator_adversarial_loss, reconstruction_loss
from .networks import Discriminator, Encoder, Generator, PatchDiscriminator

SWAPAE_CHECKPOINT_VERSION = 1


class SwapTrainingDivergedError(RuntimeError):
    def __init__(self, step: int, component: str):
        super().__init__(f"non-finite {component} loss at step {step}")
        self.step = step
        self.component = component


@dataclass
class LatentPair:
    z_c: torch.Tensor  # content: (C_c, H/4, W/4)
    z_s: torch.Tensor  # style: (C_s,)


@dataclass
class SwapAEConfig:
    steps: int = 5000
    batch_size: int = 16
    image_size: int = 28
    learning_rate: float = 1e-3
    optimizer_betas: tuple = (0.0, 0.99)
    lambda_recon: float = 1.0
    lambda_gan_recon: float = 1.0
    lambda_gan_swap: float = 1.0
    lambda_cooccur: float = 1.0
    crop_mode: str = "bias_tailored"  # or "uniform"
    patch_size: int = 7
    n_reference_crops: int = 4
    base_channels: int = 16
    content_channels: int = 4
    style_dim: int = 8
    r1_weight: float = 0.0  # gradient penalty on D, off by default
    seed: int = 0
    log_every: int = 50
    sample_every: int = 0  # 0 disables sample grids
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.crop_mode not in ("bias_tailored", "uniform"):
            raise ValueError(f"unknown crop_mode {self.crop_mode!r}")
        self.optimizer_betas = tuple(self.optimizer_betas)

    def to_json_dict(self) -> dict:
        d = dict(self.__dict__)
        d["optimizer_betas"] = list(self.optimizer_betas)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SwapAEConfig":
        return cls(**d)


@dataclass
class PairBatch:
    """One training batch: content images, style images and their targets (NHWC in [0, 1])."""

    content: np.ndarray
    style: np.ndarray
    content_targets: np.ndarray
    style_targets: np.ndarray


@dataclass
class SwapAEState:
    encoder: Encoder
    generator: Generator
    discriminator: Discriminator
    patch_discriminator: PatchDiscriminator
    g_opt: torch.optim.Adam
    d_opt: torch.optim.Adam
    config: SwapAEConfig
    crop_rng: np.random.Generator
    step: int = 0

    def generator_modules(self):
        return (self.encoder, self.generator)

    def discriminator_modules(self):
        return (self.discriminator, self.patch_discriminator)


def init_swapae(config: SwapAEConfig) -> SwapAEState:
    torch.manual_seed(config.seed)
    enc = Encoder(
        image_size=config.image_size,
        base=config.base_channels,
        content_channels=config.content_channels,
        style_dim=config.style_dim,
    )
    gen = Generator(
        content_channels=config.content_channels,
        style_dim=config.style_dim,
        base=config.base_channels,
    )
    disc = Discriminator(image_size=config.image_size, base=config.base_channels)
    patch_disc = PatchDiscriminator(base=config.base_channels)
    g_opt = torch.optim.Adam(
        list(enc.parameters()) + list(gen.parameters()),
        lr=config.learning_rate,
        betas=config.optimizer_betas,
    )
    d_opt = torch.optim.Adam(
        list(disc.parameters()) + list(patch_disc.parameters()),
        lr=config.learning_rate,
        betas=config.optimizer_betas,
    )
    return SwapAEState(
        encoder=enc,
        generator=gen,
        discriminator=disc,
        patch_discriminator=patch_disc,
        g_opt=g_opt,
        d_opt=d_opt,
        config=config,
        crop_rng=np.random.default_rng(np.random.SeedSequence([config.seed, 0xC509])),
    )


def _to_torch(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2)))


def _to_numpy_image(x: torch.Tensor) -> np.ndarray:
    return x.detach().numpy().transpose(1, 2, 0).astype(np.float32)


def _check_finite(value: torch.Tensor, step: int, component: str) -> float:
    if not torch.isfinite(value):
        raise SwapTrainingDivergedError(step, component)
    return float(value.detach())


def training_step(
    state: SwapAEState,
    batch: PairBatch,
    cam_provider: Optional[Callable] = None,
) -> dict:
    """One alternating discriminator/generator update; returns the loss components.

    ``cam_provider(images_nhwc, targets) -> list[PatchDistribution]`` supplies
    the per-image sampling grids in bias_tailored mode; the generated image
    uses its own map (computed on the generated pixels for the content
    target), the style image its own.
    """
    cfg = state.config
    if cfg.crop_mode == "bias_tailored" and cam_provider is None:
        raise ValueError("bias_tailored crop mode requires a cam_provider")

    x1 = _to_torch(batch.content)
    x2 = _to_torch(batch.style)
    adversarial_on = cfg.lambda_gan_recon > 0 or cfg.lambda_gan_swap > 0 or cfg.lambda_cooccur > 0
    losses: dict = {}

    # the swap image has identical pixels in both phases (G weights change only
    # at the end of the step), so its sampling distribution is computed once
    gen_dists = style_dists = None
    swap_detached = None
    if adversarial_on:
        with torch.no_grad():
            z_c1, z_s1 = state.encoder(x1)
            _, z_s2 = state.encoder(x2)
            recon_detached = state.generator(z_c1, z_s1)
            swap_detached = state.generator(z_c1, z_s2)
        if cfg.lambda_cooccur > 0 and cfg.crop_mode == "bias_tailored":
            gen_dists = cam_provider(swap_detached.numpy().transpose(0, 2, 3, 1), batch.content_targets)
            style_dists = cam_provider(batch.style, batch.style_targets)

        # discriminator phase
        state.d_opt.zero_grad()
        d_loss = torch.zeros(())
        if cfg.lambda_gan_recon > 0 or cfg.lambda_gan_swap > 0:
            real_in = torch.cat([x1, x2])
            fakes = []
            if cfg.lambda_gan_recon > 0:
                fakes.append(recon_detached)
            if cfg.lambda_gan_swap > 0:
                fakes.append(swap_detached)
            if cfg.r1_weight > 0:
                real_in.requires_grad_(True)
            real_probs = state.discriminator(real_in)
            fake_probs = state.discriminator(torch.cat(fakes))
            image_d = gan_losses(real_probs, fake_probs).discriminator
            losses["d_image"] = _check_finite(image_d, state.step, "d_image")
            d_loss = d_loss + image_d
            if cfg.r1_weight > 0:
                (grad,) = torch.autograd.grad(real_probs.sum(), real_in, create_graph=True)
                r1 = grad.pow(2).sum(dim=(1, 2, 3)).mean()
                losses["d_r1"] = _check_finite(r1, state.step, "d_r1")
                d_loss = d_loss + cfg.r1_weight * r1
        if cfg.lambda_cooccur > 0:
            co = cooccurrence_loss(
                state.patch_discriminator,
                swap_detached,
                x2,
                cfg.crop_mode,
                state.crop_rng,
                generated_dists=gen_dists,
                style_dists=style_dists,
                patch_size=cfg.patch_size,
                n_reference_crops=cfg.n_reference_crops,
                sides=("discriminator",),
            )
            losses["d_cooccur"] = _check_finite(co.discriminator, state.step, "d_cooccur")
            d_loss = d_loss + cfg.lambda_cooccur * co.discriminator
        d_loss.backward()
        state.d_opt.step()

    # generator phase
    state.g_opt.zero_grad()
    z_c1, z_s1 = state.encoder(x1)
    _, z_s2 = state.encoder(x2)
    recon = state.generator(z_c1, z_s1)
    g_loss = torch.zeros(())
    if cfg.lambda_recon > 0:
        l_recon = reconstruction_loss(x1, recon)
        losses["recon"] = _check_finite(l_recon, state.step, "recon")
        g_loss = g_loss + cfg.lambda_recon * l_recon
    if cfg.lambda_gan_recon > 0:
        l_gan_recon = generator_adversarial_loss(state.discriminator(recon))
        losses["gan_recon"] = _check_finite(l_gan_recon, state.step, "gan_recon")
        g_loss = g_loss + cfg.lambda_gan_recon * l_gan_recon
    if cfg.lambda_gan_swap > 0 or cfg.lambda_cooccur > 0:
        swap = state.generator(z_c1, z_s2)
        if cfg.lambda_gan_swap > 0:
            l_gan_swap = generator_adversarial_loss(state.discriminator(swap))
            losses["gan_swap"] = _check_finite(l_gan_swap, state.step, "gan_swap")
            g_loss = g_loss + cfg.lambda_gan_swap * l_gan_swap
        if cfg.lambda_cooccur > 0:
            co = cooccurrence_loss(
                state.patch_discriminator,
                swap,
                x2,
                cfg.crop_mode,
                state.crop_rng,
                generated_dists=gen_dists,
                style_dists=style_dists,
                patch_size=cfg.patch_size,
                n_reference_crops=cfg.n_reference_crops,
                sides=("generator",),
            )
            losses["cooccur"] = _check_finite(co.generator, state.step, "cooccur")
            g_loss = g_loss + cfg.lambda_cooccur * co.generator
    g_loss.backward()
    state.g_opt.step()

    state.step += 1
    return losses


def train_swap_autoencoder(
    pair_provider: Callable,
    config: SwapAEConfig,
    cam_provider: Optional[Callable] = None,
    out_dir=None,
) -> tuple:
    """Run the full loop: returns (state, history of per-step loss dicts).

    ``pair_provider(batch_size, rng) -> PairBatch`` supplies pairing;
    separation and its c1 ablation differ only in the provider.
    """
    state = init_swapae(config)
    pair_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x9A12]))
    history = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for step in range(config.steps):
        batch = pair_provider(config.batch_size, pair_rng)
        losses = training_step(state, batch, cam_provider=cam_provider)
        history.append({"step": step, **losses})
        if out is not None:
            if config.sample_every and (step + 1) % config.sample_every == 0:
                save_sample_grid(out / f"samples_step{step + 1:06d}.png", state, batch)
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                save_swapae_checkpoint(out / f"checkpoint_step{step + 1:06d}.pt", state)

    if out is not None:
        save_swapae_checkpoint(out / "final.pt", state)
        write_swapae_loss_csv(out / "loss_curve.csv", history)
    return state, history


@torch.no_grad()
def encode(state: SwapAEState, image: np.ndarray) -> LatentPair:
    """Encode one H x W x C image in [0, 1]."""
    _check_resolution(state, image)
    state.encoder.eval()
    z_c, z_s = state.encoder(_to_torch(image[None]))
    state.encoder.train()
    return LatentPair(z_c=z_c[0], z_s=z_s[0])


@torch.no_grad()
def decode(state: SwapAEState, z_c: torch.Tensor, z_s: torch.Tensor) -> np.ndarray:
    state.generator.eval()
    img = state.generator(z_c[None], z_s[None])[0]
    state.generator.train()
    return _to_numpy_image(img)


def swap_generate(state: SwapAEState, content: np.ndarray, style: np.ndarray) -> np.ndarray:
    """Decode (content's spatial code, style's pooled code) -> bias-swapped image."""
    if state.step == 0:
        warnings.warn("swap_generate called on an untrained state", stacklevel=2)
    z_c = encode(state, content).z_c
    z_s = encode(state, style).z_s
    return decode(state, z_c, z_s)


@torch.no_grad()
def swap_generate_batch(state: SwapAEState, contents: np.ndarray, styles: np.ndarray) -> np.ndarray:
    if state.step == 0:
        warnings.warn("swap_generate_batch called on an untrained state", stacklevel=2)
    state.encoder.eval()
    state.generator.eval()
    z_c, _ = state.encoder(_to_torch(contents))
    _, z_s = state.encoder(_to_torch(styles))
    out = state.generator(z_c, z_s)
    state.encoder.train()
    state.generator.train()
    return out.numpy().transpose(0, 2, 3, 1).astype(np.float32)


def _check_resolution(state: SwapAEState, image: np.ndarray) -> None:
    size = state.config.image_size
    if image.shape[:2] != (size, size):
        raise ValueError(f"image {image.shape[:2]} does not match configured resolution {size}")


def save_sample_grid(path, state: SwapAEState, batch: PairBatch, n: int = 8) -> None:
    """Dump a (content | style | swapped) contact sheet as one PNG."""
    from PIL import Image

    n = min(n, len(batch.content))
    swapped = swap_generate_batch(state, batch.content[:n], batch.style[:n])
    rows = []
    for i in range(n):
        rows.append(np.concatenate([batch.content[i], batch.style[i], swapped[i]], axis=1))
    sheet = (np.clip(np.concatenate(rows, axis=0), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(sheet).save(path)


def write_swapae_loss_csv(path, history) -> None:
    if not history:
        return
    fields = ["step"] + sorted({k for row in history for k in row} - {"step"})
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def save_swapae_checkpoint(path, state: SwapAEState) -> None:
    torch.save(
        {
            "format_version": SWAPAE_CHECKPOINT_VERSION,
            "config": state.config.to_json_dict(),
            "step": state.step,
            "encoder": state.encoder.state_dict(),
            "generator": state.generator.state_dict(),
            "discriminator": state.discriminator.state_dict(),
            "patch_discriminator": state.patch_discriminator.state_dict(),
            "g_opt": state.g_opt.state_dict(),
            "d_opt": state.d_opt.state_dict(),
            "crop_rng": state.crop_rng.bit_generator.state,
        },
        path,
    )


def load_swapae_checkpoint(path) -> SwapAEState:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != SWAPAE_CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r}")
    state = init_swapae(SwapAEConfig.from_json_dict(payload["config"]))
    state.encoder.load_state_dict(payload["encoder"])
    state.generator.load_state_dict(payload["generator"])
    state.discriminator.load_state_dict(payload["discriminator"])
    state.patch_discriminator.load_state_dict(payload["patch_discriminator"])
    state.g_opt.load_state_dict(payload["g_opt"])
    state.d_opt.load_state_dict(payload["d_opt"])
    state.crop_rng.bit_generator.state = payload["crop_rng"]
    state.step = payload["step"]
    return state
