"""Desk-scale swapping-autoencoder networks.

Encoder splits an image into a spatial content tensor and a pooled style
vector; the generator rebuilds an image from any (content, style) pair with
the style injected through per-channel modulation at every resolution. The
image discriminator judges whole images; the patch discriminator judges
whether one crop co-occurs (shares texture statistics) with a pooled set of
reference crops.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _norm(x: torch.Tensor) -> torch.Tensor:
    return (x - 0.5) / 0.5


def _down_size(s: int) -> int:
    # kernel 4, stride 2, padding 1
    return (s - 2) // 2 + 1


class Encoder(nn.Module):
    def __init__(self, image_size: int = 28, in_ch: int = 3, base: int = 32, content_channels: int = 4, style_dim: int = 8):
        super().__init__()
        if image_size % 4 != 0:
            raise ValueError("image_size must be divisible by 4")
        self.content_channels = content_channels
        self.style_dim = style_dim
        self.trunk = nn.Sequential(
            nn.Conv2d(in_ch, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, 2 * base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.to_content = nn.Conv2d(2 * base, content_channels, 1)
        self.style_conv = nn.Sequential(
            nn.Conv2d(2 * base, 4 * base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.to_style = nn.Linear(4 * base, style_dim)

    def forward(self, x: torch.Tensor) -> tuple:
        h = self.trunk(_norm(x))
        z_c = self.to_content(h)
        s = self.style_conv(h).mean(dim=(2, 3))
        z_s = self.to_style(s)
        return z_c, z_s


class ModulatedBlock(nn.Module):
    """Conv + per-channel style modulation (scale and shift from the style vector)."""

    def __init__(self, in_ch: int, out_ch: int, style_dim: int, upsample: bool = False):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.film = nn.Linear(style_dim, 2 * out_ch)

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        h = self.conv(x)
        gamma, beta = self.film(style).chunk(2, dim=1)
        h = h * (1.0 + gamma[:, :, None, None]) + beta[:, :, None, None]
        return F.leaky_relu(h, 0.2, inplace=True)


class Generator(nn.Module):
    def __init__(self, content_channels: int = 4, style_dim: int = 8, base: int = 32):
        super().__init__()
        self.blocks = nn.ModuleList(
            [
                ModulatedBlock(content_channels, 2 * base, style_dim),
                ModulatedBlock(2 * base, base, style_dim, upsample=True),
                ModulatedBlock(base, base // 2, style_dim, upsample=True),
            ]
        )
        self.to_rgb = nn.Conv2d(base // 2, 3, 3, padding=1)

    def forward(self, z_c: torch.Tensor, z_s: torch.Tensor) -> torch.Tensor:
        h = z_c
        for block in self.blocks:
            h = block(h, z_s)
        return torch.sigmoid(self.to_rgb(h))


class Discriminator(nn.Module):
    """Whole-image discriminator; outputs a probability in (0, 1)."""

    def __init__(self, image_size: int = 28, in_ch: int = 3, base: int = 32):
        super().__init__()
        self.convs = nn.Sequential(
            nn.Conv2d(in_ch, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, 2 * base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * base, 4 * base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        s = _down_size(_down_size(_down_size(image_size)))
        self.fc = nn.Linear(4 * base * s * s, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.convs(_norm(x))
        return torch.sigmoid(self.fc(h.flatten(1))).squeeze(1)


class PatchDiscriminator(nn.Module):
    """Co-occurrence discriminator: one crop against n pooled reference crops."""

    def __init__(self, in_ch: int = 3, base: int = 32):
        super().__init__()
        self.feat_dim = 4 * base
        self.patch_encoder = nn.Sequential(
            nn.Conv2d(in_ch, base, 3, stride=1, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, 2 * base, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * base, 4 * base, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.joint = nn.Sequential(
            nn.Linear(2 * self.feat_dim, self.feat_dim),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(self.feat_dim, 1),
        )

    def encode_patch(self, patches: torch.Tensor) -> torch.Tensor:
        return self.patch_encoder(_norm(patches)).flatten(1)

    def forward(self, crop: torch.Tensor, reference_crops: torch.Tensor) -> torch.Tensor:
        """crop: (B, C, p, p); reference_crops: (B, n, C, p, p) -> probability per pair."""
        b, n = reference_crops.shape[:2]
        crop_feat = self.encode_patch(crop)
        ref_feat = self.encode_patch(reference_crops.flatten(0, 1)).reshape(b, n, -1).mean(dim=1)
        logit = self.joint(torch.cat([crop_feat, ref_feat], dim=1))
        return torch.sigmoid(logit).squeeze(1)
