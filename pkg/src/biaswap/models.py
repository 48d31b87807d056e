"""Classifier architectures.

``conv_gap`` ends in global average pooling followed by a bias-free linear
head, which is what makes per-location importance maps well defined: the
class-c logit equals the spatial mean of sum_k w[c,k] * f[k](x,y).
``mlp3`` (three hidden layers) has no spatial feature map and therefore no
importance map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

ARCHS = ("conv_gap", "mlp3")


class UnsupportedArchitectureError(ValueError):
    pass


@dataclass
class ClassifierSpec:
    arch: str = "conv_gap"
    num_classes: int = 10
    input_shape: tuple = (28, 28, 3)  # H, W, C
    base_channels: int = 16  # conv_gap width
    hidden_dim: int = 100  # mlp3 width

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise UnsupportedArchitectureError(f"unknown arch {self.arch!r}")
        self.input_shape = tuple(self.input_shape)

    def to_json_dict(self) -> dict:
        return {
            "arch": self.arch,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
            "base_channels": self.base_channels,
            "hidden_dim": self.hidden_dim,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClassifierSpec":
        d = dict(d)
        d["input_shape"] = tuple(d["input_shape"])
        return cls(**d)


def _normalize(x: torch.Tensor) -> torch.Tensor:
    # inputs live in [0, 1]; training normalizes each channel to mean 0.5 / std 0.5
    return (x - 0.5) / 0.5


class ConvGAP(nn.Module):
    """Conv stack -> global average pooling -> bias-free linear head.

    Two stride-2 blocks then two stride-1 blocks, so the final feature map is
    input_size / 4 per side (``feature_stride`` = 4).
    """

    feature_stride = 4

    def __init__(self, spec: ClassifierSpec):
        super().__init__()
        c = spec.base_channels
        in_ch = spec.input_shape[2]
        self.spec = spec
        self.blocks = nn.Sequential(
            nn.Conv2d(in_ch, c, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * c, 4 * c, 3, stride=1, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * c, 4 * c, 3, stride=1, padding=1),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Linear(4 * c, spec.num_classes, bias=False)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Final spatial feature maps f[k](x, y), shape (N, K_feat, H', W')."""
        return self.blocks(_normalize(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f = self.features(x)
        pooled = f.mean(dim=(2, 3))
        return self.head(pooled)


class MLP3(nn.Module):
    """Flatten -> three hidden ReLU layers -> linear."""

    def __init__(self, spec: ClassifierSpec):
        super().__init__()
        h, w, c = spec.input_shape
        d = spec.hidden_dim
        self.spec = spec
        self.net = nn.Sequential(
            nn.Flatten(),
            nn.Linear(h * w * c, d),
            nn.ReLU(inplace=True),
            nn.Linear(d, d),
            nn.ReLU(inplace=True),
            nn.Linear(d, d),
            nn.ReLU(inplace=True),
            nn.Linear(d, spec.num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(_normalize(x))


def build_classifier(spec: ClassifierSpec) -> nn.Module:
    if spec.arch == "conv_gap":
        return ConvGAP(spec)
    if spec.arch == "mlp3":
        return MLP3(spec)
    raise UnsupportedArchitectureError(f"unknown arch {spec.arch!r}")
