"""Deterministic classifier training shared by the biased and debiased stages."""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .losses import ce_loss_from_logits, gce_loss_from_logits
from .models import ClassifierSpec, ConvGAP, UnsupportedArchitectureError, build_classifier

CHECKPOINT_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch_index: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    loss: str = "gce"  # "gce" or "ce"
    q: float = 0.7
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer_betas: tuple = (0.9, 0.999)
    seed: int = 0
    snapshot_epoch: Optional[int] = 50  # checkpoint used for bias scoring

    def __post_init__(self):
        if self.loss not in ("gce", "ce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must be in (0, 1], got {self.q}")
        self.optimizer_betas = tuple(self.optimizer_betas)

    def to_json_dict(self) -> dict:
        return {
            "loss": self.loss,
            "q": self.q,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer_betas": list(self.optimizer_betas),
            "seed": self.seed,
            "snapshot_epoch": self.snapshot_epoch,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainedClassifier:
    model: torch.nn.Module
    spec: ClassifierSpec
    config: TrainConfig
    epoch: int


@dataclass
class TrainResult:
    classifier: TrainedClassifier
    snapshot: Optional[TrainedClassifier]
    history: list = field(default_factory=list)  # per-epoch dicts: epoch, loss, accuracy


def examples_to_arrays(examples) -> tuple:
    images = np.stack([ex.image for ex in examples]).astype(np.float32)
    targets = np.array([ex.target for ex in examples], dtype=np.int64)
    return images, targets


def _to_nchw(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))


def train_classifier(examples, spec: ClassifierSpec, config: TrainConfig, checkpoint_dir=None) -> TrainResult:
    """Train on a list of LabeledExample. Bitwise reproducible under a fixed seed.

    Emits per-epoch loss/accuracy; keeps a snapshot of the model at
    ``config.snapshot_epoch`` (the checkpoint later used for bias scoring).
    """
    if not examples:
        raise ValueError("empty training set")
    images, targets = examples_to_arrays(examples)
    h, w, c = spec.input_shape
    if images.shape[1:] != (h, w, c):
        raise ValueError(f"images {images.shape[1:]} do not match input_shape {(h, w, c)}")

    torch.manual_seed(config.seed)
    model = build_classifier(spec)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.optimizer_betas)
    gen = torch.Generator().manual_seed(config.seed)

    x_all = _to_nchw(images)
    y_all = torch.from_numpy(targets)
    n = len(examples)

    history = []
    snapshot = None
    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(n, generator=gen)
        epoch_loss = 0.0
        correct = 0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            opt.zero_grad()
            logits = model(xb)
            if config.loss == "gce":
                loss = gce_loss_from_logits(logits, yb, config.q)
            else:
                loss = ce_loss_from_logits(logits, yb)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, bi)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * len(idx)
            correct += int((logits.argmax(dim=1) == yb).sum())
        history.append({"epoch": epoch, "loss": epoch_loss / n, "accuracy": correct / n})

        if config.snapshot_epoch is not None and epoch == config.snapshot_epoch:
            snap_model = build_classifier(spec)
            snap_model.load_state_dict(copy.deepcopy(model.state_dict()))
            snap_model.eval()
            snapshot = TrainedClassifier(snap_model, spec, config, epoch)

    model.eval()
    result = TrainResult(
        classifier=TrainedClassifier(model, spec, config, config.epochs),
        snapshot=snapshot,
        history=history,
    )
    if checkpoint_dir is not None:
        ckpt_dir = Path(checkpoint_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt_dir / "final.pt", result.classifier)
        if snapshot is not None:
            save_checkpoint(ckpt_dir / f"snapshot_epoch{snapshot.epoch}.pt", snapshot)
        write_loss_curve_csv(ckpt_dir / "loss_curve.csv", history)
    return result


@torch.no_grad()
def predict_logits(trained: TrainedClassifier, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Per-example logits for a stack of H x W x C images in [0, 1]."""
    trained.model.eval()
    out = []
    x_all = _to_nchw(np.asarray(images, dtype=np.float32))
    for start in range(0, len(x_all), batch_size):
        out.append(trained.model(x_all[start : start + batch_size]).numpy())
    return np.concatenate(out)


@torch.no_grad()
def feature_maps(trained: TrainedClassifier, images: np.ndarray, batch_size: int = 512) -> tuple:
    """Spatial feature maps f[k](x, y) plus head weights w[c, k]; conv_gap only."""
    if not isinstance(trained.model, ConvGAP):
        raise UnsupportedArchitectureError(
            f"feature maps require the conv_gap architecture, got {trained.spec.arch!r}"
        )
    trained.model.eval()
    x_all = _to_nchw(np.asarray(images, dtype=np.float32))
    maps = []
    for start in range(0, len(x_all), batch_size):
        maps.append(trained.model.features(x_all[start : start + batch_size]).numpy())
    weights = trained.model.head.weight.detach().numpy()
    return np.concatenate(maps), weights


def accuracy(trained: TrainedClassifier, examples, batch_size: int = 512) -> float:
    images, targets = examples_to_arrays(examples)
    logits = predict_logits(trained, images, batch_size)
    return float((logits.argmax(axis=1) == targets).mean())


def save_checkpoint(path, trained: TrainedClassifier) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "spec": trained.spec.to_json_dict(),
            "train_config": trained.config.to_json_dict(),
            "epoch": trained.epoch,
            "state_dict": trained.model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> TrainedClassifier:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r}")
    spec = ClassifierSpec.from_json_dict(payload["spec"])
    model = build_classifier(spec)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return TrainedClassifier(model, spec, TrainConfig.from_json_dict(payload["train_config"]), payload["epoch"])


def write_loss_curve_csv(path, history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "loss", "accuracy"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
