"""Flat key-value pipeline configuration with a content hash.

The config file format is one ``key = value`` pair per line with ``#``
comments. Every key has a typed default below; unknown keys are rejected. The
config hash covers every value except ``run_root`` (where artifacts land does
not change what they are), and it names the run directory.
"""
from __future__ import annotations

import hashlib
import os
import zlib
from pathlib import Path

import numpy as np

from ..augment import AugmentationPlan
from ..datasets.colored_mnist import hue_palette
from ..datasets.corruptions import MANDATORY_CORRUPTIONS
from ..datasets.types import BiasedDatasetSpec
from ..models import ClassifierSpec
from ..swapae.trainer import SwapAEConfig
from ..training import TrainConfig

RUN_ROOT_ENV_VAR = "BIASWAP_RUN_ROOT"

# key -> (type, default, help)
SCHEMA = {
    "profile": (str, "desk", "informational tag for the parameter set"),
    "seed": (int, 0, "global seed; every stage derives its own stream from it"),
    "run_root": (str, "runs", f"artifact root; env {RUN_ROOT_ENV_VAR} overrides"),
    "dataset.kind": (str, "colored_mnist", "colored_mnist or corrupted_cifar10"),
    "dataset.bias_ratio": (float, 0.99, "fraction of bias-guiding samples per class"),
    "dataset.train_size": (int, 10000, ""),
    "dataset.unbiased_test_size": (int, 2000, ""),
    "dataset.guiding_test_size": (int, 2000, ""),
    "dataset.severity": (int, 4, "corruption severity 1-5 (corrupted_cifar10)"),
    "dataset.source": (str, "synthetic_digits", "synthetic_digits or idx:<images>,<labels>"),
    "dataset.image_size": (int, 28, ""),
    "biased.arch": (str, "conv_gap", "biased classifier architecture (needs conv_gap for maps)"),
    "biased.base_channels": (int, 16, ""),
    "biased.loss": (str, "gce", ""),
    "biased.q": (float, 0.7, "GCE exponent"),
    "biased.epochs": (int, 20, ""),
    "biased.snapshot_epoch": (int, 5, "scoring checkpoint epoch"),
    "biased.batch_size": (int, 256, ""),
    "biased.learning_rate": (float, 1e-3, ""),
    "biased.beta1": (float, 0.9, ""),
    "biased.beta2": (float, 0.999, ""),
    "swapae.steps": (int, 5000, ""),
    "swapae.batch_size": (int, 16, ""),
    "swapae.learning_rate": (float, 1e-3, ""),
    "swapae.beta1": (float, 0.0, ""),
    "swapae.beta2": (float, 0.99, ""),
    "swapae.lambda_recon": (float, 1.0, ""),
    "swapae.lambda_gan_recon": (float, 1.0, ""),
    "swapae.lambda_gan_swap": (float, 1.0, ""),
    "swapae.lambda_cooccur": (float, 1.0, ""),
    "swapae.temperature": (float, 10.0, "sampling-probability smoothing"),
    "swapae.patch_size": (int, 7, ""),
    "swapae.n_reference_crops": (int, 4, ""),
    "swapae.base_channels": (int, 16, ""),
    "swapae.content_channels": (int, 4, ""),
    "swapae.style_dim": (int, 8, ""),
    "swapae.crop_mode": (str, "bias_tailored", "bias_tailored or uniform (c2 ablation)"),
    "swapae.r1_weight": (float, 0.0, "optional gradient penalty on the image discriminator"),
    "swapae.seed_offset": (int, 0, "vary for generator seed replicates"),
    "swapae.sample_every": (int, 500, "contact-sheet dump period (0 = off)"),
    "augment.pairing_policy": (str, "guiding_content_contrary_style", "or random_pairs (c1 ablation)"),
    "augment.ratio": (float, 1.0, "generated images per guiding image"),
    "augment.class_matching": (bool, True, "styles drawn from the same target class"),
    "augment.cross_class_fallback": (bool, False, ""),
    "augment.oracle_swap": (bool, False, "use the ground-truth recolor operator instead of the generator"),
    "debias.arch": (str, "mlp3", ""),
    "debias.hidden_dim": (int, 100, ""),
    "debias.base_channels": (int, 16, ""),
    "debias.epochs": (int, 20, ""),
    "debias.batch_size": (int, 256, ""),
    "debias.learning_rate": (float, 1e-3, ""),
    "debias.beta1": (float, 0.9, ""),
    "debias.beta2": (float, 0.999, ""),
}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, raw: str):
    typ = SCHEMA[key][0]
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


class PipelineConfig:
    """Typed view over the flat key-value map."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default, _) in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            expected = SCHEMA[key][0]
            if not isinstance(value, expected) or (expected is not bool and isinstance(value, bool)):
                value = _parse_value(key, str(value))
            self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, overrides: dict | None = None, **kw) -> "PipelineConfig":
        values = dict(self.values)
        values.update(overrides or {})
        values.update({k.replace("__", "."): v for k, v in kw.items()})
        return PipelineConfig(values)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        values = {}
        for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
        return cls(values)

    def to_file(self, path) -> None:
        lines = ["# biaswap pipeline configuration"]
        for key in sorted(self.values):
            comment = SCHEMA[key][2]
            suffix = f"  # {comment}" if comment else ""
            lines.append(f"{key} = {self._format(self.values[key])}{suffix}")
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        return repr(value) if isinstance(value, float) else str(value)

    def config_hash(self) -> str:
        hasher = hashlib.sha256()
        for key in sorted(self.values):
            if key == "run_root":
                continue
            hasher.update(f"{key}={self._format(self.values[key])}\n".encode())
        return hasher.hexdigest()[:12]

    def run_root(self) -> Path:
        return Path(os.environ.get(RUN_ROOT_ENV_VAR, self.values["run_root"]))

    def run_dir(self) -> Path:
        return self.run_root() / self.config_hash()

    def stage_seed(self, stage: str) -> int:
        return int(
            np.random.SeedSequence([self.values["seed"], zlib.crc32(stage.encode())]).generate_state(1)[0]
            % (2**31)
        )

    # --- per-module views -------------------------------------------------

    def dataset_spec(self) -> BiasedDatasetSpec:
        kind = self.values["dataset.kind"]
        attrs = hue_palette() if kind == "colored_mnist" else list(MANDATORY_CORRUPTIONS)
        return BiasedDatasetSpec(
            dataset_kind=kind,
            bias_ratio=self.values["dataset.bias_ratio"],
            palette_or_corruptions=attrs,
            split_sizes={
                "train": self.values["dataset.train_size"],
                "unbiased_test": self.values["dataset.unbiased_test_size"],
                "guiding_test": self.values["dataset.guiding_test_size"],
            },
            severity=self.values["dataset.severity"],
            seed=self.stage_seed("data"),
        )

    def _classifier_spec(self, prefix: str) -> ClassifierSpec:
        size = self.values["dataset.image_size"]
        return ClassifierSpec(
            arch=self.values[f"{prefix}.arch"],
            num_classes=10,
            input_shape=(size, size, 3),
            base_channels=self.values.get(f"{prefix}.base_channels", 16),
            hidden_dim=self.values.get(f"{prefix}.hidden_dim", 100),
        )

    def biased_classifier_spec(self) -> ClassifierSpec:
        return self._classifier_spec("biased")

    def debias_classifier_spec(self) -> ClassifierSpec:
        return self._classifier_spec("debias")

    def biased_train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.values["biased.loss"],
            q=self.values["biased.q"],
            epochs=self.values["biased.epochs"],
            batch_size=self.values["biased.batch_size"],
            learning_rate=self.values["biased.learning_rate"],
            optimizer_betas=(self.values["biased.beta1"], self.values["biased.beta2"]),
            seed=self.stage_seed("biased_train"),
            snapshot_epoch=self.values["biased.snapshot_epoch"],
        )

    def debias_train_config(self) -> TrainConfig:
        return TrainConfig(
            loss="ce",
            epochs=self.values["debias.epochs"],
            batch_size=self.values["debias.batch_size"],
            learning_rate=self.values["debias.learning_rate"],
            optimizer_betas=(self.values["debias.beta1"], self.values["debias.beta2"]),
            seed=self.stage_seed("debias_train"),
            snapshot_epoch=None,
        )

    def swapae_config(self) -> SwapAEConfig:
        return SwapAEConfig(
            steps=self.values["swapae.steps"],
            batch_size=self.values["swapae.batch_size"],
            image_size=self.values["dataset.image_size"],
            learning_rate=self.values["swapae.learning_rate"],
            optimizer_betas=(self.values["swapae.beta1"], self.values["swapae.beta2"]),
            lambda_recon=self.values["swapae.lambda_recon"],
            lambda_gan_recon=self.values["swapae.lambda_gan_recon"],
            lambda_gan_swap=self.values["swapae.lambda_gan_swap"],
            lambda_cooccur=self.values["swapae.lambda_cooccur"],
            crop_mode=self.values["swapae.crop_mode"],
            patch_size=self.values["swapae.patch_size"],
            n_reference_crops=self.values["swapae.n_reference_crops"],
            base_channels=self.values["swapae.base_channels"],
            content_channels=self.values["swapae.content_channels"],
            style_dim=self.values["swapae.style_dim"],
            r1_weight=self.values["swapae.r1_weight"],
            seed=self.stage_seed("swapae_train") + self.values["swapae.seed_offset"],
            sample_every=self.values["swapae.sample_every"],
        )

    def augmentation_plan(self) -> AugmentationPlan:
        return AugmentationPlan(
            pairing_policy=self.values["augment.pairing_policy"],
            augment_ratio=self.values["augment.ratio"],
            class_matching=self.values["augment.class_matching"],
            cross_class_fallback=self.values["augment.cross_class_fallback"],
            seed=self.stage_seed("augment"),
        )

    def ablation_tag(self) -> str:
        no_separation = self.values["augment.pairing_policy"] == "random_pairs"
        no_tailored_crops = self.values["swapae.crop_mode"] == "uniform"
        if no_separation and no_tailored_crops:
            tag = "w/o c1+c2"
        elif no_separation:
            tag = "w/o c1"
        elif no_tailored_crops:
            tag = "w/o c2"
        else:
            tag = "full"
        if self.values["augment.oracle_swap"]:
            tag += " (oracle swap)"
        return tag
