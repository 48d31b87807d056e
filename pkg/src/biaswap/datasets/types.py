"""Core dataset records shared by the generators, the partitioner and the augmenter."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

VALID_DATASET_KINDS = ("colored_mnist", "corrupted_cifar10")
SPLIT_NAMES = ("train", "unbiased_test", "guiding_test")


@dataclass
class LabeledExample:
    """One image with its target label and bias bookkeeping.

    ``gt_bias_flag`` is True for bias-contrary examples (attribute conflicts
    with the dominant class-wise attribute), False for bias-guiding ones, and
    None for generated examples where no ground truth exists.
    ``bias_attr`` records which palette/corruption index was actually applied.
    """

    example_id: str
    image: np.ndarray  # H x W x C float32 in [0, 1]
    target: int
    gt_bias_flag: Optional[bool]
    bias_attr: Optional[int] = None
    pseudo_bias_label: Optional[int] = None  # 1 = bias-contrary, set by the partitioner
    provenance: Optional[dict] = None  # e.g. {"content_id": ..., "style_id": ...}

    def validate(self, num_classes: int) -> None:
        if self.image.ndim != 3:
            raise ValueError(f"{self.example_id}: image must be H x W x C")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise ValueError(f"{self.example_id}: pixel values outside [0, 1]")
        if not 0 <= self.target < num_classes:
            raise ValueError(f"{self.example_id}: target {self.target} >= K={num_classes}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledExample):
            return NotImplemented
        return (
            self.example_id == other.example_id
            and self.target == other.target
            and self.gt_bias_flag == other.gt_bias_flag
            and self.bias_attr == other.bias_attr
            and self.pseudo_bias_label == other.pseudo_bias_label
            and self.provenance == other.provenance
            and self.image.shape == other.image.shape
            and self.image.dtype == other.image.dtype
            and np.array_equal(self.image, other.image)
        )


@dataclass
class BiasedDatasetSpec:
    """Full recipe for one synthetic biased dataset.

    ``palette_or_corruptions`` holds exactly K bias attributes, one per class:
    RGB triples for colored_mnist, corruption names for corrupted_cifar10.
    Identical spec + seed must produce a byte-identical dataset.
    """

    dataset_kind: str
    bias_ratio: float
    palette_or_corruptions: list
    split_sizes: dict = field(default_factory=lambda: {"train": 10000, "unbiased_test": 2000, "guiding_test": 2000})
    severity: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.dataset_kind not in VALID_DATASET_KINDS:
            raise ValueError(f"unknown dataset_kind {self.dataset_kind!r}")
        if not 0.0 < self.bias_ratio <= 1.0:
            raise ValueError(f"bias_ratio must be in (0, 1], got {self.bias_ratio}")
        if len(self.palette_or_corruptions) < 2:
            raise ValueError("need at least 2 bias attributes")
        for split in self.split_sizes:
            if split not in SPLIT_NAMES:
                raise ValueError(f"unknown split {split!r}")

    @property
    def num_classes(self) -> int:
        return len(self.palette_or_corruptions)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        if self.dataset_kind == "colored_mnist":
            d["palette_or_corruptions"] = [[float(v) for v in rgb] for rgb in self.palette_or_corruptions]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "BiasedDatasetSpec":
        d = dict(d)
        if d["dataset_kind"] == "colored_mnist":
            d["palette_or_corruptions"] = [tuple(rgb) for rgb in d["palette_or_corruptions"]]
        return cls(**d)


@dataclass
class BiasedDataset:
    """Generated dataset: one list of examples per split plus the spec that made it."""

    spec: BiasedDatasetSpec
    splits: dict  # split name -> list[LabeledExample]

    def split(self, name: str) -> list:
        return self.splits[name]

    def index(self) -> dict:
        """example_id -> example over all splits; ids are globally unique."""
        out = {}
        for examples in self.splits.values():
            for ex in examples:
                if ex.example_id in out:
                    raise ValueError(f"duplicate example_id {ex.example_id}")
                out[ex.example_id] = ex
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, BiasedDataset):
            return NotImplemented
        return self.spec == other.spec and self.splits == other.splits
