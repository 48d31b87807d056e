"""Split-wise evaluation and the versioned metrics record."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..training import TrainedClassifier, examples_to_arrays, predict_logits

METRICS_SCHEMA_VERSION = 1


@dataclass
class SplitEvaluation:
    accuracy: float
    confusion: np.ndarray  # (K, K) counts, rows = true class

    def to_json_dict(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}


@dataclass
class MetricsReport:
    schema_version: int
    config_hash: str
    ablation_tag: str
    seed: int
    unbiased_accuracy: float
    bias_guiding_accuracy: float
    bias_contrary_accuracy: Optional[float]
    vanilla_unbiased_accuracy: float
    vanilla_guiding_accuracy: float
    partition_precision: Optional[float]
    partition_recall: Optional[float]
    partition_f1: Optional[float]
    partition_threshold: Optional[float]
    bias_ratio: Optional[float] = None
    loss_curves: dict = field(default_factory=dict)  # name -> csv path

    @property
    def unbiased_delta_over_vanilla(self) -> float:
        return self.unbiased_accuracy - self.vanilla_unbiased_accuracy

    def to_json_dict(self) -> dict:
        d = dict(self.__dict__)
        d["unbiased_delta_over_vanilla"] = self.unbiased_delta_over_vanilla
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d.pop("unbiased_delta_over_vanilla", None)
        return cls(**d)


def evaluate_split(trained: TrainedClassifier, examples) -> SplitEvaluation:
    """Top-1 accuracy plus the confusion matrix for one split."""
    if not examples:
        raise ValueError("empty evaluation split")
    images, targets = examples_to_arrays(examples)
    h, w, c = trained.spec.input_shape
    if images.shape[1:] != (h, w, c):
        raise ValueError(f"split images {images.shape[1:]} do not match classifier input {(h, w, c)}")
    preds = predict_logits(trained, images).argmax(axis=1)
    k = trained.spec.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (targets, preds), 1)
    return SplitEvaluation(accuracy=float((preds == targets).mean()), confusion=confusion)


def evaluate_classifier(trained: TrainedClassifier, dataset) -> dict:
    """Accuracies on the unbiased and guiding splits, plus the contrary subset
    of the unbiased split (examples whose attribute conflicts with the label)."""
    unbiased = dataset.split("unbiased_test")
    guiding = dataset.split("guiding_test")
    result = {
        "unbiased": evaluate_split(trained, unbiased),
        "guiding": evaluate_split(trained, guiding),
    }
    contrary = [ex for ex in unbiased if ex.bias_attr is not None and ex.bias_attr != ex.target]
    if contrary:
        result["contrary"] = evaluate_split(trained, contrary)
    return result


def save_evaluations_json(path, evaluations: dict) -> None:
    with open(path, "w") as f:
        json.dump({name: ev.to_json_dict() for name, ev in evaluations.items()}, f, indent=2)
