"""Bias scoring and the pseudo-bias-label partition.

The bias score of a sample is |1[prediction correct] - max softmax
probability|: confident-correct samples (the shortcut-friendly ones) score
near 0, confident-wrong samples near 1. Samples scoring strictly above the
arithmetic mean of all scores are pseudo-labeled bias-contrary (1), the rest
bias-guiding (0).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .training import TrainedClassifier, examples_to_arrays, predict_logits


class MissingGroundTruthError(ValueError):
    pass


@dataclass
class BiasScoreRecord:
    example_id: str
    score: float
    correct: bool
    max_prob: float


@dataclass
class Partition:
    threshold: float
    guiding_ids: set
    contrary_ids: set
    per_class_counts: Optional[dict] = None  # class -> {"guiding": n, "contrary": m}

    @property
    def all_ids(self) -> set:
        return self.guiding_ids | self.contrary_ids

    def pseudo_label(self, example_id: str) -> int:
        if example_id in self.contrary_ids:
            return 1
        if example_id in self.guiding_ids:
            return 0
        raise KeyError(example_id)


@dataclass
class PartitionMetrics:
    precision: float
    recall: float
    f1: float

    def to_json_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bias_score(logits, target: int, example_id: str = "") -> BiasScoreRecord:
    """Score one sample from its logits; argmax ties break to the lowest class index."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or len(z) < 2:
        raise ValueError("logits must be a K-vector with K >= 2")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    probs = softmax(z)
    pred = int(np.argmax(probs))  # np.argmax returns the first (lowest) index on ties
    max_prob = float(probs[pred])
    correct = pred == int(target)
    score = abs((1.0 if correct else 0.0) - max_prob)
    return BiasScoreRecord(example_id=example_id, score=score, correct=correct, max_prob=max_prob)


def score_dataset(trained: TrainedClassifier, examples, batch_size: int = 512) -> list:
    """Bias scores for every example, computed in one frozen full pass."""
    images, targets = examples_to_arrays(examples)
    logits = predict_logits(trained, images, batch_size=batch_size)
    return [
        bias_score(logits[i], int(targets[i]), example_id=examples[i].example_id)
        for i in range(len(examples))
    ]


def assign_pseudo_labels(scores, targets: Optional[Mapping[str, int]] = None) -> Partition:
    """Split by the arithmetic mean of all scores; strictly-above means bias-contrary."""
    if not scores:
        raise ValueError("empty score list")
    values = np.array([r.score for r in scores], dtype=np.float64)
    threshold = float(values.mean())
    guiding, contrary = set(), set()
    for rec in scores:
        (contrary if rec.score > threshold else guiding).add(rec.example_id)

    per_class = None
    if targets is not None:
        per_class = {}
        for rec in scores:
            c = int(targets[rec.example_id])
            bucket = per_class.setdefault(c, {"guiding": 0, "contrary": 0})
            bucket["contrary" if rec.example_id in contrary else "guiding"] += 1
    return Partition(threshold=threshold, guiding_ids=guiding, contrary_ids=contrary, per_class_counts=per_class)


def apply_partition(examples, partition: Partition) -> None:
    """Write pseudo labels back onto the examples (and thus their manifests)."""
    for ex in examples:
        ex.pseudo_bias_label = partition.pseudo_label(ex.example_id)


def _binary_prf(tp: int, fp: int, fn: int) -> tuple:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def partition_metrics(partition: Partition, gt_flags: Mapping[str, bool]) -> PartitionMetrics:
    """Macro-averaged precision/recall/F1 over the two sides.

    Each side (guiding, contrary) is scored as the positive class in turn and
    the two results are averaged. Every partitioned id must have a ground
    truth flag (True = bias-contrary).
    """
    missing = [i for i in partition.all_ids if i not in gt_flags or gt_flags[i] is None]
    if missing:
        raise MissingGroundTruthError(
            f"{len(missing)} examples lack gt_bias_flag (e.g. {sorted(missing)[:3]})"
        )
    tp_c = sum(1 for i in partition.contrary_ids if gt_flags[i])
    fp_c = len(partition.contrary_ids) - tp_c
    fn_c = sum(1 for i in partition.guiding_ids if gt_flags[i])
    tp_g = sum(1 for i in partition.guiding_ids if not gt_flags[i])
    fp_g = len(partition.guiding_ids) - tp_g
    fn_g = sum(1 for i in partition.contrary_ids if not gt_flags[i])

    p_c, r_c, f_c = _binary_prf(tp_c, fp_c, fn_c)
    p_g, r_g, f_g = _binary_prf(tp_g, fp_g, fn_g)
    return PartitionMetrics(
        precision=(p_c + p_g) / 2,
        recall=(r_c + r_g) / 2,
        f1=(f_c + f_g) / 2,
    )


def report_thresholds(partition: Partition) -> dict:
    """Threshold plus class-wise contrary fractions, with a printable summary."""
    report = {
        "threshold": partition.threshold,
        "n_guiding": len(partition.guiding_ids),
        "n_contrary": len(partition.contrary_ids),
    }
    lines = [
        f"score threshold (mean): {partition.threshold:.6f}",
        f"guiding: {report['n_guiding']}  contrary: {report['n_contrary']}",
    ]
    if partition.per_class_counts:
        fractions = {}
        for c, bucket in sorted(partition.per_class_counts.items()):
            total = bucket["guiding"] + bucket["contrary"]
            frac = bucket["contrary"] / total if total else 0.0
            fractions[c] = frac
            lines.append(f"class {c}: contrary fraction {frac:.4f} ({bucket['contrary']}/{total})")
        report["class_contrary_fractions"] = fractions
    report["summary"] = "\n".join(lines)
    return report


def save_partition_csv(path, scores, partition: Partition) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["example_id", "score", "pseudo_bias_label"])
        for rec in scores:
            writer.writerow([rec.example_id, f"{rec.score:.10f}", partition.pseudo_label(rec.example_id)])


def load_partition_csv(path) -> tuple:
    """Returns (scores: id -> score, labels: id -> pseudo label)."""
    scores, labels = {}, {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            scores[row["example_id"]] = float(row["score"])
            labels[row["example_id"]] = int(row["pseudo_bias_label"])
    return scores, labels


def partition_from_labels(labels: Mapping[str, int], threshold: float) -> Partition:
    guiding = {i for i, lab in labels.items() if lab == 0}
    contrary = {i for i, lab in labels.items() if lab == 1}
    return Partition(threshold=threshold, guiding_ids=guiding, contrary_ids=contrary)


def save_metrics_json(path, metrics: PartitionMetrics, extra: Optional[dict] = None) -> None:
    payload = metrics.to_json_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
