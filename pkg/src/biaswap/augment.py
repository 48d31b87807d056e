"""Pairing, bias-swapped generation and dataset union.

Default pairing puts a pseudo-guiding example on the content side and a
pseudo-contrary example of the same class on the style side; the generated
image keeps the content's target label. ``random_pairs`` draws both sides
uniformly from the whole training set (the ablation that removes separation).
``oracle_recolor_swap`` performs the swap with the ground-truth color
operator instead of the trained generator, isolating the partition/augment/
train pipeline from generation quality.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .datasets.colored_mnist import grayscale_of, recolor
from .datasets.types import BiasedDataset, LabeledExample
from .partition import Partition

log = logging.getLogger(__name__)

PAIRING_POLICIES = ("guiding_content_contrary_style", "random_pairs")
SWAPPED_ID_PREFIX = "swap"


class PairingError(ValueError):
    pass


@dataclass
class AugmentationPlan:
    pairing_policy: str = "guiding_content_contrary_style"
    augment_ratio: float = 1.0  # generated images per guiding image
    class_matching: bool = True  # styles drawn from the same target class
    cross_class_fallback: bool = False  # allow cross-class styles when a class has no contrary pool
    seed: int = 0

    def __post_init__(self):
        if self.pairing_policy not in PAIRING_POLICIES:
            raise ValueError(f"unknown pairing_policy {self.pairing_policy!r}")
        if self.augment_ratio <= 0:
            raise ValueError(f"augment_ratio must be positive, got {self.augment_ratio}")

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def _content_multiplicity(n_guiding: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Each content appears floor(ratio) or ceil(ratio) times, totalling round(ratio * n)."""
    total = int(round(ratio * n_guiding))
    base = total // n_guiding
    extra = total - base * n_guiding
    counts = np.full(n_guiding, base, dtype=np.int64)
    if extra:
        counts[rng.choice(n_guiding, size=extra, replace=False)] += 1
    return counts


def build_pairs(partition: Partition, examples, plan: AugmentationPlan, rng=None) -> list:
    """(content_id, style_id) pairs; deterministic under plan.seed."""
    if rng is None:
        rng = np.random.default_rng(plan.seed)
    by_id = {ex.example_id: ex for ex in examples}
    for missing in partition.all_ids - set(by_id):
        raise PairingError(f"partition id {missing!r} not present in dataset")

    if plan.pairing_policy == "random_pairs":
        all_ids = sorted(by_id)
        n_pairs = int(round(plan.augment_ratio * len(partition.guiding_ids)))
        contents = rng.choice(all_ids, size=n_pairs, replace=True)
        styles = rng.choice(all_ids, size=n_pairs, replace=True)
        return list(zip(contents.tolist(), styles.tolist()))

    guiding_by_class: dict = {}
    contrary_by_class: dict = {}
    for ex_id in sorted(partition.guiding_ids):
        guiding_by_class.setdefault(by_id[ex_id].target, []).append(ex_id)
    for ex_id in sorted(partition.contrary_ids):
        contrary_by_class.setdefault(by_id[ex_id].target, []).append(ex_id)
    all_contrary = sorted(partition.contrary_ids)
    if not all_contrary:
        raise PairingError("partition has no contrary examples to draw styles from")

    pairs = []
    for target in sorted(guiding_by_class):
        contents = guiding_by_class[target]
        style_pool = contrary_by_class.get(target, []) if plan.class_matching else all_contrary
        if not style_pool:
            if not plan.cross_class_fallback:
                raise PairingError(
                    f"class {target} has no contrary examples; "
                    "enable cross_class_fallback or disable class_matching"
                )
            style_pool = all_contrary
        counts = _content_multiplicity(len(contents), plan.augment_ratio, rng)
        for content_id, count in zip(contents, counts):
            for _ in range(int(count)):
                pairs.append((content_id, str(rng.choice(style_pool))))
    return pairs


def _swapped_example(image: np.ndarray, content: LabeledExample, style: LabeledExample, index: int) -> LabeledExample:
    return LabeledExample(
        example_id=f"{SWAPPED_ID_PREFIX}-{index:06d}-{content.example_id}",
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        target=content.target,  # label always comes from the content side
        gt_bias_flag=None,  # synthetic: no ground truth exists
        bias_attr=None,
        provenance={"content_id": content.example_id, "style_id": style.example_id},
    )


def generate_bias_swapped(state, pairs, dataset: BiasedDataset, batch_size: int = 64, max_skip_fraction: float = 0.01) -> list:
    """Run the trained generator over all pairs; skip-and-log non-finite outputs."""
    from .swapae.trainer import swap_generate_batch

    dataset_index = dataset.index()
    out = []
    skipped = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        contents = [dataset_index[c] for c, _ in chunk]
        styles = [dataset_index[s] for _, s in chunk]
        images = swap_generate_batch(
            state,
            np.stack([ex.image for ex in contents]),
            np.stack([ex.image for ex in styles]),
        )
        for i, (content, style) in enumerate(zip(contents, styles)):
            if not np.all(np.isfinite(images[i])):
                skipped.append((content.example_id, style.example_id))
                log.warning("non-finite swap output for pair (%s, %s); skipped", content.example_id, style.example_id)
                continue
            out.append(_swapped_example(images[i], content, style, start + i))
    if skipped and len(skipped) > max_skip_fraction * len(pairs):
        raise RuntimeError(f"{len(skipped)}/{len(pairs)} swap outputs were non-finite; first: {skipped[:3]}")
    return out


def oracle_recolor_swap(pairs, dataset: BiasedDataset) -> list:
    """Ground-truth swap for the colored digits: recolor content with the style's color."""
    if dataset.spec.dataset_kind != "colored_mnist":
        raise ValueError(f"oracle recolor swap needs a colored_mnist dataset, got {dataset.spec.dataset_kind!r}")
    palette = [np.asarray(c, dtype=np.float32) for c in dataset.spec.palette_or_corruptions]
    dataset_index = dataset.index()
    out = []
    for i, (content_id, style_id) in enumerate(pairs):
        content = dataset_index[content_id]
        style = dataset_index[style_id]
        if style.bias_attr is None:
            raise ValueError(f"style example {style_id} has no recorded bias attribute")
        image = recolor(grayscale_of(content.image), palette[style.bias_attr])
        out.append(_swapped_example(image, content, style, i))
    return out


def union_dataset(dataset: BiasedDataset, swapped: list) -> BiasedDataset:
    """X_aug = X united with the bias-swapped set; ids must not collide."""
    train_ids = {ex.example_id for ex in dataset.split("train")}
    for ex in swapped:
        if ex.example_id in train_ids:
            raise ValueError(f"id collision: {ex.example_id}")
    splits = dict(dataset.splits)
    splits["train"] = list(dataset.split("train")) + list(swapped)
    return BiasedDataset(spec=dataset.spec, splits=splits)
