"""Corruption-biased image dataset generator.

Same class-to-attribute correlation protocol as the colored digits, with a
texture corruption per class instead of a color. Every corruption call is a
pure function of (image, severity, per-example seed), so the dataset is fully
determined by (spec, source, seed).
"""
from __future__ import annotations

import zlib

import numpy as np

from .corruptions import apply_corruption, get_corruption
from .sources import ImageSource
from .types import BiasedDataset, BiasedDatasetSpec, LabeledExample


def _example_seed(base_seed: int, split_name: str, index: int) -> int:
    # zlib.crc32 is stable across processes, unlike builtin str hashing
    return int(np.random.SeedSequence([base_seed, zlib.crc32(split_name.encode()), index]).generate_state(1)[0])


def generate_corrupted_cifar10(spec: BiasedDatasetSpec, source: ImageSource) -> BiasedDataset:
    if spec.dataset_kind != "corrupted_cifar10":
        raise ValueError(f"spec kind is {spec.dataset_kind!r}, expected corrupted_cifar10")
    if len(source) == 0:
        raise ValueError("empty image source")
    if source.images.ndim != 4 or source.images.shape[3] != 3:
        raise ValueError("image source must be color N x H x W x 3")
    names = list(spec.palette_or_corruptions)
    for name in names:
        get_corruption(name)  # raise UnknownCorruptionError up front
    k = len(names)
    if int(source.labels.max()) >= k:
        raise ValueError(f"source has labels >= corruption count {k}")
    total = sum(spec.split_sizes.values())
    if len(source) < total:
        raise ValueError(f"source has {len(source)} images, spec needs {total}")

    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(source))
    cursor = 0
    splits = {}

    for split_name in ("train", "unbiased_test", "guiding_test"):
        n = spec.split_sizes.get(split_name, 0)
        idx = order[cursor : cursor + n]
        cursor += n
        images = source.images[idx]
        labels = source.labels[idx]
        examples = []

        if split_name == "train":
            contrary_mask = np.zeros(n, dtype=bool)
            for c in range(k):
                members = np.where(labels == c)[0]
                n_contrary = int(round((1.0 - spec.bias_ratio) * len(members)))
                if n_contrary > 0:
                    chosen = rng.choice(members, size=n_contrary, replace=False)
                    contrary_mask[chosen] = True
            attrs = np.empty(n, dtype=np.int64)
            for i in range(n):
                target = int(labels[i])
                if contrary_mask[i]:
                    others = [j for j in range(k) if j != target]
                    attrs[i] = int(rng.choice(others))
                else:
                    attrs[i] = target
        elif split_name == "unbiased_test":
            contrary_mask = None
            attrs = rng.integers(0, k, size=n)
        else:
            contrary_mask = None
            attrs = labels.copy()

        for i in range(n):
            target = int(labels[i])
            attr = int(attrs[i])
            if split_name == "train":
                flag = bool(contrary_mask[i])
            else:
                flag = bool(attr != target)
            corrupted = apply_corruption(
                names[attr],
                images[i],
                severity=spec.severity,
                seed=_example_seed(spec.seed, split_name, i),
            )
            examples.append(
                LabeledExample(
                    example_id=f"ccifar-{split_name}-{i:06d}",
                    image=np.clip(corrupted, 0.0, 1.0).astype(np.float32),
                    target=target,
                    gt_bias_flag=flag,
                    bias_attr=attr,
                )
            )
        splits[split_name] = examples

    return BiasedDataset(spec=spec, splits=splits)
