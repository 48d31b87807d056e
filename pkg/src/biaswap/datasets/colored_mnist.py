"""Color-biased digit dataset generator.

Protocol: each class is assigned one palette color. A ``bias_ratio`` fraction
of the training images per class is colored with its class color
(bias-guiding); the remainder is colored with a color drawn uniformly at
random from the other K-1 palette entries (bias-contrary). The unbiased test
split colors every image uniformly at random over the full palette,
independent of the label; the guiding test split always uses the class color.
"""
from __future__ import annotations

import colorsys

import numpy as np

from .sources import ImageSource
from .types import BiasedDataset, BiasedDatasetSpec, LabeledExample

DIGIT_IMAGE_SIZE = 28


def hue_palette(k: int = 10) -> list:
    """K maximally hue-separated RGB triples (HSV hues at i/k, full saturation/value).

    Saturation and value are pinned to 1 so the max channel of every color is
    1.0; ``grayscale_of`` relies on that to invert the coloring exactly.
    """
    return [tuple(np.float32(v) for v in colorsys.hsv_to_rgb(i / k, 1.0, 1.0)) for i in range(k)]


def recolor(gray: np.ndarray, rgb) -> np.ndarray:
    """Channel-wise scaling of a grayscale image by an RGB triple; background stays black."""
    if gray.ndim != 2:
        raise ValueError("recolor expects a 2-D grayscale image")
    color = np.asarray(rgb, dtype=np.float32)
    return (gray[:, :, None] * color[None, None, :]).astype(np.float32)


def grayscale_of(colored: np.ndarray) -> np.ndarray:
    """Invert ``recolor`` for palettes whose colors have max channel 1.0."""
    return colored.max(axis=2)


def dominant_hue_index(image: np.ndarray, palette, foreground_threshold: float = 0.2) -> int:
    """Nearest palette entry (by circular hue distance) to the mean foreground color.

    Used as the color probe when checking that a swapped image carries the
    style image's color.
    """
    gray = grayscale_of(image)
    mask = gray > foreground_threshold
    if not mask.any():
        raise ValueError("image has no foreground above threshold")
    mean_rgb = image[mask].mean(axis=0)
    h, s, _v = colorsys.rgb_to_hsv(*(float(c) for c in mean_rgb))
    if s < 1e-3:
        raise ValueError("foreground is achromatic; hue undefined")
    hues = np.array([colorsys.rgb_to_hsv(*(float(c) for c in rgb))[0] for rgb in palette])
    dist = np.abs(hues - h)
    dist = np.minimum(dist, 1.0 - dist)
    return int(np.argmin(dist))


def generate_colored_mnist(spec: BiasedDatasetSpec, source: ImageSource) -> BiasedDataset:
    """Build the three splits from grayscale digits. Deterministic in (spec, source, seed)."""
    if spec.dataset_kind != "colored_mnist":
        raise ValueError(f"spec kind is {spec.dataset_kind!r}, expected colored_mnist")
    if len(source) == 0:
        raise ValueError("empty digit source")
    if source.images.ndim != 3:
        raise ValueError("digit source must be grayscale N x H x W")
    palette = [np.asarray(c, dtype=np.float32) for c in spec.palette_or_corruptions]
    k = len(palette)
    if int(source.labels.max()) >= k:
        raise ValueError(f"source has labels >= palette size {k}")
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
            for i in range(n):
                target = int(labels[i])
                if contrary_mask[i]:
                    others = [j for j in range(k) if j != target]
                    attr = int(rng.choice(others))
                else:
                    attr = target
                examples.append(
                    LabeledExample(
                        example_id=f"cmnist-{split_name}-{i:06d}",
                        image=recolor(images[i], palette[attr]),
                        target=target,
                        gt_bias_flag=bool(contrary_mask[i]),
                        bias_attr=attr,
                    )
                )
        elif split_name == "unbiased_test":
            attrs = rng.integers(0, k, size=n)
            for i in range(n):
                target = int(labels[i])
                attr = int(attrs[i])
                examples.append(
                    LabeledExample(
                        example_id=f"cmnist-{split_name}-{i:06d}",
                        image=recolor(images[i], palette[attr]),
                        target=target,
                        gt_bias_flag=bool(attr != target),
                        bias_attr=attr,
                    )
                )
        else:  # guiding_test: attribute always matches the label
            for i in range(n):
                target = int(labels[i])
                examples.append(
                    LabeledExample(
                        example_id=f"cmnist-{split_name}-{i:06d}",
                        image=recolor(images[i], palette[target]),
                        target=target,
                        gt_bias_flag=False,
                        bias_attr=target,
                    )
                )
        splits[split_name] = examples

    return BiasedDataset(spec=spec, splits=splits)
