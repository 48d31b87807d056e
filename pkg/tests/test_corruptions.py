import numpy as np
import pytest

from biaswap.datasets import (
    BiasedDatasetSpec,
    ImageSource,
    MANDATORY_CORRUPTIONS,
    UnknownCorruptionError,
    apply_corruption,
    generate_corrupted_cifar10,
    register_corruption,
)
from biaswap.datasets.corruptions import CORRUPTIONS


def smooth_images(n, seed, size=32):
    """Low-frequency random color images standing in for photos."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.1, 0.9, size=(n, 4, 4, 3)).astype(np.float32)
    return np.stack([np.kron(im, np.ones((size // 4, size // 4, 1), dtype=np.float32)) for im in coarse])


@pytest.fixture(scope="module")
def source():
    n = 400
    rng = np.random.default_rng(0)
    return ImageSource(images=smooth_images(n, seed=1), labels=rng.integers(0, 4, size=n).astype(np.int64))


@pytest.mark.parametrize("name", sorted(CORRUPTIONS))
def test_corruptions_are_deterministic(name):
    img = smooth_images(1, seed=7)[0]
    a = apply_corruption(name, img, severity=3, seed=123)
    b = apply_corruption(name, img, severity=3, seed=123)
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.float32
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_pixelate_applied_twice_identical():
    img = smooth_images(1, seed=9)[0]
    for severity in range(1, 6):
        np.testing.assert_array_equal(
            apply_corruption("pixelate", img, severity=severity, seed=4),
            apply_corruption("pixelate", img, severity=severity, seed=4),
        )


def test_brightness_mean_strictly_increases():
    img = smooth_images(1, seed=3)[0] * 0.6  # headroom so clipping cannot mask the shift
    for severity in range(1, 6):
        out = apply_corruption("brightness", img, severity=severity)
        assert out.mean() > img.mean()


def test_contrast_shrinks_deviation_from_mean():
    img = smooth_images(1, seed=5)[0]
    out = apply_corruption("contrast", img, severity=4)
    assert out.std() < img.std()


def test_unknown_corruption_and_bad_severity():
    img = smooth_images(1, seed=2)[0]
    with pytest.raises(UnknownCorruptionError, match="glitch"):
        apply_corruption("glitch", img)
    with pytest.raises(ValueError, match="severity"):
        apply_corruption("brightness", img, severity=6)
    with pytest.raises(ValueError, match="severity"):
        apply_corruption("brightness", img, severity=0)


def test_register_corruption_plugin():
    def invert(image, severity=4, seed=0):
        return (1.0 - image).astype(np.float32)

    register_corruption("invert", invert)
    try:
        img = smooth_images(1, seed=6)[0]
        np.testing.assert_allclose(apply_corruption("invert", img), 1.0 - img)
    finally:
        del CORRUPTIONS["invert"]


def test_corrupted_dataset_split_composition(source):
    spec = BiasedDatasetSpec(
        "corrupted_cifar10",
        0.95,
        list(MANDATORY_CORRUPTIONS),
        split_sizes={"train": 300, "unbiased_test": 50, "guiding_test": 50},
        seed=12,
    )
    ds = generate_corrupted_cifar10(spec, source)
    train = ds.split("train")
    targets = np.array([ex.target for ex in train])
    flags = np.array([ex.gt_bias_flag for ex in train])
    for c in range(4):
        n_class = int((targets == c).sum())
        assert int(flags[targets == c].sum()) == round(0.05 * n_class)
    assert all(ex.bias_attr == ex.target for ex in ds.split("guiding_test"))
    # per-example determinism of the whole dataset
    again = generate_corrupted_cifar10(spec, source)
    assert again == ds


def test_corrupted_dataset_rejects_unknown_name(source):
    spec = BiasedDatasetSpec(
        "corrupted_cifar10",
        0.95,
        ["brightness", "contrast", "saturate", "warp"],
        split_sizes={"train": 40},
        seed=0,
    )
    with pytest.raises(UnknownCorruptionError):
        generate_corrupted_cifar10(spec, source)
