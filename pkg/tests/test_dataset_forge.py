import numpy as np
import pytest

from biaswap.datasets import (
    BiasedDataset,
    BiasedDatasetSpec,
    ChecksumError,
    LabeledExample,
    dominant_hue_index,
    generate_colored_mnist,
    grayscale_of,
    hue_palette,
    load_manifest,
    recolor,
    render_digit_source,
    write_manifest,
)


def recolor_oracle(gray, rgb):
    """Independent recolor reference: explicit per-pixel, per-channel loop."""
    h, w = gray.shape
    out = np.zeros((h, w, 3), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            for c in range(3):
                out[i, j, c] = gray[i, j] * rgb[c]
    return out


@pytest.fixture(scope="module")
def source():
    return render_digit_source(700, seed=11)


def make_spec(ratio=0.9, seed=3, train=400, test=100):
    return BiasedDatasetSpec(
        "colored_mnist",
        ratio,
        hue_palette(),
        split_sizes={"train": train, "unbiased_test": test, "guiding_test": test},
        seed=seed,
    )


def test_palette_has_ten_distinct_full_value_colors():
    pal = hue_palette()
    assert len(pal) == 10
    assert len({tuple(np.round(c, 6)) for c in pal}) == 10
    for c in pal:
        assert max(c) == pytest.approx(1.0)


def test_recolor_matches_independent_oracle(source):
    gray = source.images[0]
    red = hue_palette()[0]
    np.testing.assert_array_equal(recolor(gray, red), recolor_oracle(gray, red))


def test_guiding_examples_use_class_color_exactly(source):
    # recolor oracle applied to the recovered grayscale must reproduce the output
    ds = generate_colored_mnist(make_spec(), source)
    pal = hue_palette()
    for ex in ds.split("train")[:50]:
        if ex.gt_bias_flag:
            continue
        assert ex.bias_attr == ex.target
        gray = grayscale_of(ex.image)
        np.testing.assert_allclose(ex.image, recolor_oracle(gray, pal[ex.target]), atol=1e-6)
        assert dominant_hue_index(ex.image, pal) == ex.target


def test_contrary_count_is_rounded_ratio(source):
    ds = generate_colored_mnist(make_spec(ratio=0.93), source)
    train = ds.split("train")
    targets = np.array([ex.target for ex in train])
    flags = np.array([ex.gt_bias_flag for ex in train])
    for c in range(10):
        n_class = int((targets == c).sum())
        n_contrary = int(flags[targets == c].sum())
        assert n_contrary == round(0.07 * n_class)
        # guiding fraction within 1/class_count of the requested ratio
        assert abs((n_class - n_contrary) / n_class - 0.93) <= 1.0 / n_class


def test_ratio_one_means_no_contrary(source):
    ds = generate_colored_mnist(make_spec(ratio=1.0), source)
    assert all(ex.gt_bias_flag is False for ex in ds.split("train"))


def test_contrary_examples_never_use_their_class_color(source):
    ds = generate_colored_mnist(make_spec(ratio=0.7), source)
    contrary = [ex for ex in ds.split("train") if ex.gt_bias_flag]
    assert contrary
    assert all(ex.bias_attr != ex.target for ex in contrary)


def test_guiding_test_split_attribute_equals_target(source):
    ds = generate_colored_mnist(make_spec(), source)
    assert all(ex.bias_attr == ex.target for ex in ds.split("guiding_test"))


def test_unbiased_split_attribute_independent_of_target():
    source = render_digit_source(1400, seed=2)
    spec = BiasedDatasetSpec(
        "colored_mnist",
        0.99,
        hue_palette(),
        split_sizes={"train": 100, "unbiased_test": 1200, "guiding_test": 100},
        seed=8,
    )
    ds = generate_colored_mnist(spec, source)
    split = ds.split("unbiased_test")
    counts = np.zeros((10, 10))
    for ex in split:
        counts[ex.target, ex.bias_attr] += 1
    n = len(split)
    p = 1.0 / 100
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_determinism_byte_identical(source):
    spec = make_spec(seed=17)
    a = generate_colored_mnist(spec, source)
    b = generate_colored_mnist(make_spec(seed=17), source)
    assert a == b
    for split in a.splits:
        blob_a = np.stack([ex.image for ex in a.split(split)])
        blob_b = np.stack([ex.image for ex in b.split(split)])
        assert blob_a.tobytes() == blob_b.tobytes()


def test_generation_errors(source):
    with pytest.raises(ValueError, match="bias_ratio"):
        make_spec(ratio=1.5)
    with pytest.raises(ValueError, match="bias_ratio"):
        make_spec(ratio=0.0)
    short_palette = BiasedDatasetSpec(
        "colored_mnist",
        0.9,
        hue_palette(5),
        split_sizes={"train": 50},
        seed=0,
    )
    with pytest.raises(ValueError, match="palette"):
        generate_colored_mnist(short_palette, source)  # 10 source classes, 5 colors
    empty = render_digit_source(1, seed=0)
    empty.images = empty.images[:0]
    empty.labels = empty.labels[:0]
    with pytest.raises(ValueError, match="empty"):
        generate_colored_mnist(make_spec(), empty)


def test_manifest_round_trip(tmp_path, source):
    ds = generate_colored_mnist(make_spec(), source)
    out = write_manifest(ds, tmp_path / "ds")
    loaded = load_manifest(out)
    assert loaded == ds


def test_manifest_round_trip_preserves_pseudo_labels_and_provenance(tmp_path, source):
    ds = generate_colored_mnist(make_spec(train=40, test=10), source)
    ds.split("train")[0].pseudo_bias_label = 1
    ds.split("train")[1].pseudo_bias_label = 0
    ds.split("train")[2].provenance = {"content_id": "a", "style_id": "b"}
    loaded = load_manifest(write_manifest(ds, tmp_path / "ds"))
    assert loaded == ds
    reloaded_train = loaded.split("train")
    assert reloaded_train[0].pseudo_bias_label == 1
    assert reloaded_train[3].pseudo_bias_label is None


def test_manifest_tamper_detection(tmp_path, source):
    ds = generate_colored_mnist(make_spec(train=40, test=10), source)
    out = write_manifest(ds, tmp_path / "ds")
    blob = np.load(out / "blob_train.npy")
    blob[5, 3, 3, 0] += 0.25
    np.save(out / "blob_train.npy", blob)
    with pytest.raises(ChecksumError) as err:
        load_manifest(out)
    assert "cmnist-train-000005" in str(err.value)


def test_manifest_rejects_empty_dataset(tmp_path, source):
    spec = make_spec()
    with pytest.raises(ValueError, match="empty"):
        write_manifest(BiasedDataset(spec=spec, splits={"train": []}), tmp_path / "ds")


def test_example_validation():
    bad = LabeledExample("x", np.full((4, 4, 3), 1.5, dtype=np.float32), 0, False)
    with pytest.raises(ValueError, match="outside"):
        bad.validate(10)
    bad2 = LabeledExample("y", np.zeros((4, 4, 3), dtype=np.float32), 12, False)
    with pytest.raises(ValueError, match="target"):
        bad2.validate(10)
