import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from biaswap.cam import (
    ImportanceMap,
    MissingDistributionError,
    PatchDistribution,
    compute_cam,
    compute_cam_batch,
    sample_patch_centers,
    sample_patches,
    to_sampling_distribution,
    uniform_patch_distribution,
)
from biaswap.models import ClassifierSpec, UnsupportedArchitectureError, build_classifier
from biaswap.training import TrainConfig, TrainedClassifier, predict_logits


def fresh_classifier(seed=0, base_channels=8, num_classes=10):
    spec = ClassifierSpec(arch="conv_gap", num_classes=num_classes, input_shape=(28, 28, 3), base_channels=base_channels)
    torch.manual_seed(seed)
    model = build_classifier(spec).eval()
    return TrainedClassifier(model, spec, TrainConfig(), 0)


def random_images(n, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(n, 28, 28, 3)).astype(np.float32)


def test_zero_weights_give_zero_map():
    trained = fresh_classifier()
    with torch.no_grad():
        trained.model.head.weight.zero_()
    imap = compute_cam(trained, random_images(1)[0], class_index=3)
    np.testing.assert_array_equal(imap.values, np.zeros_like(imap.values))


def test_single_active_weight_returns_that_channel():
    trained = fresh_classifier()
    with torch.no_grad():
        trained.model.head.weight.zero_()
        trained.model.head.weight[2, 5] = 1.0
    img = random_images(1)[0]
    from biaswap.training import feature_maps

    fmaps, _ = feature_maps(trained, img[None])
    imap = compute_cam(trained, img, class_index=2)
    np.testing.assert_allclose(imap.values, fmaps[0, 5], atol=1e-6)


def test_map_mean_reproduces_logit_both_orderings():
    # sum_k w[c,k] * GAP(f_k)  ==  mean_xy sum_k w[c,k] f_k(x,y)
    rng = np.random.default_rng(5)
    for seed in range(5):
        trained = fresh_classifier(seed=seed)
        img = random_images(1, seed=seed)[0]
        logits = predict_logits(trained, img[None])[0]
        for c in (0, int(rng.integers(10))):
            imap = compute_cam(trained, img, class_index=c)
            assert imap.values.mean() == pytest.approx(logits[c], abs=1e-5)


def test_cam_linear_in_weights():
    trained = fresh_classifier(seed=3)
    img = random_images(1, seed=3)[0]
    before = compute_cam(trained, img, class_index=1).values
    with torch.no_grad():
        trained.model.head.weight[1] *= 2.5
    after = compute_cam(trained, img, class_index=1).values
    np.testing.assert_allclose(after, 2.5 * before, rtol=1e-5, atol=1e-6)


def test_cam_rejects_mlp():
    spec = ClassifierSpec(arch="mlp3", num_classes=10, input_shape=(28, 28, 3), hidden_dim=16)
    trained = TrainedClassifier(build_classifier(spec).eval(), spec, TrainConfig(), 0)
    with pytest.raises(UnsupportedArchitectureError):
        compute_cam(trained, random_images(1)[0], 0)


def test_uniform_map_gives_uniform_distribution():
    imap = ImportanceMap(values=np.full((7, 7), 3.3, dtype=np.float32), class_index=0)
    dist = to_sampling_distribution(imap, temperature=10.0)
    np.testing.assert_allclose(dist.probabilities, 1.0 / 49, rtol=1e-9)


def test_hand_softmax_two_by_two():
    # values (10, 0, 0, 0) at temperature 10 -> softmax(1, 0, 0, 0)
    imap = ImportanceMap(values=np.array([[10.0, 0.0], [0.0, 0.0]], dtype=np.float32), class_index=0)
    dist = to_sampling_distribution(imap, temperature=10.0)
    expected = np.array([[0.4753668864186717, 0.1748777045271094], [0.1748777045271094, 0.1748777045271094]])
    np.testing.assert_allclose(dist.probabilities, expected, rtol=1e-9)


def test_temperature_increases_entropy():
    rng = np.random.default_rng(2)
    imap = ImportanceMap(values=rng.normal(scale=5.0, size=(7, 7)).astype(np.float32), class_index=0)
    ent_1 = to_sampling_distribution(imap, temperature=1.0).entropy()
    ent_10 = to_sampling_distribution(imap, temperature=10.0).entropy()
    ent_huge = to_sampling_distribution(imap, temperature=1e9).entropy()
    assert ent_10 >= ent_1
    assert ent_huge == pytest.approx(np.log(49), abs=1e-6)


def test_distribution_shift_invariance():
    # float64 values so the constant shift itself is exactly representable
    rng = np.random.default_rng(4)
    values = rng.normal(size=(7, 7))
    a = to_sampling_distribution(ImportanceMap(values, 0), 10.0)
    b = to_sampling_distribution(ImportanceMap(values + 123.0, 0), 10.0)
    np.testing.assert_allclose(a.probabilities, b.probabilities, atol=1e-12)


def test_distribution_validation():
    with pytest.raises(ValueError, match="temperature"):
        to_sampling_distribution(ImportanceMap(np.zeros((2, 2), np.float32), 0), temperature=0.0)
    with pytest.raises(ValueError, match="sum to 1"):
        PatchDistribution(probabilities=np.full((2, 2), 0.3), temperature=1.0)


def test_one_hot_distribution_always_samples_that_cell():
    p = np.zeros((4, 4))
    p[2, 1] = 1.0
    dist = PatchDistribution(probabilities=p, temperature=1.0)
    rng = np.random.default_rng(0)
    cells = sample_patch_centers(dist, 50, rng)
    assert np.all(cells == [2, 1])
    image = np.zeros((28, 28, 3), dtype=np.float32)
    crops, centers = sample_patches(image, dist, patch_size=7, n=10, rng=rng)
    assert crops.shape == (10, 7, 7, 3)
    assert np.all(centers == [(2 + 0.5) * 7, (1 + 0.5) * 7])


def test_uniform_mode_chi_square():
    dist = uniform_patch_distribution((4, 4))
    rng = np.random.default_rng(7)
    cells = sample_patch_centers(dist, 100000, rng, mode="uniform")
    flat = cells[:, 0] * 4 + cells[:, 1]
    counts = np.bincount(flat, minlength=16)
    # 3-sigma band around 1/16
    p = 1 / 16
    sigma = np.sqrt(100000 * p * (1 - p))
    assert np.all(np.abs(counts - 100000 * p) <= 3 * sigma)
    assert chisquare(counts).pvalue > 0.01


def test_bias_tailored_mode_matches_distribution_chi_square():
    rng_map = np.random.default_rng(9)
    imap = ImportanceMap(values=rng_map.normal(scale=8.0, size=(7, 7)).astype(np.float32), class_index=0)
    dist = to_sampling_distribution(imap, temperature=10.0)
    rng = np.random.default_rng(11)
    cells = sample_patch_centers(dist, 100000, rng, mode="bias_tailored")
    flat = cells[:, 0] * 7 + cells[:, 1]
    counts = np.bincount(flat, minlength=49)
    assert chisquare(counts, f_exp=100000 * dist.probabilities.ravel()).pvalue > 0.01


def test_crops_stay_in_bounds_and_match_content():
    rng = np.random.default_rng(3)
    image = rng.uniform(0, 1, size=(28, 28, 3)).astype(np.float32)
    dist = uniform_patch_distribution((7, 7))
    crops, centers = sample_patches(image, dist, patch_size=9, n=64, rng=rng, mode="uniform")
    assert crops.shape == (64, 9, 9, 3)
    from biaswap.cam import crop_bounds

    for crop, center in zip(crops, centers):
        top, left = crop_bounds(center, 9, image.shape)
        assert 0 <= top <= 28 - 9 and 0 <= left <= 28 - 9
        np.testing.assert_array_equal(crop, image[top : top + 9, left : left + 9])


def test_patch_larger_than_image_rejected():
    dist = uniform_patch_distribution((4, 4))
    with pytest.raises(ValueError, match="patch_size"):
        sample_patches(np.zeros((16, 16, 3), np.float32), dist, patch_size=17, n=1, rng=np.random.default_rng(0))


def test_bias_tailored_requires_distribution():
    with pytest.raises(MissingDistributionError):
        sample_patch_centers(None, 4, np.random.default_rng(0), mode="bias_tailored")


def test_sampling_deterministic_under_seed():
    dist = uniform_patch_distribution((7, 7))
    a = sample_patch_centers(dist, 100, np.random.default_rng(42))
    b = sample_patch_centers(dist, 100, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_batch_cam_matches_single():
    trained = fresh_classifier(seed=8)
    imgs = random_images(4, seed=8)
    classes = [0, 3, 7, 9]
    batch = compute_cam_batch(trained, imgs, classes)
    for i, c in enumerate(classes):
        single = compute_cam(trained, imgs[i], c)
        np.testing.assert_allclose(batch[i], single.values, atol=1e-6)
