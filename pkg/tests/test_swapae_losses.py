import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from biaswap.cam import MissingDistributionError, uniform_patch_distribution
from biaswap.swapae import cooccurrence_loss, gan_losses, reconstruction_loss

LOG2 = 0.6931471805599453


def mse_loop_oracle(x, y):
    total = 0.0
    flat_x, flat_y = x.ravel(), y.ravel()
    for a, b in zip(flat_x, flat_y):
        total += (float(a) - float(b)) ** 2
    return total / len(flat_x)


class ConstantPatchD(torch.nn.Module):
    """Perfectly confused patch discriminator: always outputs probability 0.5."""

    def __init__(self):
        super().__init__()
        self.seen_crops = []

    def forward(self, crop, refs):
        self.seen_crops.append(crop.detach())
        return torch.full((crop.shape[0],), 0.5)


def test_reconstruction_identity_is_zero():
    x = torch.rand(2, 3, 8, 8)
    assert float(reconstruction_loss(x, x)) == 0.0


def test_reconstruction_all_ones_vs_zeros_is_one():
    x = torch.zeros(1, 3, 4, 4)
    assert float(reconstruction_loss(x, torch.ones_like(x))) == pytest.approx(1.0)


def test_reconstruction_matches_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(2, 3, 6, 6)).astype(np.float32)
    y = rng.uniform(0, 1, size=(2, 3, 6, 6)).astype(np.float32)
    ours = float(reconstruction_loss(torch.from_numpy(x), torch.from_numpy(y)))
    assert ours == pytest.approx(mse_loop_oracle(x, y), abs=1e-6)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        reconstruction_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 5, 5))


def test_generator_loss_at_half_is_log2():
    pair = gan_losses(torch.tensor([0.9]), torch.tensor([0.5]))
    assert float(pair.generator) == pytest.approx(LOG2, rel=1e-6)


def test_optimal_discriminator_loss_near_zero():
    pair = gan_losses(torch.tensor([1.0 - 1e-7]), torch.tensor([1e-7]))
    assert float(pair.discriminator) == pytest.approx(0.0, abs=1e-4)


def test_gan_losses_match_elementwise_oracle():
    rng = np.random.default_rng(1)
    real = rng.uniform(0.05, 0.95, size=16)
    fake = rng.uniform(0.05, 0.95, size=16)
    pair = gan_losses(torch.from_numpy(real), torch.from_numpy(fake))
    gen_oracle = np.mean([-np.log(f) for f in fake])
    disc_oracle = np.mean([-np.log(r) - np.log(1 - f) for r, f in zip(real, fake)])
    assert float(pair.generator) == pytest.approx(gen_oracle, rel=1e-6)
    assert float(pair.discriminator) == pytest.approx(disc_oracle, rel=1e-6)


def test_gan_losses_are_clamped_finite():
    pair = gan_losses(torch.tensor([0.0]), torch.tensor([1.0]))
    assert np.isfinite(float(pair.generator))
    assert np.isfinite(float(pair.discriminator))


def test_confused_patch_discriminator_gives_log2_both_sides():
    torch.manual_seed(0)
    images = torch.rand(4, 3, 28, 28)
    co = cooccurrence_loss(
        ConstantPatchD(),
        images,
        images.clone(),
        mode="uniform",
        rng=np.random.default_rng(0),
        patch_size=7,
        n_reference_crops=4,
    )
    assert float(co.generator) == pytest.approx(LOG2, rel=1e-6)
    assert float(co.discriminator) == pytest.approx(2 * LOG2, rel=1e-6)


def test_bias_tailored_mode_requires_distributions():
    images = torch.rand(2, 3, 28, 28)
    with pytest.raises(MissingDistributionError):
        cooccurrence_loss(ConstantPatchD(), images, images, mode="bias_tailored", rng=np.random.default_rng(0))


def test_unknown_crop_mode_rejected():
    images = torch.rand(1, 3, 28, 28)
    with pytest.raises(ValueError, match="mode"):
        cooccurrence_loss(ConstantPatchD(), images, images, mode="diagonal", rng=np.random.default_rng(0))


def test_uniform_mode_crop_centers_are_uniform_chi_square():
    # encode the row coordinate into channel 0 and column into channel 1, then
    # recover each crop's top-left corner from its first pixel
    h = w = 28
    coords = np.zeros((1, 3, h, w), dtype=np.float32)
    coords[0, 0] = np.arange(h, dtype=np.float32)[:, None] / h
    coords[0, 1] = np.arange(w, dtype=np.float32)[None, :] / w
    image = torch.from_numpy(coords)
    d = ConstantPatchD()
    rng = np.random.default_rng(5)
    draws = 4000
    for _ in range(draws):
        cooccurrence_loss(d, image, image, mode="uniform", rng=rng, patch_size=7, n_reference_crops=1, sides=("generator",))
    tops = np.array([[float(c[0, 0, 0, 0]) * h, float(c[0, 1, 0, 0]) * w] for c in d.seen_crops])
    # grid is 7x7 over a 28px image; map recovered tops back to cells
    top_values = sorted(set(np.round(tops[:, 0]).astype(int)))
    assert len(top_values) == 7
    cell_of = {t: i for i, t in enumerate(top_values)}
    cells = np.array([cell_of[int(round(r))] * 7 + cell_of[int(round(c))] for r, c in tops])
    counts = np.bincount(cells, minlength=49)
    assert chisquare(counts).pvalue > 0.01


def test_tailored_mode_concentrates_on_peaked_distribution():
    h = w = 28
    image = torch.rand(1, 3, h, w)
    p = np.zeros((7, 7))
    p[3, 4] = 1.0
    from biaswap.cam import PatchDistribution

    dist = PatchDistribution(probabilities=p, temperature=1.0)
    d = ConstantPatchD()
    co = cooccurrence_loss(
        d,
        image,
        image,
        mode="bias_tailored",
        rng=np.random.default_rng(0),
        generated_dists=[dist],
        style_dists=[dist],
        patch_size=7,
        n_reference_crops=2,
    )
    assert float(co.generator) == pytest.approx(LOG2, rel=1e-6)
    # every crop comes from the single allowed cell
    expected_top = int(np.clip(round((3 + 0.5) * 4 - 3.5), 0, 21))
    expected_left = int(np.clip(round((4 + 0.5) * 4 - 3.5), 0, 21))
    ref = image[0, :, expected_top : expected_top + 7, expected_left : expected_left + 7]
    for crop in d.seen_crops:
        torch.testing.assert_close(crop[0], ref)


def test_uniform_distribution_helper_entropy():
    dist = uniform_patch_distribution((7, 7))
    assert dist.entropy() == pytest.approx(np.log(49))
