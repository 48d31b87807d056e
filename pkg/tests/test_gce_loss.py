import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from biaswap.losses import gce_gradient_check, gce_loss, gce_loss_from_logits


def gce_scalar_oracle(p_y, q):
    """Independent scalar evaluation via math.pow."""
    return (1.0 - math.pow(p_y, q)) / q


def numpy_gce_from_logits(z, target, q):
    """float64 reference used by the finite-difference check."""
    z = np.asarray(z, dtype=np.float64)
    p = np.exp(z - z.max())
    p /= p.sum()
    return (1.0 - p[target] ** q) / q


def finite_difference_grad(z, target, q, h=1e-6):
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        grad[i] = (numpy_gce_from_logits(zp, target, q) - numpy_gce_from_logits(zm, target, q)) / (2 * h)
    return grad


def test_gce_perfect_prediction_is_zero():
    for q in (0.3, 0.7, 1.0):
        assert gce_loss([1.0, 0.0, 0.0], 0, q) == 0.0


def test_gce_vanishing_probability_hits_clamped_limit():
    probs = [0.0, 1.0]
    # clamp at 1e-12 forces (1 - 1e-12^0.7) / 0.7
    assert gce_loss(probs, 0, 0.7) == pytest.approx(1.4285714228841833, abs=1e-12)
    assert gce_loss(probs, 0, 0.7) == pytest.approx(1 / 0.7, abs=1e-6)


def test_gce_half_probability_frozen_value():
    # oracle: (1 - 0.5^0.7) / 0.7 evaluated independently
    assert gce_scalar_oracle(0.5, 0.7) == pytest.approx(0.5491825618964884, abs=1e-15)
    assert gce_loss([0.5, 0.5], 0, 0.7) == pytest.approx(0.5491825618964884, rel=1e-12)


def test_gce_q_one_equals_one_minus_p():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.dirichlet(np.ones(5))
        y = int(rng.integers(5))
        assert gce_loss(p, y, 1.0) == pytest.approx(1.0 - p[y], rel=1e-9)


def test_gce_input_validation():
    with pytest.raises(ValueError, match="sum"):
        gce_loss([0.5, 0.4], 0, 0.7)
    with pytest.raises(ValueError, match="q"):
        gce_loss([0.5, 0.5], 0, 1.5)
    with pytest.raises(ValueError, match="q"):
        gce_loss([0.5, 0.5], 0, 0.0)
    with pytest.raises(ValueError, match="target"):
        gce_loss([0.5, 0.5], 3, 0.7)


@given(
    p_raw=st.lists(st.floats(0.01, 100.0), min_size=2, max_size=10),
    target=st.integers(0, 9),
    q=st.sampled_from([0.3, 0.7, 1.0]),
)
@settings(max_examples=200, deadline=None)
def test_gce_nonnegative_and_zero_iff_certain(p_raw, target, q):
    p = np.array(p_raw) / np.sum(p_raw)
    target = target % len(p)
    loss = gce_loss(p, target, q)
    assert loss >= 0.0
    if p[target] < 1.0:
        assert loss > 0.0


def test_gce_from_logits_matches_scalar_path():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(8, 10)).astype(np.float32)
    y = rng.integers(0, 10, size=8)
    batched = gce_loss_from_logits(torch.from_numpy(z), torch.from_numpy(y), 0.7)
    per_example = [
        gce_loss(np.exp(z[i] - z[i].max()) / np.exp(z[i] - z[i].max()).sum(), int(y[i]), 0.7)
        for i in range(8)
    ]
    assert float(batched) == pytest.approx(np.mean(per_example), rel=1e-5)


def test_autograd_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(10):
        z = rng.normal(scale=2.0, size=6)
        y = int(rng.integers(6))
        zt = torch.tensor(z, dtype=torch.float64, requires_grad=True)
        loss = gce_loss_from_logits(zt.unsqueeze(0), torch.tensor([y]), 0.7)
        (grad,) = torch.autograd.grad(loss, zt)
        fd = finite_difference_grad(z, y, 0.7)
        np.testing.assert_allclose(grad.numpy(), fd, atol=1e-7)


def test_gradient_identity_q1():
    # q=1: GCE = 1 - p_y and the p_y^1 scaling must hold
    rng = np.random.default_rng(3)
    for _ in range(20):
        z = rng.normal(size=10)
        assert gce_gradient_check(z, int(rng.integers(10)), 1.0) <= 1e-5


def test_gradient_identity_random_logits():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        z = rng.normal(scale=3.0, size=10)
        worst = max(worst, gce_gradient_check(z, int(rng.integers(10)), 0.7))
    assert worst <= 1e-5


def test_gradient_identity_saturated_logits():
    # one-hot-saturated logits: both gradients collapse to ~0, guard keeps the ratio defined
    z = np.zeros(10)
    z[3] = 60.0
    assert gce_gradient_check(z, 3, 0.7) <= 1e-5
    assert math.isfinite(gce_gradient_check(z, 0, 0.7))
