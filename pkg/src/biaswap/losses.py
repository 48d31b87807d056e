"""Generalized cross-entropy and its gradient diagnostics.

GCE(p, y) = (1 - p_y^q) / q with q in (0, 1]. Its gradient w.r.t. any
parameter is p_y^q times the cross-entropy gradient, so training with it
up-weights samples the network already finds easy. For q -> 1 it reduces to
1 - p_y; for q -> 0 it approaches plain cross-entropy.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

PROB_EPS = 1e-12


def _check_q(q: float) -> float:
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    return float(q)


def gce_loss(probabilities, target: int, q: float = 0.7) -> float:
    """GCE on an explicit probability vector (must sum to 1 within 1e-6)."""
    _check_q(q)
    p = np.asarray(probabilities, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    if not 0 <= target < len(p):
        raise ValueError(f"target {target} >= K={len(p)}")
    p_y = max(float(p[target]), PROB_EPS)
    return (1.0 - p_y**q) / q


def gce_loss_from_logits(logits: torch.Tensor, targets: torch.Tensor, q: float = 0.7) -> torch.Tensor:
    """Batched differentiable GCE: (1 - exp(q * log_softmax(z)[y])) / q, mean over the batch."""
    _check_q(q)
    log_p_y = F.log_softmax(logits, dim=-1).gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    log_p_y = torch.clamp(log_p_y, min=float(np.log(PROB_EPS)))
    return ((1.0 - torch.exp(q * log_p_y)) / q).mean()


def ce_loss_from_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits, targets)


def gce_gradient_check(logits, target: int, q: float = 0.7, eps: float = 1e-8) -> float:
    """Max relative deviation of grad GCE from p_y^q * grad CE, taken w.r.t. the logits.

    Both gradients flow through the same softmax, so the identity must hold for
    any parameterization upstream of the logits as well.
    """
    _check_q(q)
    z = torch.as_tensor(np.asarray(logits, dtype=np.float32)).clone().requires_grad_(True)
    t = torch.tensor([int(target)])

    gce = gce_loss_from_logits(z.unsqueeze(0), t, q)
    (grad_gce,) = torch.autograd.grad(gce, z)

    z2 = z.detach().clone().requires_grad_(True)
    ce = F.cross_entropy(z2.unsqueeze(0), t)
    (grad_ce,) = torch.autograd.grad(ce, z2)

    p_y = torch.softmax(z.detach(), dim=-1)[int(target)]
    expected = p_y**q * grad_ce
    deviation = (grad_gce - expected).abs() / (grad_ce.abs() + eps)
    return float(deviation.max())
