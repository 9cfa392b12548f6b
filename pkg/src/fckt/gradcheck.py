"""Central finite-difference gradients for checking autograd results."""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def numerical_grad(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """d fn() / d tensor by central differences, perturbing ``tensor`` in place."""
    grad = torch.zeros_like(tensor)
    flat, gflat = tensor.data.view(-1), grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            plus = float(fn())
            flat[i] = orig - eps
            minus = float(fn())
            flat[i] = orig
            gflat[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(a: torch.Tensor, b: torch.Tensor, floor: float = 1e-8) -> float:
    """||a - b|| / max(||a||, ||b||, floor).

    The floor keeps a gradient that is zero by symmetry (e.g. a bias feeding a
    softmax) from turning rounding noise into a relative error of 1.
    """
    denom = max(float(a.norm()), float(b.norm()), floor)
    return float((a - b).norm()) / denom


def check_gradients(fn: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor], eps: float = 1e-6) -> list:
    """Relative error between autograd and finite differences for each tensor."""
    for t in tensors:
        t.grad = None
    fn().backward()
    analytic = [t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t) for t in tensors]
    return [relative_error(a, numerical_grad(fn, t, eps)) for a, t in zip(analytic, tensors)]
