"""Sentiment prediction over aspect spans, from gold spans or from the
expectation over predicted boundary distributions.

The expected span vector is

    sum_i sum_{j=i}^{i+h-1} p_s[i] * p_e[j] * sum_{k=i}^{j} H[k]

and is computed in O(n h d) from prefix sums of ``H``: each inner span sum is
``C[j+1] - C[i]`` with ``C[t] = sum_{k<t} H[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .boundary import LOG_EPS

NUM_CLASSES = 3
MIX_MODES = ("gated", "convex")
GRANULARITIES = ("example", "batch")
SPAN_BOUNDS = ("length", "offset")


def max_offset(h: int, span_bound: str = "length") -> int:
    """Largest admissible j - i. ``length``: span length <= h; ``offset``: j <= i + h."""
    if h < 1:
        raise ValueError("h must be >= 1")
    if span_bound == "length":
        return h - 1
    if span_bound == "offset":
        return h
    raise ValueError(f"span_bound must be one of {SPAN_BOUNDS}")


class SentimentClassifier(nn.Module):
    """One tanh hidden layer, then K logits."""

    def __init__(self, dim: int, num_classes: int = NUM_CLASSES, hidden: Optional[int] = None):
        super().__init__()
        hidden = hidden or dim
        self.net = nn.Sequential(nn.Linear(dim, hidden), nn.Tanh(), nn.Linear(hidden, num_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def span_representation(hidden: torch.Tensor, start, end) -> torch.Tensor:
    """Sum of word rows ``start..end`` (inclusive). ``hidden`` is (n, d) or (B, n, d)
    with per-example index tensors."""
    n = hidden.size(-2)
    start = torch.as_tensor(start, device=hidden.device)
    end = torch.as_tensor(end, device=hidden.device)
    if bool((start < 0).any() or (end >= n).any() or (start > end).any()):
        raise IndexError(f"invalid span ({start.tolist()}, {end.tolist()}) for length {n}")
    pos = torch.arange(n, device=hidden.device)
    inside = (pos >= start.unsqueeze(-1)) & (pos <= end.unsqueeze(-1))
    return (inside.to(hidden.dtype).unsqueeze(-1) * hidden).sum(-2)


def prefix_sums(hidden: torch.Tensor) -> torch.Tensor:
    """C with C[..., t, :] = sum_{k<t} H[..., k, :]; shape (..., n + 1, d)."""
    zero = hidden.new_zeros(hidden.shape[:-2] + (1, hidden.size(-1)))
    return torch.cat([zero, hidden.cumsum(-2)], dim=-2)


def expected_span_representation(
    hidden: torch.Tensor,
    start_probs: torch.Tensor,
    end_probs: torch.Tensor,
    h: int,
    span_bound: str = "length",
) -> torch.Tensor:
    """Expected span vector under independent start/end distributions, truncated
    to spans with end - start <= max_offset(h). Works on (n, d) or (B, n, d)."""
    width = max_offset(h, span_bound)
    n = hidden.size(-2)
    csum = prefix_sums(hidden)
    out = hidden.new_zeros(hidden.shape[:-2] + (hidden.size(-1),))
    for o in range(min(width, n - 1) + 1):
        # spans (i, i + o) for i in [0, n - o)
        span_sum = csum[..., o + 1 :, :] - csum[..., : n - o, :]
        weight = start_probs[..., : n - o] * end_probs[..., o:]
        out = out + (weight.unsqueeze(-1) * span_sum).sum(-2)
    return out


def classify_real(hidden, start, end, classifier: SentimentClassifier) -> torch.Tensor:
    return torch.softmax(classifier(span_representation(hidden, start, end)), dim=-1)


def classify_expected(hidden, start_probs, end_probs, h, classifier: SentimentClassifier,
                      span_bound: str = "length") -> torch.Tensor:
    rep = expected_span_representation(hidden, start_probs, end_probs, h, span_bound)
    return torch.softmax(classifier(rep), dim=-1)


@dataclass
class SentimentLossResult:
    loss: torch.Tensor
    real_path: np.ndarray  # bool per example; True => gold span input
    clamped: int = 0


def draw_paths(rng: np.random.Generator, batch_size: int, xi: float, granularity: str = "example") -> np.ndarray:
    """True where the real (gold-span) path is taken, i.e. u <= xi with u ~ U(0, 1)."""
    if granularity == "example":
        u = rng.random(batch_size)
    elif granularity == "batch":
        u = np.full(batch_size, rng.random())
    else:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    return u <= xi


def _nll(probs: torch.Tensor, labels: torch.Tensor):
    p = probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    clamped = int((p < LOG_EPS).sum())
    return -torch.log(p.clamp_min(LOG_EPS)), clamped


def mixed_sentiment_loss(
    hidden: torch.Tensor,
    start_probs: torch.Tensor,
    end_probs: torch.Tensor,
    gold_start: torch.Tensor,
    gold_end: torch.Tensor,
    labels: torch.Tensor,
    classifier: SentimentClassifier,
    xi: float,
    h: int,
    rng: Optional[np.random.Generator] = None,
    mode: str = "gated",
    granularity: str = "example",
    span_bound: str = "length",
    real_path: Optional[np.ndarray] = None,
) -> SentimentLossResult:
    """Batched sentiment loss (sum over examples).

    ``gated``: each example takes the gold-span path with probability ``xi``,
    otherwise the expected-span path. ``convex``: -log of the xi-weighted mixture
    of both predicted distributions. ``real_path`` overrides the random draw.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    if mode not in MIX_MODES:
        raise ValueError(f"mode must be one of {MIX_MODES}")
    B = hidden.size(0)
    if mode == "convex":
        p_real = classify_real(hidden, gold_start, gold_end, classifier)
        if xi < 1.0:
            p_exp = classify_expected(hidden, start_probs, end_probs, h, classifier, span_bound)
            probs = xi * p_real + (1.0 - xi) * p_exp
        else:
            probs = p_real
        nll, clamped = _nll(probs, labels)
        return SentimentLossResult(nll.sum(), np.full(B, xi >= 1.0), clamped)

    if real_path is None:
        if rng is None:
            raise ValueError("gated mode needs an rng or an explicit path assignment")
        real_path = draw_paths(rng, B, xi, granularity)
    real_path = np.asarray(real_path, dtype=bool)
    total = hidden.new_zeros(())
    clamped = 0
    real_idx = torch.as_tensor(np.flatnonzero(real_path), device=hidden.device)
    exp_idx = torch.as_tensor(np.flatnonzero(~real_path), device=hidden.device)
    if len(real_idx):
        probs = classify_real(hidden[real_idx], gold_start[real_idx], gold_end[real_idx], classifier)
        nll, c = _nll(probs, labels[real_idx])
        total = total + nll.sum()
        clamped += c
    if len(exp_idx):
        probs = classify_expected(hidden[exp_idx], start_probs[exp_idx], end_probs[exp_idx], h, classifier, span_bound)
        nll, c = _nll(probs, labels[exp_idx])
        total = total + nll.sum()
        clamped += c
    return SentimentLossResult(total, real_path, clamped)
