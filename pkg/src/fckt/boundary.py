"""Start/end boundary distributions, their loss, and span decoding."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12


@dataclass
class BoundaryDistributions:
    start_probs: torch.Tensor  # (..., n)
    end_probs: torch.Tensor


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int
    score: float


class BoundaryHead(nn.Module):
    """Position-wise MLP producing one logit per token."""

    def __init__(self, dim: int, hidden: Optional[int] = None):
        super().__init__()
        hidden = hidden or dim
        self.net = nn.Sequential(nn.Linear(dim, hidden), nn.Tanh(), nn.Linear(hidden, 1))

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.net(hidden).squeeze(-1)


def masked_softmax(logits: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    if mask is not None:
        logits = logits.masked_fill(~mask, float("-inf"))
    return torch.softmax(logits, dim=-1)


def predict_boundaries(
    hidden: torch.Tensor,
    start_head: BoundaryHead,
    end_head: BoundaryHead,
    mask: Optional[torch.Tensor] = None,
) -> BoundaryDistributions:
    """Softmax over word positions of each head's logits. ``hidden`` is (..., n, d)."""
    return BoundaryDistributions(
        masked_softmax(start_head(hidden), mask),
        masked_softmax(end_head(hidden), mask),
    )


def _target_log_prob(probs: torch.Tensor, index: torch.Tensor, counter: Optional[dict]) -> torch.Tensor:
    p = probs.gather(-1, index.unsqueeze(-1)).squeeze(-1)
    clamped = p < LOG_EPS
    if bool(clamped.any()):
        n = int(clamped.sum())
        logger.debug("clamped %d target probabilities to %g", n, LOG_EPS)
        if counter is not None:
            counter["clamped"] = counter.get("clamped", 0) + n
    return torch.log(p.clamp_min(LOG_EPS))


def boundary_loss(
    pred: BoundaryDistributions,
    start_index,
    end_index,
    counter: Optional[dict] = None,
) -> torch.Tensor:
    """Sum over examples of -log p_s[start] - log p_e[end].

    Indices may be ints (single example) or integer tensors matching the batch
    shape of ``pred``.
    """
    start_index = torch.as_tensor(start_index, device=pred.start_probs.device)
    end_index = torch.as_tensor(end_index, device=pred.end_probs.device)
    n = pred.start_probs.size(-1)
    if pred.end_probs.size(-1) != n:
        raise ValueError("start and end distributions differ in length")
    if bool((start_index < 0).any() or (start_index >= n).any() or (end_index < 0).any() or (end_index >= n).any()):
        raise IndexError("target index out of range")
    ls = _target_log_prob(pred.start_probs, start_index, counter)
    le = _target_log_prob(pred.end_probs, end_index, counter)
    return -(ls + le).sum()


def boundary_loss_onehot(pred: BoundaryDistributions, start_target, end_target) -> torch.Tensor:
    """Same loss written as a cross-entropy against one-hot target vectors."""
    st = torch.as_tensor(np.asarray(start_target), dtype=pred.start_probs.dtype)
    et = torch.as_tensor(np.asarray(end_target), dtype=pred.end_probs.dtype)
    if st.shape != pred.start_probs.shape or et.shape != pred.end_probs.shape:
        raise ValueError("target and prediction lengths disagree")
    return -(
        (st * pred.start_probs.clamp_min(LOG_EPS).log()).sum()
        + (et * pred.end_probs.clamp_min(LOG_EPS).log()).sum()
    )


def decode_spans(
    start_probs: Sequence[float],
    end_probs: Sequence[float],
    h: int,
    max_spans: int = 5,
    threshold: float = -6.0,
) -> List[SpanPrediction]:
    """Greedy non-overlapping span selection.

    Candidates are all (i, j) with i <= j <= i + h - 1, scored by
    ``log p_s[i] + log p_e[j]``. Ties go to the shorter span, then the earlier one.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    ps = np.asarray(torch.as_tensor(start_probs).detach().cpu(), dtype=np.float64)
    pe = np.asarray(torch.as_tensor(end_probs).detach().cpu(), dtype=np.float64)
    n = len(ps)
    with np.errstate(divide="ignore"):
        ls, le = np.log(ps), np.log(pe)
    cands = []
    for i in range(n):
        for j in range(i, min(i + h, n)):
            score = ls[i] + le[j]
            if math.isfinite(score):
                cands.append((-score, j - i, i, j))
    cands.sort()
    taken = np.zeros(n, dtype=bool)
    out: List[SpanPrediction] = []
    for neg, _, i, j in cands:
        if len(out) >= max_spans or -neg < threshold:
            break
        if taken[i : j + 1].any():
            continue
        taken[i : j + 1] = True
        out.append(SpanPrediction(i, j, -neg))
    out.sort(key=lambda s: s.start)
    return out
