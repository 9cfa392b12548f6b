"""Token-level InfoNCE over aspect start/end embeddings.

For each gold aspect, its (start, end) token embeddings form the positive
pair. Negatives are built from the other aspects in the mini-batch: the
aspect's start token against their end tokens, and its end token against
their start tokens.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import torch

logger = logging.getLogger(__name__)

DENOMINATORS = ("with_positive", "negatives_only")


@dataclass
class PairBatch:
    start_emb: torch.Tensor  # (M, d)
    end_emb: torch.Tensor  # (M, d)
    negative_mask: torch.Tensor  # (M, M) bool; [a, b] => aspect b supplies negatives for a

    def __len__(self) -> int:
        return self.start_emb.size(0)

    def negatives_for_start(self, a: int) -> torch.Tensor:
        """End embeddings paired against the start token of aspect ``a``."""
        return self.end_emb[self.negative_mask[a]]

    def negatives_for_end(self, a: int) -> torch.Tensor:
        return self.start_emb[self.negative_mask[a]]

    @property
    def num_negatives(self) -> torch.Tensor:
        return self.negative_mask.sum(-1)


def build_pairs(
    start_emb: torch.Tensor,
    end_emb: torch.Tensor,
    keys: Optional[Sequence[Hashable]] = None,
) -> PairBatch:
    """``keys`` identify the underlying aspect (e.g. source id + span); entries
    sharing a key never serve as each other's negatives."""
    m = start_emb.size(0)
    if end_emb.shape != start_emb.shape:
        raise ValueError("start and end embeddings must have the same shape")
    if keys is None:
        keys = list(range(m))
    if len(keys) != m:
        raise ValueError("one key per positive pair is required")
    mask = torch.tensor([[keys[a] != keys[b] for b in range(m)] for a in range(m)], dtype=torch.bool)
    mask = mask.reshape(m, m).to(start_emb.device)
    if m < 2:
        logger.debug("fewer than two aspects in batch; contrastive term is zero")
    return PairBatch(start_emb, end_emb, mask)


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na, nb = a.norm(dim=-1), b.norm(dim=-1)
    if bool((na == 0).any() or (nb == 0).any()):
        raise ValueError("zero-norm embedding: cosine similarity undefined")
    return (a / na.unsqueeze(-1)) @ (b / nb.unsqueeze(-1)).transpose(-1, -2)


def contrastive_loss(pairs: PairBatch, tau: float = 0.07, denominator: str = "with_positive") -> torch.Tensor:
    """Sum over positives of -log softmax of the positive logit against the
    start-side and end-side negatives (cosine / tau). Positives without any
    negatives contribute zero."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}")
    m = len(pairs)
    if m == 0:
        return pairs.start_emb.new_zeros(())
    # sim[a, b] = cos(start_a, end_b)
    sim = cosine_matrix(pairs.start_emb, pairs.end_emb) / tau
    pos = sim.diagonal()
    neg_mask = pairs.negative_mask
    has_neg = neg_mask.any(-1)
    if not bool(has_neg.any()):
        return sim.new_zeros(()) * pos.sum()
    ninf = torch.finfo(sim.dtype).min
    start_side = sim.masked_fill(~neg_mask, ninf)  # cos(h_s^a, h_e^b)
    end_side = sim.transpose(0, 1).masked_fill(~neg_mask, ninf)  # cos(h_e^a, h_s^b)
    parts = [start_side, end_side]
    if denominator == "with_positive":
        parts.append(pos.unsqueeze(-1))
    logits = torch.cat(parts, dim=-1)
    terms = torch.logsumexp(logits, dim=-1) - pos
    return torch.where(has_neg, terms, torch.zeros_like(terms)).sum()
