"""Contextual token encoders.

Two backbones share one interface: :class:`ToyEncoder`, a small randomly
initialised transformer over a word vocabulary, and :class:`PretrainedEncoder`,
a thin wrapper around a HuggingFace bidirectional encoder. Both return
sub-word rows plus the alignment back to words; boundary scoring and span
sums operate on the first sub-word row of each word.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch
from torch import nn

PAD, UNK = "[PAD]", "[UNK]"


class EncoderInputError(ValueError):
    pass


@dataclass
class EncodedSequence:
    embeddings: torch.Tensor  # (n_sub, d)
    token_map: List[List[int]]  # word index -> sub-word rows

    @property
    def first_rows(self) -> List[int]:
        return [rows[0] for rows in self.token_map]

    @property
    def word_embeddings(self) -> torch.Tensor:
        return self.embeddings[self.first_rows]

    def __len__(self) -> int:
        return len(self.token_map)


@dataclass
class WordBatch:
    """Word-level view of an encoded, padded batch."""

    hidden: torch.Tensor  # (B, n, d), first sub-word row per word, zeros on padding
    mask: torch.Tensor  # (B, n) bool
    lengths: List[int]


class Vocab:
    def __init__(self, tokens: Iterable[str] = (), lower: bool = True):
        self.lower = lower
        self.itos: List[str] = [PAD, UNK]
        self.stoi: Dict[str, int] = {PAD: 0, UNK: 1}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 1, lower: bool = True) -> "Vocab":
        counts = Counter(t.lower() if lower else t for s in sentences for t in s)
        # sorted for a deterministic id assignment
        kept = sorted(t for t, c in counts.items() if c >= min_count)
        return cls(kept, lower=lower)

    def lookup(self, token: str) -> int:
        return self.stoi.get(token.lower() if self.lower else token, 1)

    def __len__(self) -> int:
        return len(self.itos)

    def state_dict(self) -> dict:
        return {"itos": list(self.itos), "lower": self.lower}

    @classmethod
    def from_state_dict(cls, state: dict) -> "Vocab":
        v = cls(lower=state.get("lower", True))
        v.itos = list(state["itos"])
        v.stoi = {t: i for i, t in enumerate(v.itos)}
        return v


class BaseEncoder(nn.Module):
    """Interface: ``tokenize`` words, run ``forward`` on padded ids."""

    dim: int
    max_len: int

    def tokenize(self, words: Sequence[str]) -> Tuple[List[int], List[List[int]]]:
        raise NotImplementedError

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _check(self, words: Sequence[str]) -> None:
        if len(words) == 0:
            raise EncoderInputError("cannot encode an empty token list")

    def encode(self, words: Sequence[str], mode: str = "inference") -> EncodedSequence:
        if mode not in ("training", "inference"):
            raise ValueError(f"mode must be 'training' or 'inference', got {mode!r}")
        self._check(words)
        ids, token_map = self.tokenize(words)
        was_training = self.training
        self.train(mode == "training")
        try:
            ctx = torch.enable_grad() if mode == "training" else torch.no_grad()
            with ctx:
                x = torch.tensor([ids], device=self.device)
                out = self(x, torch.ones_like(x, dtype=torch.bool))[0]
        finally:
            self.train(was_training)
        return EncodedSequence(out, token_map)

    def encode_batch(self, batch: Sequence[Sequence[str]]) -> WordBatch:
        """Encode padded sentences in the module's current train/eval mode."""
        tokenized = []
        for words in batch:
            self._check(words)
            tokenized.append(self.tokenize(words))
        sub_len = max(len(ids) for ids, _ in tokenized)
        n = max(len(words) for words in batch)
        ids = torch.zeros(len(batch), sub_len, dtype=torch.long)
        sub_mask = torch.zeros(len(batch), sub_len, dtype=torch.bool)
        first = torch.zeros(len(batch), n, dtype=torch.long)
        word_mask = torch.zeros(len(batch), n, dtype=torch.bool)
        for b, (row_ids, token_map) in enumerate(tokenized):
            ids[b, : len(row_ids)] = torch.tensor(row_ids)
            sub_mask[b, : len(row_ids)] = True
            first[b, : len(token_map)] = torch.tensor([rows[0] for rows in token_map])
            word_mask[b, : len(token_map)] = True
        ids, sub_mask = ids.to(self.device), sub_mask.to(self.device)
        first, word_mask = first.to(self.device), word_mask.to(self.device)
        out = self(ids, sub_mask)
        hidden = torch.gather(out, 1, first.unsqueeze(-1).expand(-1, -1, out.size(-1)))
        hidden = hidden * word_mask.unsqueeze(-1).to(hidden.dtype)
        return WordBatch(hidden, word_mask, [len(w) for w in batch])

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    def set_frozen(self, frozen: bool) -> None:
        for p in self.parameters():
            p.requires_grad_(not frozen)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        B, L, D = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(D // self.heads)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(B, L, D)
        return self.out(ctx)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, dropout)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, dim))
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.ln1(x), mask))
        x = x + self.drop(self.ffn(self.ln2(x)))
        return x


class ToyEncoder(BaseEncoder):
    """Word-level transformer with learned positional embeddings (one row per word)."""

    def __init__(
        self,
        vocab: Vocab,
        dim: int = 32,
        layers: int = 2,
        heads: int = 4,
        max_len: int = 128,
        dropout: float = 0.1,
        ffn_dim: Optional[int] = None,
    ):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.max_len = max_len
        self.tok = nn.Embedding(len(vocab), dim)
        self.pos = nn.Embedding(max_len, dim)
        nn.init.normal_(self.tok.weight, std=0.5)
        nn.init.normal_(self.pos.weight, std=0.5)
        self.emb_drop = nn.Dropout(dropout)
        self.blocks = nn.ModuleList(Block(dim, heads, ffn_dim or 2 * dim, dropout) for _ in range(layers))
        self.ln = nn.LayerNorm(dim)

    def tokenize(self, words):
        if len(words) > self.max_len:
            raise EncoderInputError(f"sequence of {len(words)} tokens exceeds max_len={self.max_len}")
        return [self.vocab.lookup(w) for w in words], [[i] for i in range(len(words))]

    def forward(self, input_ids, attention_mask):
        pos = torch.arange(input_ids.size(1), device=input_ids.device)
        x = self.emb_drop(self.tok(input_ids) + self.pos(pos)[None])
        for block in self.blocks:
            x = block(x, attention_mask)
        return self.ln(x)


class PretrainedEncoder(BaseEncoder):
    """HuggingFace encoder; boundaries index the first sub-word of each word."""

    def __init__(self, model, tokenizer, max_len: int = 512, dropout: Optional[float] = None):
        super().__init__()
        if not getattr(tokenizer, "is_fast", False):
            raise ValueError("a fast tokenizer is required for word alignment")
        self.model = model
        self.tokenizer = tokenizer
        self.dim = model.config.hidden_size
        self.max_len = max_len
        if dropout is not None:
            for attr in ("hidden_dropout_prob", "attention_probs_dropout_prob"):
                if hasattr(model.config, attr):
                    setattr(model.config, attr, dropout)
            for m in model.modules():
                if isinstance(m, nn.Dropout):
                    m.p = dropout

    @classmethod
    def from_pretrained(cls, name: str, max_len: int = 512, dropout: Optional[float] = 0.1) -> "PretrainedEncoder":
        from transformers import AutoModel, AutoTokenizer

        return cls(AutoModel.from_pretrained(name), AutoTokenizer.from_pretrained(name), max_len, dropout)

    def tokenize(self, words):
        enc = self.tokenizer(list(words), is_split_into_words=True, add_special_tokens=True)
        ids = enc["input_ids"]
        if len(ids) > self.max_len:
            raise EncoderInputError(f"{len(ids)} sub-words exceed max_len={self.max_len}")
        token_map: List[List[int]] = [[] for _ in words]
        for row, w in enumerate(enc.word_ids()):
            if w is not None:
                token_map[w].append(row)
        for w, rows in enumerate(token_map):
            if not rows:
                raise EncoderInputError(f"word {words[w]!r} produced no sub-word tokens")
        return ids, token_map

    def forward(self, input_ids, attention_mask):
        out = self.model(input_ids=input_ids, attention_mask=attention_mask.long())
        return out.last_hidden_state


def first_subword_targets(token_map: List[List[int]], start: int, end: int) -> Tuple[int, int]:
    """Sub-word row indices carrying the boundary targets of word span (start, end)."""
    return token_map[start][0], token_map[end][0]
