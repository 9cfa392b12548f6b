from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from .boundary import BoundaryDistributions, BoundaryHead, decode_spans, predict_boundaries
from .config import RunConfig
from .corpus import POLARITIES, AnnotatedSentence, AspectAnnotation
from .encoder import BaseEncoder, PretrainedEncoder, ToyEncoder, Vocab, WordBatch
from .transfer import NUM_CLASSES, SentimentClassifier, classify_real


@dataclass
class BatchOutput:
    words: WordBatch
    boundaries: BoundaryDistributions


class FCKTModel(nn.Module):
    """Shared encoder, start/end boundary heads and the span sentiment classifier."""

    def __init__(self, encoder: BaseEncoder, num_classes: int = NUM_CLASSES):
        super().__init__()
        self.encoder = encoder
        dim = encoder.dim
        self.start_head = BoundaryHead(dim)
        self.end_head = BoundaryHead(dim)
        self.classifier = SentimentClassifier(dim, num_classes)

    def forward(self, batch: Sequence[Sequence[str]]) -> BatchOutput:
        words = self.encoder.encode_batch(batch)
        return BatchOutput(words, predict_boundaries(words.hidden, self.start_head, self.end_head, words.mask))

    def boundary_parameters(self) -> List[nn.Parameter]:
        return list(self.start_head.parameters()) + list(self.end_head.parameters())

    @torch.no_grad()
    def predict(self, sentences: Sequence[Sequence[str]], h: int, max_spans: int = 5,
                threshold: float = -6.0, batch_size: int = 64) -> List[List[AspectAnnotation]]:
        """Decode spans, then classify each decoded span from its summed rows."""
        was_training = self.training
        self.eval()
        out: List[List[AspectAnnotation]] = []
        try:
            for lo in range(0, len(sentences), batch_size):
                chunk = sentences[lo : lo + batch_size]
                res = self(chunk)
                for b, words in enumerate(chunk):
                    n = len(words)
                    spans = decode_spans(res.boundaries.start_probs[b, :n], res.boundaries.end_probs[b, :n],
                                         h, max_spans, threshold)
                    preds = []
                    if spans:
                        hid = res.words.hidden[b, :n]
                        probs = classify_real(
                            hid.expand(len(spans), -1, -1),
                            torch.tensor([s.start for s in spans]),
                            torch.tensor([s.end for s in spans]),
                            self.classifier,
                        )
                        for s, k in zip(spans, probs.argmax(-1).tolist()):
                            preds.append(AspectAnnotation(s.start, s.end, POLARITIES[k]))
                    out.append(preds)
        finally:
            self.train(was_training)
        return out

    @torch.no_grad()
    def classify_spans(self, sentences: Sequence[AnnotatedSentence], batch_size: int = 64) -> List[List[str]]:
        """Polarity predicted for every gold span (sentiment sub-task in isolation)."""
        was_training = self.training
        self.eval()
        out: List[List[str]] = []
        try:
            for lo in range(0, len(sentences), batch_size):
                chunk = sentences[lo : lo + batch_size]
                res = self([s.tokens for s in chunk])
                for b, sent in enumerate(chunk):
                    if not sent.aspects:
                        out.append([])
                        continue
                    n = len(sent.tokens)
                    hid = res.words.hidden[b, :n]
                    probs = classify_real(
                        hid.expand(len(sent.aspects), -1, -1),
                        torch.tensor([a.start for a in sent.aspects]),
                        torch.tensor([a.end for a in sent.aspects]),
                        self.classifier,
                    )
                    out.append([POLARITIES[k] for k in probs.argmax(-1).tolist()])
        finally:
            self.train(was_training)
        return out


def build_encoder(config: RunConfig, vocab: Optional[Vocab] = None) -> BaseEncoder:
    ec = config.encoder
    if ec.kind == "toy":
        if vocab is None:
            raise ValueError("the toy encoder needs a vocabulary")
        enc: BaseEncoder = ToyEncoder(vocab, ec.dim, ec.layers, ec.heads, ec.max_len, ec.dropout)
    else:
        enc = PretrainedEncoder.from_pretrained(ec.pretrained_name, ec.max_len, ec.dropout)
    if ec.freeze:
        enc.set_frozen(True)
    return enc


def build_model(config: RunConfig, train_sentences: Sequence[AnnotatedSentence] = (),
                vocab: Optional[Vocab] = None) -> FCKTModel:
    if config.encoder.kind == "toy" and vocab is None:
        vocab = Vocab.build(s.tokens for s in train_sentences)
    return FCKTModel(build_encoder(config, vocab))
