"""Dataset ingestion, training-time sentence splitting and boundary targets.

The native on-disk format is UTF-8 JSON lines, one sentence per line::

    {"tokens": ["good", "camera"],
     "aspects": [{"start": 1, "end": 1, "polarity": "positive"}],
     "id": "laptop-17"}

``end`` is inclusive. SemEval 2014 (``aspectTerms``) and SemEval 2015/16
(``Opinions``) XML files can be imported with ``format="semeval-xml"``.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

POLARITIES = ("positive", "negative", "neutral")
POLARITY_TO_ID = {p: i for i, p in enumerate(POLARITIES)}
FORMATS = ("jsonl", "semeval-xml")

_SEMEVAL_POLARITY = {"positive": "positive", "negative": "negative", "neutral": "neutral"}
_TOKEN_RE = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]", re.UNICODE)


class DatasetError(ValueError):
    """A record failed validation. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, record_id: Optional[str] = None):
        self.line = line
        self.record_id = record_id
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record_id is not None:
            where.append(f"record {record_id!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class AspectAnnotation:
    start: int
    end: int
    polarity: str

    @property
    def label(self) -> int:
        return POLARITY_TO_ID[self.polarity]

    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)


@dataclass
class AnnotatedSentence:
    tokens: List[str]
    aspects: List[AspectAnnotation] = field(default_factory=list)
    source_id: str = ""

    def validate(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise DatasetError("empty token list", record_id=self.source_id)
        for a in self.aspects:
            if a.polarity not in POLARITY_TO_ID:
                raise DatasetError(f"unknown polarity label {a.polarity!r}", record_id=self.source_id)
            if not (0 <= a.start <= a.end < n):
                raise DatasetError(
                    f"aspect span ({a.start}, {a.end}) out of range for {n} tokens",
                    record_id=self.source_id,
                )
        spans = sorted(a.span() for a in self.aspects)
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 <= e0:
                raise DatasetError(
                    f"overlapping aspect spans ({s0}, {e0}) and ({s1}, {e1})",
                    record_id=self.source_id,
                )

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "aspects": [{"start": a.start, "end": a.end, "polarity": a.polarity} for a in self.aspects],
            "id": self.source_id,
        }

    @classmethod
    def from_json(cls, obj: dict, line: Optional[int] = None) -> "AnnotatedSentence":
        if not isinstance(obj, dict):
            raise DatasetError("record is not a JSON object", line=line)
        rid = str(obj.get("id", "" if line is None else f"line-{line}"))
        tokens = obj.get("tokens")
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise DatasetError("'tokens' must be a list of strings", line=line, record_id=rid)
        aspects = []
        for a in obj.get("aspects", []):
            try:
                start, end, pol = int(a["start"]), int(a["end"]), str(a["polarity"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"malformed aspect {a!r}", line=line, record_id=rid) from exc
            aspects.append(AspectAnnotation(start, end, pol))
        sent = cls(tokens=tokens, aspects=aspects, source_id=rid)
        try:
            sent.validate()
        except DatasetError as exc:
            raise DatasetError(str(exc).split(": ", 1)[-1], line=line, record_id=rid) from None
        return sent


@dataclass
class TrainingExample:
    """One (sentence, single aspect) pair produced by :func:`split_sentences`."""

    tokens: List[str]
    start: int
    end: int
    polarity: str
    origin: Tuple[str, int]

    @property
    def label(self) -> int:
        return POLARITY_TO_ID[self.polarity]

    @property
    def start_target(self) -> np.ndarray:
        return build_targets(self, len(self.tokens))[0]

    @property
    def end_target(self) -> np.ndarray:
        return build_targets(self, len(self.tokens))[1]


@dataclass
class SplitReport:
    num_sentences: int
    num_examples: int
    zero_aspect_sentences: List[str]


def load_dataset(path, format: str = "jsonl") -> List[AnnotatedSentence]:
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if format == "jsonl":
        return _parse_jsonl(text)
    return _parse_semeval_xml(text)


def _parse_jsonl(text: str) -> List[AnnotatedSentence]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", line=lineno) from exc
        out.append(AnnotatedSentence.from_json(obj, line=lineno))
    return out


def tokenize_with_offsets(text: str) -> Tuple[List[str], List[Tuple[int, int]]]:
    tokens, offsets = [], []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group())
        offsets.append((m.start(), m.end()))
    return tokens, offsets


def _char_span_to_tokens(offsets, char_from: int, char_to: int) -> Optional[Tuple[int, int]]:
    covered = [i for i, (a, b) in enumerate(offsets) if a < char_to and b > char_from]
    if not covered:
        return None
    return covered[0], covered[-1]


def _parse_semeval_xml(text: str) -> List[AnnotatedSentence]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise DatasetError(f"malformed XML ({exc})", line=line) from exc
    out = []
    dropped = 0
    for sent_el in root.iter("sentence"):
        sid = sent_el.get("id", f"sentence-{len(out)}")
        text_el = sent_el.find("text")
        if text_el is None or not (text_el.text or "").strip():
            raise DatasetError("sentence without text", record_id=sid)
        raw = text_el.text
        tokens, offsets = tokenize_with_offsets(raw)
        # 2014 uses aspectTerm/term, 2015-16 uses Opinion/target
        items = [(el.get("term"), el.get("from"), el.get("to"), el.get("polarity"))
                 for el in sent_el.iter("aspectTerm")]
        items += [(el.get("target"), el.get("from"), el.get("to"), el.get("polarity"))
                  for el in sent_el.iter("Opinion")]
        by_span = {}
        for term, c_from, c_to, pol in items:
            if term is None or term == "NULL":
                continue
            if pol == "conflict":
                dropped += 1
                continue
            if pol not in _SEMEVAL_POLARITY:
                raise DatasetError(f"unknown polarity label {pol!r}", record_id=sid)
            span = _char_span_to_tokens(offsets, int(c_from), int(c_to))
            if span is None:
                raise DatasetError(f"aspect {term!r} does not cover any token", record_id=sid)
            prev = by_span.get(span)
            if prev is not None and prev != pol:
                # same target, different categories with different polarities
                by_span[span] = "conflict"
            else:
                by_span[span] = pol
        aspects = []
        for (s, e), pol in sorted(by_span.items()):
            if pol == "conflict":
                dropped += 1
                continue
            aspects.append(AspectAnnotation(s, e, _SEMEVAL_POLARITY[pol]))
        sent = AnnotatedSentence(tokens=tokens, aspects=aspects, source_id=sid)
        sent.validate()
        out.append(sent)
    if dropped:
        logger.warning("dropped %d conflict-polarity aspect annotations", dropped)
    return out


def write_jsonl(sentences: Iterable[AnnotatedSentence], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def split_sentences(
    sentences: Sequence[AnnotatedSentence], report: Optional[SplitReport] = None
) -> List[TrainingExample]:
    """Replicate each sentence once per aspect. Zero-aspect sentences are skipped
    and listed in ``report.zero_aspect_sentences``."""
    examples = []
    zero = []
    for sent in sentences:
        if not sent.aspects:
            zero.append(sent.source_id)
            continue
        for k, a in enumerate(sent.aspects):
            examples.append(
                TrainingExample(
                    tokens=list(sent.tokens),
                    start=a.start,
                    end=a.end,
                    polarity=a.polarity,
                    origin=(sent.source_id, k),
                )
            )
    if zero:
        logger.info("%d sentences without aspects contribute no training examples", len(zero))
    if report is not None:
        report.num_sentences = len(sentences)
        report.num_examples = len(examples)
        report.zero_aspect_sentences = zero
    return examples


def build_targets(example: TrainingExample, n: int) -> Tuple[np.ndarray, np.ndarray]:
    if not (0 <= example.start < n and 0 <= example.end < n):
        raise IndexError(f"aspect ({example.start}, {example.end}) out of range for length {n}")
    start = np.zeros(n, dtype=np.float64)
    end = np.zeros(n, dtype=np.float64)
    start[example.start] = 1.0
    end[example.end] = 1.0
    return start, end


def corpus_stats(sentences: Sequence[AnnotatedSentence]) -> dict:
    counts = {p: 0 for p in POLARITIES}
    for s in sentences:
        for a in s.aspects:
            counts[a.polarity] += 1
    return {
        "sentences": len(sentences),
        "aspects": sum(counts.values()),
        **counts,
        "zero_aspect_sentences": sum(1 for s in sentences if not s.aspects),
    }


def make_folds(num_items: int, folds: int, seed: int) -> List[List[int]]:
    """Seeded partition of ``range(num_items)`` into ``folds`` near-equal parts."""
    if folds < 2 or num_items < folds:
        raise ValueError(f"cannot split {num_items} items into {folds} folds")
    perm = np.random.default_rng(seed).permutation(num_items)
    return [sorted(int(i) for i in part) for part in np.array_split(perm, folds)]
