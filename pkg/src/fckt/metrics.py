"""Exact-match evaluation: TSA precision/recall/F1, AE F1 and SP accuracy."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

Item = Tuple[int, int, str]  # (start, end, polarity)


@dataclass
class EvalReport:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    ae_f1: float = 0.0
    sp_accuracy: float = 0.0
    num_gold: int = 0
    num_pred: int = 0
    num_correct: int = 0
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def prf(num_correct: int, num_pred: int, num_gold: int) -> Tuple[float, float, float]:
    p = num_correct / num_pred if num_pred else 0.0
    r = num_correct / num_gold if num_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _count_correct(gold: Sequence[Sequence[Hashable]], pred: Sequence[Sequence[Hashable]]) -> Tuple[int, int, int]:
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences but predictions have {len(pred)}")
    n_gold = n_pred = n_correct = 0
    for g, p in zip(gold, pred):
        n_gold += len(g)
        n_pred += len(p)
        # duplicate predictions match at most once
        n_correct += len(set(g) & set(p))
    return n_gold, n_pred, n_correct


def tsa_scores(gold: Sequence[Sequence[Item]], pred: Sequence[Sequence[Item]]) -> EvalReport:
    """A prediction is correct iff start, end and polarity all match a gold item."""
    gold = [[tuple(x) for x in s] for s in gold]
    pred = [[tuple(x) for x in s] for s in pred]
    n_gold, n_pred, n_correct = _count_correct(gold, pred)
    p, r, f = prf(n_correct, n_pred, n_gold)
    ae = ae_f1([[x[:2] for x in s] for s in gold], [[x[:2] for x in s] for s in pred])
    return EvalReport(p, r, f, ae_f1=ae, num_gold=n_gold, num_pred=n_pred, num_correct=n_correct)


def ae_f1(gold: Sequence[Sequence[Tuple[int, int]]], pred: Sequence[Sequence[Tuple[int, int]]]) -> float:
    gold = [[tuple(x[:2]) for x in s] for s in gold]
    pred = [[tuple(x[:2]) for x in s] for s in pred]
    n_gold, n_pred, n_correct = _count_correct(gold, pred)
    return prf(n_correct, n_pred, n_gold)[2]


def sp_accuracy(pairs: Sequence[Tuple[str, str]]) -> float:
    if not pairs:
        logger.warning("sentiment accuracy over an empty set is defined as 0")
        return 0.0
    return sum(1 for g, p in pairs if g == p) / len(pairs)


def extracted_sp_pairs(gold: Sequence[Sequence[Item]], pred: Sequence[Sequence[Item]]) -> List[Tuple[str, str]]:
    """(gold, predicted) polarity over spans that were extracted exactly."""
    pairs = []
    for g, p in zip(gold, pred):
        pred_pol = {}
        for s, e, pol in p:
            pred_pol.setdefault((s, e), pol)
        pairs.extend((pol, pred_pol[(s, e)]) for s, e, pol in g if (s, e) in pred_pol)
    return pairs


def aggregate(reports: Sequence[EvalReport], sp_mask: Optional[Sequence[bool]] = None) -> Dict[str, Dict[str, float]]:
    """Mean and population standard deviation per metric across folds/seeds."""
    keys = ("precision", "recall", "f1", "ae_f1", "sp_accuracy")
    out = {}
    for k in keys:
        vals = [getattr(r, k) for i, r in enumerate(reports)
                if k != "sp_accuracy" or sp_mask is None or sp_mask[i]]
        out[k] = {
            "mean": statistics.fmean(vals) if vals else 0.0,
            "std": statistics.pstdev(vals) if len(vals) > 1 else 0.0,
            "n": len(vals),
        }
    return out


def render_table(rows: Mapping[str, EvalReport]) -> str:
    """Plain-text table: one row per dataset/config with Prec./Rec./F1 plus sub-task metrics."""
    header = ("Name", "Prec.", "Rec.", "F1", "AE-F1", "SP-Acc")
    body = [(name, f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f1:.4f}", f"{r.ae_f1:.4f}", f"{r.sp_accuracy:.4f}")
            for name, r in rows.items()]
    widths = [max(len(str(row[i])) for row in [header, *body]) for i in range(len(header))]
    fmt = lambda row: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                                for i, (c, w) in enumerate(zip(row, widths)))
    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule, *map(fmt, body)]) + "\n"


def write_report(report: EvalReport, path_stem, name: str = "eval") -> Tuple[Path, Path]:
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = stem.with_suffix(".json")
    txt_path = stem.with_suffix(".txt")
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    txt_path.write_text(render_table({name: report}), encoding="utf-8")
    return json_path, txt_path


def load_report_schema() -> dict:
    return json.loads((Path(__file__).parent / "schemas" / "eval_report.schema.json").read_text())


def cross_validate(sentences, config, fold_dir, folds: Optional[int] = None) -> dict:
    """Seeded k-fold train/eval. Fold membership is written to ``fold_dir/folds.json``
    (reused if it already exists with matching size and seed)."""
    from .corpus import make_folds
    from .trainer import evaluate, train

    folds = folds or config.metrics.folds
    fold_dir = Path(fold_dir)
    fold_dir.mkdir(parents=True, exist_ok=True)
    fold_file = fold_dir / "folds.json"
    seed = config.trainer.seed
    assignment = None
    if fold_file.exists():
        saved = json.loads(fold_file.read_text())
        if saved.get("seed") == seed and saved.get("num_items") == len(sentences) and len(saved["folds"]) == folds:
            assignment = saved["folds"]
    if assignment is None:
        assignment = make_folds(len(sentences), folds, seed)
        fold_file.write_text(json.dumps({"seed": seed, "num_items": len(sentences), "folds": assignment}) + "\n")

    reports, sp_ok = [], []
    for k, test_idx in enumerate(assignment):
        held = set(test_idx)
        train_part = [s for i, s in enumerate(sentences) if i not in held]
        test_part = [sentences[i] for i in test_idx]
        fold_cfg = config.copy()
        fold_cfg.run_id = f"{config.run_id}-fold{k}"
        result = train(train_part, None, fold_cfg, run_dir=fold_dir / f"fold{k}")
        rep = evaluate(result.model, test_part, fold_cfg)
        has_gold = rep.num_gold > 0
        if not has_gold:
            logger.warning("fold %d has no gold aspects; excluded from SP aggregation", k)
        reports.append(rep)
        sp_ok.append(has_gold)
    return {"folds": [r.to_dict() for r in reports], "aggregate": aggregate(reports, sp_ok)}
