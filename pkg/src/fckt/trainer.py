"""Joint training: L = L_ae + L_sp + lambda * L_cl over split single-aspect examples."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .boundary import BoundaryDistributions, boundary_loss
from .config import RunConfig
from .contrast import build_pairs, contrastive_loss
from .corpus import POLARITY_TO_ID, AnnotatedSentence, TrainingExample, split_sentences
from .encoder import ToyEncoder, Vocab
from .metrics import EvalReport, extracted_sp_pairs, sp_accuracy, tsa_scores
from .model import FCKTModel, build_model
from .transfer import mixed_sentiment_loss

logger = logging.getLogger(__name__)


class NonFiniteError(RuntimeError):
    def __init__(self, component: str):
        self.component = component
        super().__init__(f"non-finite value in {component}; step aborted")


@dataclass
class LossReport:
    ae: float
    sp: float
    cl: float
    total: float
    num_examples: int
    real_fraction: float
    grad_norm: float = 0.0
    clipped: bool = False
    clamped: int = 0


@dataclass
class Objective:
    total: torch.Tensor
    ae: torch.Tensor
    sp: torch.Tensor
    cl: torch.Tensor
    real_path: np.ndarray
    clamped: int = 0


def batch_objective(
    model: FCKTModel,
    examples: Sequence[TrainingExample],
    config: RunConfig,
    rng: Optional[np.random.Generator] = None,
    real_path: Optional[np.ndarray] = None,
) -> Objective:
    """All three loss terms on one mini-batch of split examples (sums, not means)."""
    out = model([ex.tokens for ex in examples])
    hidden, bd = out.words.hidden, out.boundaries
    dev = hidden.device
    starts = torch.tensor([ex.start for ex in examples], device=dev)
    ends = torch.tensor([ex.end for ex in examples], device=dev)
    labels = torch.tensor([POLARITY_TO_ID[ex.polarity] for ex in examples], device=dev)
    counter: Dict[str, int] = {}

    l_ae = boundary_loss(bd, starts, ends, counter)

    if config.contrast.enabled:
        rows = torch.arange(len(examples), device=dev)
        keys = [(ex.origin[0], ex.start, ex.end) for ex in examples]
        pairs = build_pairs(hidden[rows, starts], hidden[rows, ends], keys)
        l_cl = contrastive_loss(pairs, config.contrast.tau, config.contrast.denominator)
    else:
        l_cl = hidden.new_zeros(())

    tc = config.transfer
    sp = mixed_sentiment_loss(
        hidden, bd.start_probs, bd.end_probs, starts, ends, labels, model.classifier,
        xi=config.effective_xi, h=tc.h, rng=rng, mode=tc.mix_mode if tc.enabled else "gated",
        granularity=tc.gate_granularity, span_bound=tc.span_bound, real_path=real_path,
    )
    total = l_ae + sp.loss + config.effective_lambda * l_cl
    return Objective(total, l_ae, sp.loss, l_cl, sp.real_path, counter.get("clamped", 0) + sp.clamped)


def train_step(
    model: FCKTModel,
    optimizer: torch.optim.Optimizer,
    examples: Sequence[TrainingExample],
    config: RunConfig,
    rng: np.random.Generator,
) -> LossReport:
    if not examples:
        raise ValueError("empty batch")
    model.train()
    optimizer.zero_grad(set_to_none=True)
    obj = batch_objective(model, examples, config, rng)
    for name in ("ae", "sp", "cl", "total"):
        if not torch.isfinite(getattr(obj, name)):
            raise NonFiniteError(f"loss_{name}")
    obj.total.backward()
    params = [p for p in model.parameters() if p.grad is not None]
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteError(f"gradient of {name}")
    clip = config.trainer.grad_clip
    grad_norm = float(torch.nn.utils.clip_grad_norm_(params, clip)) if clip > 0 else math.nan
    clipped = clip > 0 and grad_norm > clip
    if clipped:
        logger.debug("gradient norm %.3f clipped to %.3f", grad_norm, clip)
    optimizer.step()
    ae, sp, cl = obj.ae.item(), obj.sp.item(), obj.cl.item()
    return LossReport(
        ae=ae, sp=sp, cl=cl, total=obj.total.item(), num_examples=len(examples),
        real_fraction=float(np.mean(obj.real_path)), grad_norm=grad_norm, clipped=clipped, clamped=obj.clamped,
    )


def multi_aspect_objective(
    model: FCKTModel,
    sentences: Sequence[AnnotatedSentence],
    config: RunConfig,
    real_path: Sequence[bool],
) -> torch.Tensor:
    """The un-split objective: each sentence encoded once, its boundary
    distributions scored against every one of its aspects. ``real_path`` lists
    the sentiment path per aspect in (sentence, aspect) order."""
    real_path = list(real_path)
    terms = []
    start_vecs, end_vecs, keys, sp_terms = [], [], [], []
    k = 0
    for sent in sentences:
        if not sent.aspects:
            continue
        out = model([sent.tokens])
        hid = out.words.hidden[0]
        ps, pe = out.boundaries.start_probs[0], out.boundaries.end_probs[0]
        for a in sent.aspects:
            terms.append(boundary_loss(BoundaryDistributions(ps, pe), a.start, a.end))
            start_vecs.append(hid[a.start])
            end_vecs.append(hid[a.end])
            keys.append((sent.source_id, a.start, a.end))
            res = mixed_sentiment_loss(
                hid[None], ps[None], pe[None], torch.tensor([a.start]), torch.tensor([a.end]),
                torch.tensor([a.label]), model.classifier, xi=config.effective_xi, h=config.transfer.h,
                mode=config.transfer.mix_mode if config.transfer.enabled else "gated",
                span_bound=config.transfer.span_bound, real_path=np.array([real_path[k]]),
            )
            sp_terms.append(res.loss)
            k += 1
    total = torch.stack(terms).sum() + torch.stack(sp_terms).sum()
    if config.contrast.enabled and start_vecs:
        pairs = build_pairs(torch.stack(start_vecs), torch.stack(end_vecs), keys)
        total = total + config.effective_lambda * contrastive_loss(pairs, config.contrast.tau, config.contrast.denominator)
    return total


@torch.no_grad()
def evaluate(model: FCKTModel, sentences: Sequence[AnnotatedSentence], config: RunConfig) -> EvalReport:
    """Decode spans, classify them, score exactly against the unsplit gold sentences."""
    preds = model.predict([s.tokens for s in sentences], config.transfer.h,
                          config.decode.max_spans, config.decode.threshold)
    gold = [[(a.start, a.end, a.polarity) for a in s.aspects] for s in sentences]
    pred = [[(a.start, a.end, a.polarity) for a in p] for p in preds]
    report = tsa_scores(gold, pred)
    gold_pairs = [(a.polarity, p) for s, pols in zip(sentences, model.classify_spans(sentences))
                  for a, p in zip(s.aspects, pols)]
    acc_gold = sp_accuracy(gold_pairs) if gold_pairs else 0.0
    ext = extracted_sp_pairs(gold, pred)
    acc_ext = sp_accuracy(ext) if ext else 0.0
    report.sp_accuracy = acc_gold if config.metrics.sp_mode == "gold" else acc_ext
    report.extra = {"sp_accuracy_gold": acc_gold, "sp_accuracy_extracted": acc_ext}
    return report


@dataclass
class TrainResult:
    model: FCKTModel
    config: RunConfig
    best_epoch: int
    best_f1: float
    history: List[dict] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    run_dir: Optional[Path] = None


def seed_everything(seed: int) -> np.random.Generator:
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def hold_out(sentences: Sequence[AnnotatedSentence], fraction: float, seed: int):
    if fraction <= 0 or len(sentences) < 10:
        return list(sentences), []
    perm = np.random.default_rng(seed + 7919).permutation(len(sentences))
    n_dev = max(1, int(round(fraction * len(sentences))))
    dev_idx = set(perm[:n_dev].tolist())
    return ([s for i, s in enumerate(sentences) if i not in dev_idx],
            [s for i, s in enumerate(sentences) if i in dev_idx])


def _round(x: float) -> float:
    return float(f"{x:.10g}")


def train(
    train_sentences: Sequence[AnnotatedSentence],
    dev_sentences: Optional[Sequence[AnnotatedSentence]],
    config: RunConfig,
    run_dir=None,
) -> TrainResult:
    """Epoch loop over shuffled split examples with early stopping on dev TSA-F1.

    ``run_dir`` (optional) receives ``config.snapshot``, ``metrics.jsonl`` and
    ``epoch_{k}.ckpt`` for the best epoch so far.
    """
    config.validate()
    tc = config.trainer
    rng = seed_everything(tc.seed)
    if dev_sentences is None:
        train_sentences, dev_sentences = hold_out(train_sentences, config.data.dev_fraction, tc.seed)
    if not dev_sentences:
        logger.warning("no development split; model selection uses the training sentences")
        dev_sentences = train_sentences

    model = build_model(config, train_sentences)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=tc.lr)
    examples = split_sentences(train_sentences)

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        config.save(run_dir / "config.snapshot")
        metrics_path = run_dir / "metrics.jsonl"
        metrics_path.write_text("")

    best_f1, best_epoch, best_state, ckpt_path = -1.0, 0, None, None
    history: List[dict] = []
    if tc.epochs == 0:
        if run_dir is not None:
            ckpt_path = save_checkpoint(run_dir / "epoch_0.ckpt", model, optimizer, config, 0, rng)
        return TrainResult(model, config, 0, 0.0, history, ckpt_path, run_dir)

    stale = 0
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(examples))
        sums = {"ae": 0.0, "sp": 0.0, "cl": 0.0, "total": 0.0}
        steps = clipped = 0
        for lo in range(0, len(order), tc.batch_size):
            batch = [examples[i] for i in order[lo : lo + tc.batch_size]]
            rep = train_step(model, optimizer, batch, config, rng)
            for k in sums:
                sums[k] += getattr(rep, k)
            steps += 1
            clipped += rep.clipped
        dev_report = evaluate(model, dev_sentences, config)
        row = {
            "epoch": epoch,
            **{f"loss_{k}": _round(v / max(len(examples), 1)) for k, v in sums.items()},
            "clipped_steps": clipped,
            "dev": {k: _round(v) if isinstance(v, float) else v
                    for k, v in dev_report.to_dict().items() if k != "extra"},
        }
        history.append(row)
        if run_dir is not None:
            with metrics_path.open("a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        logger.info("epoch %d  loss %.4f  dev F1 %.4f", epoch, row["loss_total"], dev_report.f1)
        if dev_report.f1 > best_f1:
            best_f1, best_epoch, stale = dev_report.f1, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
            if run_dir is not None:
                prev = ckpt_path
                ckpt_path = save_checkpoint(run_dir / f"epoch_{epoch}.ckpt", model, optimizer, config, epoch, rng)
                if prev is not None and not tc.keep_all_checkpoints:
                    prev.unlink(missing_ok=True)
        else:
            stale += 1
            if stale >= tc.patience:
                logger.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    if run_dir is not None:
        (run_dir / "best.json").write_text(json.dumps(
            {"epoch": best_epoch, "dev_f1": _round(best_f1), "checkpoint": ckpt_path.name if ckpt_path else None},
            sort_keys=True) + "\n")
    return TrainResult(model, config, best_epoch, best_f1, history, ckpt_path, run_dir)


def save_checkpoint(path, model: FCKTModel, optimizer, config: RunConfig, epoch: int,
                    rng: np.random.Generator) -> Path:
    path = Path(path)
    enc = model.encoder
    payload = {
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "config": config.to_dict(),
        "epoch": epoch,
        "vocab": enc.vocab.state_dict() if isinstance(enc, ToyEncoder) else None,
        "rng": {"numpy": rng.bit_generator.state, "torch": torch.get_rng_state()},
    }
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Tuple[FCKTModel, RunConfig, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    config = RunConfig.from_dict(payload["config"])
    vocab = Vocab.from_state_dict(payload["vocab"]) if payload.get("vocab") else None
    model = build_model(config, vocab=vocab)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, config, payload
