"""Command-line entry point: prepare, train, eval, predict, sweep.

Exit codes: 0 success, 1 validation error (bad config, data or arguments),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import ConfigError, RunConfig
from .corpus import (
    FORMATS,
    AnnotatedSentence,
    DatasetError,
    SplitReport,
    corpus_stats,
    load_dataset,
    split_sentences,
    write_jsonl,
)
from .metrics import EvalReport, extracted_sp_pairs, render_table, sp_accuracy, tsa_scores, write_report

logger = logging.getLogger("fckt")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

# sweepable axes and the config key each one drives
SWEEP_KEYS = {
    "xi": "transfer.xi",
    "transfer.xi": "transfer.xi",
    "h": "transfer.h",
    "transfer.h": "transfer.h",
    "lambda": "trainer.lambda_cl",
    "trainer.lambda": "trainer.lambda_cl",
    "trainer.lambda_cl": "trainer.lambda_cl",
    "tau": "contrast.tau",
    "contrast.tau": "contrast.tau",
}


class UsageError(ValueError):
    pass


def parse_overrides(extra: Sequence[str]) -> List[Tuple[str, str]]:
    """``--transfer.xi 0.8 --trainer.seed=3`` -> [("transfer.xi", "0.8"), ("trainer.seed", "3")]."""
    out, i = [], 0
    extra = list(extra)
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 2
        out.append((key, value))
    return out


def load_config(path: Optional[str], overrides: Sequence[Tuple[str, str]] = ()) -> RunConfig:
    if path and not Path(path).is_file():
        raise ConfigError(f"config file {path} not found")
    cfg = RunConfig.load(path) if path else RunConfig()
    for key, value in overrides:
        cfg.set(key, value)
    env_seed = os.environ.get("FCKT_SEED")
    if env_seed not in (None, ""):
        cfg.set("trainer.seed", env_seed)
    return cfg.validate()


def _load_split(path: Optional[str], fmt: str) -> Optional[List[AnnotatedSentence]]:
    return load_dataset(path, fmt) if path else None


def _as_items(sentences: Sequence[AnnotatedSentence]):
    return [[(a.start, a.end, a.polarity) for a in s.aspects] for s in sentences]


# ---------------------------------------------------------------- commands


def cmd_prepare(args) -> int:
    sentences = load_dataset(args.input, args.format)
    report = SplitReport(0, 0, [])
    examples = split_sentences(sentences, report)
    out = Path(args.output)
    write_jsonl(sentences, out)
    stats = corpus_stats(sentences)
    manifest = {
        "source": str(args.input),
        "format": args.format,
        **stats,
        "examples": report.num_examples,
        "zero_aspect_ids": report.zero_aspect_sentences,
        "split": [[ex.origin[0], ex.origin[1]] for ex in examples],
    }
    manifest_path = out.with_name(out.stem + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"sentences {stats['sentences']}  aspects {stats['aspects']}  examples {report.num_examples}  "
          f"(pos {stats['positive']} / neg {stats['negative']} / neu {stats['neutral']}; "
          f"{stats['zero_aspect_sentences']} without aspects)")
    print(f"wrote {out} and {manifest_path}")
    return EXIT_OK


def _run_dir(cfg: RunConfig, output_dir: Optional[str]) -> Path:
    return Path(output_dir or cfg.output_dir) / cfg.run_id


def _train_and_test(cfg: RunConfig, run_dir: Path) -> Dict[str, object]:
    from .trainer import evaluate, train

    if not cfg.data.train:
        raise ConfigError("data.train is required")
    train_s = load_dataset(cfg.data.train, cfg.data.format)
    dev_s = _load_split(cfg.data.dev, cfg.data.format)
    result = train(train_s, dev_s, cfg, run_dir=run_dir)
    out: Dict[str, object] = {"best_epoch": result.best_epoch, "dev_f1": result.best_f1}
    if cfg.data.test:
        report = evaluate(result.model, load_dataset(cfg.data.test, cfg.data.format), cfg)
        write_report(report, run_dir / "test_report", name=cfg.run_id)
        out["test"] = report
    return out


def cmd_train(args, overrides) -> int:
    cfg = load_config(args.config, overrides)
    run_dir = _run_dir(cfg, args.output_dir)
    out = _train_and_test(cfg, run_dir)
    print(f"run {run_dir}  best epoch {out['best_epoch']}  dev F1 {out['dev_f1']:.4f}")
    if "test" in out:
        print(render_table({"test": out["test"]}), end="")
    return EXIT_OK


def _load_for_inference(checkpoint: str, overrides=()):
    from .trainer import load_checkpoint

    if not Path(checkpoint).is_file():
        raise UsageError(f"checkpoint {checkpoint} not found")
    try:
        model, cfg, _ = load_checkpoint(checkpoint)
    except (RuntimeError, KeyError) as exc:
        # state-dict shape mismatches surface as RuntimeError from torch
        raise ConfigError(f"checkpoint {checkpoint} does not match its stored config: {exc}") from exc
    for key, value in overrides:
        cfg.set(key, value)
    return model, cfg.validate()


def cmd_eval(args, overrides) -> int:
    gold = load_dataset(args.data, args.format)
    if args.predictions:
        pred_sents = load_dataset(args.predictions, "jsonl")
        report = tsa_scores(_as_items(gold), _as_items(pred_sents))
        pairs = extracted_sp_pairs(_as_items(gold), _as_items(pred_sents))
        report.sp_accuracy = sp_accuracy(pairs) if pairs else 0.0
        report.extra = {"sp_accuracy_extracted": report.sp_accuracy}
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint or --predictions")
        from .trainer import evaluate

        model, cfg = _load_for_inference(args.checkpoint, overrides)
        report = evaluate(model, gold, cfg)
    if report.num_pred == 0:
        logger.warning("no predicted aspects; precision, recall and F1 are 0")
    stem = Path(args.output) if args.output else Path(args.data).with_name(Path(args.data).stem + "_eval")
    json_path, txt_path = write_report(report, stem, name=Path(args.data).stem)
    print(render_table({Path(args.data).stem: report}), end="")
    print(f"wrote {json_path} and {txt_path}")
    return EXIT_OK


def cmd_predict(args, overrides) -> int:
    sentences = load_dataset(args.data, args.format)
    model, cfg = _load_for_inference(args.checkpoint, overrides)
    preds = model.predict([s.tokens for s in sentences], cfg.transfer.h, cfg.decode.max_spans, cfg.decode.threshold)
    out = [AnnotatedSentence(list(s.tokens), list(p), s.source_id) for s, p in zip(sentences, preds)]
    write_jsonl(out, args.output)
    print(f"wrote {sum(len(p) for p in preds)} predicted aspects for {len(out)} sentences to {args.output}")
    return EXIT_OK


def parse_grid(specs: Sequence[str]) -> Dict[str, List[str]]:
    """``["xi=0.2,0.5", "h=1..4"]`` -> {"transfer.xi": [...], "transfer.h": ["1", "2", "3", "4"]}."""
    grid: Dict[str, List[str]] = {}
    for spec in specs:
        if "=" not in spec:
            raise UsageError(f"grid entry {spec!r} is not KEY=V1,V2,...")
        key, values = spec.split("=", 1)
        if key not in SWEEP_KEYS:
            raise UsageError(f"cannot sweep {key!r}; choose from xi, h, lambda, tau")
        if ".." in values and "," not in values:
            lo, hi = values.split("..", 1)
            vals = [str(v) for v in range(int(lo), int(hi) + 1)]
        else:
            vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise UsageError(f"grid entry {spec!r} has no values")
        grid[SWEEP_KEYS[key]] = vals
    if not grid:
        raise UsageError("empty sweep grid; pass at least one --grid KEY=V1,V2")
    return grid


def run_sweep(base: RunConfig, grid: Dict[str, List[str]], out_dir: Path, runner=None) -> List[dict]:
    """One training run per grid point. A failing cell is recorded, not fatal."""
    runner = runner or _train_and_test
    keys = list(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cfg = base.copy()
        cell = dict(zip(keys, values))
        name = "-".join(f"{k.split('.')[-1]}{v}" for k, v in cell.items())
        cfg.run_id = f"{base.run_id}-{name}"
        row: Dict[str, object] = {k.split(".")[-1]: v for k, v in cell.items()}
        try:
            for k, v in cell.items():
                cfg.set(k, v)
            cfg.validate()
            out = runner(cfg, out_dir / cfg.run_id)
            row.update(status="ok", best_epoch=out["best_epoch"], dev_f1=out["dev_f1"])
            test = out.get("test")
            row["test_f1"] = test.f1 if isinstance(test, EvalReport) else None
        except Exception as exc:  # noqa: BLE001 - the cell is marked failed and the sweep goes on
            logger.error("sweep cell %s failed: %s", name, exc)
            row.update(status="failed", error=str(exc), best_epoch=None, dev_f1=None, test_f1=None)
        rows.append(row)
    return rows


def cmd_sweep(args, overrides) -> int:
    grid = parse_grid(args.grid)
    base = load_config(args.config, overrides)
    out_dir = Path(args.output_dir or base.output_dir) / f"{base.run_id}-sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(base, grid, out_dir)
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with (out_dir / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    (out_dir / "sweep.json").write_text(json.dumps(rows, indent=2) + "\n")
    for r in rows:
        print(json.dumps(r))
    failed = sum(r["status"] == "failed" for r in rows)
    print(f"{len(rows)} cells, {failed} failed; wrote {out_dir / 'sweep.csv'}")
    return EXIT_OK if failed < len(rows) else EXIT_RUNTIME


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fckt", description="Targeted sentiment analysis with boundary transfer.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a corpus and write native JSONL + split manifest")
    p.add_argument("input")
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train", help="train from a YAML/JSON config; dotted --key value overrides")
    p.add_argument("config", nargs="?")
    p.add_argument("--output-dir")

    p = sub.add_parser("eval", help="score a checkpoint or a predictions file against gold data")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="jsonl")
    p.add_argument("-o", "--output", help="report path stem (.json and .txt are written)")

    p = sub.add_parser("predict", help="write predicted aspects and polarities as JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="jsonl")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("sweep", help="grid over xi, h, lambda, tau")
    p.add_argument("config", nargs="?")
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2")
    p.add_argument("--output-dir")
    return ap


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "prepare":
            if extra:
                raise UsageError(f"unexpected arguments {extra}")
            return cmd_prepare(args)
        return COMMANDS[args.command](args, parse_overrides(extra))
    except (ConfigError, DatasetError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
