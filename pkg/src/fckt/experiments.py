"""Synthetic-corpus experiments shared by the acceptance tests and scripts/."""

from __future__ import annotations

from typing import Dict, Optional

from .config import RunConfig
from .metrics import EvalReport
from .synthetic import generate_splits
from .trainer import evaluate, train

SYNTHETIC_TRAIN = 1000
SYNTHETIC_TEST = 300

# ablation switches: (transfer.enabled, contrast.enabled)
ABLATIONS = {
    "full": (True, True),
    "tcl_off": (True, False),
    "akt_off": (False, True),
    "both_off": (False, False),
}


def synthetic_config(seed: int = 0, **overrides) -> RunConfig:
    cfg = RunConfig(run_id=f"synthetic-s{seed}")
    cfg.encoder.kind = "toy"
    cfg.encoder.dim = 32
    cfg.encoder.layers = 2
    cfg.trainer.lr = 3e-3
    cfg.trainer.epochs = 30
    cfg.trainer.seed = seed
    for k, v in overrides.items():
        cfg.set(k, v)
    return cfg.validate()


def run_synthetic(config: RunConfig, data_seed: Optional[int] = None, run_dir=None,
                  num_train: int = SYNTHETIC_TRAIN, num_test: int = SYNTHETIC_TEST) -> Dict[str, object]:
    seed = config.trainer.seed if data_seed is None else data_seed
    train_s, test_s = generate_splits(num_train, num_test, seed=seed)
    result = train(train_s, None, config, run_dir=run_dir)
    report: EvalReport = evaluate(result.model, test_s, config)
    return {"report": report, "best_epoch": result.best_epoch, "epochs_run": len(result.history)}


def ablation_config(name: str, seed: int, **overrides) -> RunConfig:
    akt, tcl = ABLATIONS[name]
    cfg = synthetic_config(seed, **overrides)
    cfg.transfer.enabled = akt
    cfg.contrast.enabled = tcl
    cfg.run_id = f"synthetic-{name}-s{seed}"
    return cfg
