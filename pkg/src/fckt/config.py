"""Run configuration: nested dataclasses, range validation, dotted overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .contrast import DENOMINATORS
from .transfer import GRANULARITIES, MIX_MODES, SPAN_BOUNDS


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    kind: str = "toy"  # {toy, pretrained}
    dim: int = 32
    layers: int = 2
    heads: int = 4
    max_len: int = 128
    dropout: float = 0.1
    freeze: bool = False
    pretrained_name: str = "bert-large-uncased"


@dataclass
class DecodeConfig:
    max_spans: int = 5
    threshold: float = -6.0


@dataclass
class ContrastConfig:
    enabled: bool = True
    tau: float = 0.07
    denominator: str = "with_positive"


@dataclass
class TransferConfig:
    enabled: bool = True
    xi: float = 0.8
    h: int = 3
    mix_mode: str = "gated"
    gate_granularity: str = "example"
    span_bound: str = "length"


@dataclass
class TrainerConfig:
    lr: float = 1e-3
    batch_size: int = 16
    lambda_cl: float = 0.1
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    grad_clip: float = 1.0
    keep_all_checkpoints: bool = False


@dataclass
class MetricsConfig:
    sp_mode: str = "gold"  # {gold, extracted}
    folds: int = 10


@dataclass
class DataConfig:
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    format: str = "jsonl"
    dev_fraction: float = 0.1


@dataclass
class RunConfig:
    run_id: str = "run"
    output_dir: str = "runs"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        cfg = cls()
        for key, value in _flatten(data or {}).items():
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data or {})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def set(self, key: str, value: Any) -> None:
        key = ALIASES.get(key, key)
        parts = key.split(".")
        target: Any = self
        for p in parts[:-1]:
            if not is_dataclass(target) or p not in _field_names(target):
                raise ConfigError(f"unknown config key {key!r}")
            target = getattr(target, p)
        leaf = parts[-1]
        if not is_dataclass(target) or leaf not in _field_names(target) or is_dataclass(getattr(target, leaf)):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, leaf, _coerce(getattr(target, leaf), value, key, _field_type(target, leaf)))

    def get(self, key: str) -> Any:
        target: Any = self
        for p in ALIASES.get(key, key).split("."):
            target = getattr(target, p)
        return target

    def copy(self) -> "RunConfig":
        return RunConfig.from_dict(self.to_dict())

    def validate(self) -> "RunConfig":
        e, t, c, x, d = self.encoder, self.trainer, self.contrast, self.transfer, self.decode
        checks = [
            (e.kind in ("toy", "pretrained"), "encoder.kind must be 'toy' or 'pretrained'"),
            (e.dim >= 1, "encoder.dim must be positive"),
            (e.kind != "toy" or 8 <= e.dim <= 512, "encoder.dim for the toy encoder must lie in [8, 512]"),
            (e.layers >= 1, "encoder.layers must be positive"),
            (e.heads >= 1 and e.dim % e.heads == 0, "encoder.heads must divide encoder.dim"),
            (e.max_len >= 1, "encoder.max_len must be positive"),
            (0.0 <= e.dropout < 1.0, "encoder.dropout must lie in [0, 1)"),
            (d.max_spans >= 1, "decode.max_spans must be positive"),
            (c.tau > 0, "contrast.tau must be positive"),
            (c.denominator in DENOMINATORS, f"contrast.denominator must be one of {DENOMINATORS}"),
            (0.0 <= x.xi <= 1.0, "transfer.xi must lie in [0, 1]"),
            (x.h >= 1, "transfer.h must be positive"),
            (x.mix_mode in MIX_MODES, f"transfer.mix_mode must be one of {MIX_MODES}"),
            (x.gate_granularity in GRANULARITIES, f"transfer.gate_granularity must be one of {GRANULARITIES}"),
            (x.span_bound in SPAN_BOUNDS, f"transfer.span_bound must be one of {SPAN_BOUNDS}"),
            (t.lr > 0, "trainer.lr must be positive"),
            (t.batch_size >= 1, "trainer.batch_size must be positive"),
            (t.lambda_cl >= 0, "trainer.lambda_cl must be nonnegative"),
            (t.epochs >= 0, "trainer.epochs must be nonnegative"),
            (t.patience >= 1, "trainer.patience must be positive"),
            (t.grad_clip >= 0, "trainer.grad_clip must be nonnegative (0 disables)"),
            (self.metrics.sp_mode in ("gold", "extracted"), "metrics.sp_mode must be 'gold' or 'extracted'"),
            (self.metrics.folds >= 2, "metrics.folds must be at least 2"),
            (self.data.format in ("jsonl", "semeval-xml"), "data.format must be 'jsonl' or 'semeval-xml'"),
            (0.0 <= self.data.dev_fraction < 1.0, "data.dev_fraction must lie in [0, 1)"),
            (bool(self.run_id) and "/" not in self.run_id, "run_id must be a non-empty name without '/'"),
        ]
        errors = [msg for ok, msg in checks if not ok]
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    # effective values after the ablation switches
    @property
    def effective_xi(self) -> float:
        return self.transfer.xi if self.transfer.enabled else 1.0

    @property
    def effective_lambda(self) -> float:
        return self.trainer.lambda_cl if self.contrast.enabled else 0.0


ALIASES = {
    "xi": "transfer.xi",
    "h": "transfer.h",
    "decode.h": "transfer.h",
    "tau": "contrast.tau",
    "lambda": "trainer.lambda_cl",
    "trainer.lambda": "trainer.lambda_cl",
    "trainer.learning_rate": "trainer.lr",
    "lr": "trainer.lr",
    "seed": "trainer.seed",
}


def _field_names(obj) -> set:
    return {f.name for f in fields(obj)}


def _field_type(obj, name):
    for f in fields(obj):
        if f.name == name:
            return f.type
    return None


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(current: Any, value: Any, key: str, declared=None) -> Any:
    if value is None:
        if current is None or (isinstance(declared, str) and declared.startswith("Optional")):
            return None
        raise ConfigError(f"{key} may not be null")
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {key}") from None
