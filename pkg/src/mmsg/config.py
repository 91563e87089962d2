"""Flat JSON run configuration."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from mmsg.errors import ConfigError


class RangeWarning(UserWarning):
    """A hyperparameter lies outside the commonly used range."""


# (low, high) envelopes of commonly used hyperparameters
TYPICAL_RANGES: dict[str, tuple[float, float]] = {
    "batch_size": (50, 128),
    "warmup_epochs": (5, 10),
    "epochs": (50, 100),
    "gnn_depth": (2, 5),
    "gru_layers": (3, 3),
    "ffn_layers": (2, 5),
    "trans_layers": (6, 12),
    "heads": (16, 32),
    "gnn_hidden": (128, 300),
    "gru_hidden": (128, 300),
    "ffn_hidden": (128, 300),
    "trans_hidden": (128, 300),
    "init_lr": (1e-5, 1e-3),
    "max_lr": (2e-5, 2e-3),
    "final_lr": (1e-5, 1e-3),
}


@dataclass
class RunConfig:
    dataset_path: str = ""
    task_type: str = "regression"
    task_columns: list[str] | None = None
    split_kind: str = "random"
    split_ratios: list[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])
    output_dir: str = "runs"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    bias_enabled: bool = True
    batch_size: int = 50
    epochs: int = 50
    warmup_epochs: int = 5
    init_lr: float = 1e-4
    max_lr: float = 2e-3
    final_lr: float = 1e-4
    gnn_depth: int = 2
    gnn_hidden: int = 128
    gru_hidden: int = 128
    gru_layers: int = 3
    ffn_layers: int = 2
    ffn_hidden: int = 128
    trans_layers: int = 6
    heads: int = 16
    trans_hidden: int = 128
    trans_ffn_hidden: int | None = None
    max_len: int | None = None
    precision: str = "float64"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.task_type not in ("classification", "regression"):
            raise ConfigError(f"task_type must be classification or regression, got {self.task_type!r}")
        if self.split_kind not in ("random", "scaffold"):
            raise ConfigError(f"split_kind must be random or scaffold, got {self.split_kind!r}")
        if len(self.split_ratios) != 3 or any(r < 0 for r in self.split_ratios) or abs(sum(self.split_ratios) - 1) > 1e-9:
            raise ConfigError(f"split_ratios must be three non-negative numbers summing to 1, got {self.split_ratios}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        for name in ("batch_size", "epochs", "gnn_depth", "gnn_hidden", "gru_hidden", "gru_layers", "ffn_hidden", "heads", "trans_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ffn_layers < 0 or self.trans_layers < 0 or self.warmup_epochs < 0:
            raise ConfigError("ffn_layers, trans_layers and warmup_epochs must be >= 0")
        if self.trans_hidden != self.gnn_hidden:
            raise ConfigError(f"trans_hidden ({self.trans_hidden}) must equal gnn_hidden ({self.gnn_hidden}) so the fused sum is defined")
        if self.gnn_hidden % self.heads:
            raise ConfigError(f"hidden size {self.gnn_hidden} must be divisible by heads {self.heads}")
        if not 0 < self.init_lr <= self.max_lr or not 0 < self.final_lr <= self.max_lr:
            raise ConfigError("learning rates need 0 < init_lr <= max_lr and 0 < final_lr <= max_lr")
        if self.warmup_epochs >= self.epochs:
            raise ConfigError(f"warmup_epochs ({self.warmup_epochs}) must be below epochs ({self.epochs})")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError("max_len must be >= 1")

    def out_of_range(self) -> list[str]:
        flagged = []
        for name, (lo, hi) in TYPICAL_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                flagged.append(f"{name}={v} outside typical range [{lo:g}, {hi:g}]")
        return flagged

    def warn_out_of_range(self) -> list[str]:
        flagged = self.out_of_range()
        for msg in flagged:
            warnings.warn(msg, RangeWarning, stacklevel=2)
        return flagged

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        for k, v in data.items():
            if isinstance(v, dict):
                raise ConfigError(f"config must be flat; key {k!r} holds an object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
