"""JSON run configuration with strict key checking.

Defaults reproduce the published recipe (AdamW, lr 1e-3 with cosine decay,
300 epochs, batch 8, theta 0.7, 5 FFC residual blocks, base width 32).
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .data import SynthConfig
from .losses import LossConfig
from .model import UcfConfig
from .optim import OptimConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class DataConfig:
    root: str | None = None
    synth: SynthConfig | None = None
    split_ratio: float = 0.8
    split_seed: int = 0
    pad_multiple: int = 16
    hflip: bool = False


@dataclass
class EvalConfig:
    threshold: float = 0.5
    distance: float = 4.0
    n_thresholds: int = 201
    auc_curve: str = "pr"


@dataclass
class RunSection:
    seed: int = 0
    mode: int = 32
    output_dir: str = "runs/default"
    threads: int = 1
    eval_every: int = 1
    checkpoint_every: int = 10
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])


@dataclass
class RunConfig:
    model: UcfConfig = field(default_factory=UcfConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> None:
        for name, section in (("model", self.model), ("optim", self.optim), ("loss", self.loss)):
            try:
                section.validate()
            except ValueError as exc:
                raise ConfigError(name, str(exc)) from None
        if self.data.synth is not None:
            try:
                self.data.synth.validate()
            except ValueError as exc:
                raise ConfigError("data.synth", str(exc)) from None
        if not 0 < self.data.split_ratio < 1:
            raise ConfigError("data.split_ratio", f"must lie in (0, 1), got {self.data.split_ratio}")
        if self.data.pad_multiple % (2 ** self.model.depth):
            raise ConfigError("data.pad_multiple", f"must be a multiple of 2**depth = {2 ** self.model.depth}")
        if self.run.mode not in (32, 64):
            raise ConfigError("run.mode", f"must be 32 or 64, got {self.run.mode}")
        if self.eval.auc_curve not in ("pr", "roc"):
            raise ConfigError("eval.auc_curve", f"must be 'pr' or 'roc', got {self.eval.auc_curve!r}")
        if self.eval.n_thresholds < 2:
            raise ConfigError("eval.n_thresholds", "must be >= 2")
        for key in ("threads", "eval_every", "checkpoint_every"):
            if getattr(self.run, key) < 1:
                raise ConfigError(f"run.{key}", f"must be >= 1, got {getattr(self.run, key)}")
        if not self.run.seeds:
            raise ConfigError("run.seeds", "must list at least one seed")

    @property
    def dtype(self) -> str:
        return "float32" if self.run.mode == 32 else "float64"

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get("UCF_OUTPUT_DIR") or self.run.output_dir)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, raw: Any, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected an object, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    for key, val in raw.items():
        sub = f"{path}.{key}" if path else key
        default = getattr(cls(), key) if key not in _NESTED.get(cls, {}) else None
        nested = _NESTED.get(cls, {}).get(key)
        if nested is not None:
            kwargs[key] = None if val is None else _build(nested, val, sub)
        elif isinstance(default, tuple):
            if not isinstance(val, list) or len(val) != len(default):
                raise ConfigError(sub, f"expected a list of {len(default)} values")
            kwargs[key] = tuple(val)
        else:
            if default is not None and isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(sub, f"expected a number, got {val!r}")
                if isinstance(default, int) and not isinstance(val, int):
                    raise ConfigError(sub, f"expected an integer, got {val!r}")
            kwargs[key] = val
    return cls(**kwargs)


_NESTED = {
    RunConfig: {"model": UcfConfig, "optim": OptimConfig, "loss": LossConfig,
                "data": DataConfig, "eval": EvalConfig, "run": RunSection},
    DataConfig: {"synth": SynthConfig},
}


def config_from_dict(raw: dict) -> RunConfig:
    cfg = _build(RunConfig, raw, "")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(raw)
