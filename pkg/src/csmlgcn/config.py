"""Training configuration and its ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.001
    dropout_rate: float = 0.5
    hidden_dim: int = 128
    out_dim: int = 64
    head_dim: int = 64
    depth: int = 2
    eta_default: float = 0.5
    seed: int = 0
    candidate_hops: Optional[int] = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # "adam" or "sgd" (plain gradient descent)
    optimizer: str = "adam"
    # "epoch": one pass over all training queries per iteration;
    # "query": one single-query update per iteration
    iteration_unit: str = "epoch"
    # keep the parameters with the best validation F1
    select_best: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.eta_default <= 1.0:
            raise ValueError("eta_default must lie in [0, 1]")
        if self.candidate_hops is not None and self.candidate_hops < 0:
            raise ValueError("candidate_hops must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.iteration_unit not in ("epoch", "query"):
            raise ValueError(f"unknown iteration_unit {self.iteration_unit!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name, raw: str, default):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    kind = type(default)
    if name == "candidate_hops":
        kind = int
    if kind is bool:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if kind is str:
        return raw.strip("'\"")
    return kind(raw)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    defaults = TrainConfig()
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not hasattr(defaults, key):
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, raw, getattr(defaults, key))
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
    return out


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())
