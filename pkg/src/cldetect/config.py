"""Run configuration and evaluation-matrix containers shared across modules."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .exceptions import ConfigError


@dataclass(frozen=True)
class RunConfig:
    """Training-run hyperparameters (defaults follow the experimental setup)."""

    max_epochs: int = 250
    patience: int = 35
    lr_initial: float = 0.005
    momentum: float = 0.1
    lr_min: float = 1e-5
    batch_size: int = 64
    crop_size: int = 28
    crop_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if self.lr_initial <= 0 or self.lr_min <= 0 or self.lr_min > self.lr_initial:
            raise ConfigError("need 0 < lr_min <= lr_initial")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.crop_enabled and not 1 <= self.crop_size <= 32:
            raise ConfigError("crop_size must be in [1, 32]")

    @property
    def input_side(self) -> int:
        return self.crop_size if self.crop_enabled else 32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown RunConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EvalMatrix:
    """rows[i][j] = test accuracy on task j after finishing training stage i."""

    task_names: list[str]
    rows: list[list[float]] = field(default_factory=list)

    def append_row(self, row: list[float]) -> None:
        if len(row) != len(self.task_names):
            raise ConfigError("row length must match the number of eval tasks")
        self.rows.append([float(v) for v in row])

    def final_average(self) -> float:
        if not self.rows:
            raise ConfigError("empty evaluation matrix")
        last = self.rows[-1]
        return float(sum(last) / len(last))
