"""Training configuration and its TOML file form.

Example file::

    iterations = 2000
    batch_size = 8
    learning_rate = 1e-3
    optimizer = "adam"          # or "sgd-momentum"
    lr_schedule = "constant"    # or "halve-every-n" with lr_halve_every = 500
    seed = 0
    loss_weights = [0.0025, 0.005, 0.01, 0.02, 0.08, 0.16, 0.32]
    checkpoint_every = 500
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields, replace

from ..metrics import DEFAULT_LOSS_WEIGHTS, LossWeights

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 8
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    lr_schedule: str = "constant"
    lr_halve_every: int = 0
    seed: int = 0
    loss_weights: tuple[float, ...] = DEFAULT_LOSS_WEIGHTS
    checkpoint_every: int = 0
    flip_prob: float = 0.0
    jitter: float = 0.0
    precision: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "loss_weights", tuple(float(w) for w in self.loss_weights))
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd-momentum', got {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "halve-every-n"):
            raise ValueError(f"lr_schedule must be 'constant' or 'halve-every-n', got {self.lr_schedule!r}")
        if self.lr_schedule == "halve-every-n" and self.lr_halve_every < 1:
            raise ValueError("halve-every-n needs lr_halve_every >= 1")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")
        LossWeights(self.loss_weights)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.loss_weights)

    def lr_at(self, iteration: int) -> float:
        if self.lr_schedule == "halve-every-n":
            return self.learning_rate * 0.5 ** (iteration // self.lr_halve_every)
        return self.learning_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_weights"] = list(self.loss_weights)
        return d

    def updated(self, **overrides) -> "TrainConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls().updated(**data)
