import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional

from dotenv import load_dotenv

GENRE_LAYERS = 3
OUTPUT_KEYS = 88

ENV_PREFIX = "STYLENET_"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    keep_prob: float = 0.8
    clip_norm: float = 10.0
    window: int = 200
    epochs: int = 160
    batch_size: int = 4
    interp_hidden: int = 88
    genre_hidden: int = 128
    seed: int = 0
    checkpoint_every: int = 10
    masked_loss: bool = False

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        for name in ("window", "epochs", "batch_size", "interp_hidden", "genre_hidden", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known}).validate()

    def with_overrides(self, **overrides: Optional[Any]) -> "TrainConfig":
        """Applies every override that is not None."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None}).validate()


def _parse(kind, raw: str):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return kind(raw)


def env_overrides() -> Dict[str, Any]:
    """Reads STYLENET_<FIELD> values from the environment and any .env file."""
    load_dotenv()
    values = {}
    for f in fields(TrainConfig):
        raw = os.getenv(ENV_PREFIX + f.name.upper())
        if raw is not None:
            kind = type(f.default)
            try:
                values[f.name] = _parse(kind, raw)
            except ValueError as e:
                raise ValueError(f"bad value for {ENV_PREFIX + f.name.upper()}: {raw!r}") from e
    return values


def resolve_config(flags: Optional[Dict[str, Any]] = None,
                   checkpoint_config: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """flags > checkpoint-embedded config > environment > defaults."""
    config = TrainConfig().with_overrides(**env_overrides())
    if checkpoint_config:
        config = config.with_overrides(**TrainConfig.from_dict(checkpoint_config).to_dict())
    return config.with_overrides(**(flags or {}))
