import logging
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.domain.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/navigation.yaml"
ROOT_PATH = Path(__file__).resolve().parent.parent.parent


class NavigationConfig(BaseModel):
    """
    Flat training/evaluation configuration. The YAML key for the imitation
    weight is `lambda`; in code it is `lam`.
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # model
    d: int = Field(32, ge=2)
    heads: int = Field(2, ge=1)
    delta_b: float = Field(0.5, gt=0.0, lt=1.0)
    max_length: int = Field(80, ge=1)
    cgip_enabled: bool = True
    fgip_enabled: bool = True

    # objective
    lam: float = Field(0.2, ge=0.0, alias="lambda")
    gamma: float = Field(0.95, ge=0.0, le=1.0)
    beta: float = Field(0.01, ge=0.0)
    rl_weight: float = Field(1.0, ge=0.0)
    il_warmup: float = Field(0.25, ge=0.0, le=1.0)

    # optimisation
    lr: float = Field(3e-4, gt=0.0)
    batch: int = Field(8, ge=1)
    iters: int = Field(600, ge=1)
    grad_clip: float = Field(5.0, gt=0.0)
    eval_every: int = Field(100, ge=1)
    seed: int = 0

    # worlds and episodes
    n_nodes: int = Field(20, ge=1)
    n_train_worlds: int = Field(5, ge=1)
    episodes_per_world: int = Field(100, ge=1)
    val_episodes_per_world: int = Field(10, ge=1)
    n_unseen_worlds: int = Field(5, ge=1)
    max_steps: int = Field(20, ge=1)
    max_legs: int = Field(6, ge=1)
    success_radius: float = Field(1.0, gt=0.0)
    noise_sigma: float = Field(0.1, ge=0.0)

    progress: bool = True

    @model_validator(mode="after")
    def check_heads(self) -> "NavigationConfig":
        if self.d % self.heads != 0:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        return self


def _resolve(path: str | Path) -> Path:
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    return ROOT_PATH / path


def load_config(path: Optional[str | Path] = DEFAULT_CONFIG_PATH, **overrides: object) -> NavigationConfig:
    """
    Reads a flat YAML mapping into a NavigationConfig. A missing file yields
    the defaults; unknown keys and invalid values raise ConfigurationError.
    """
    data: dict = {}
    if path is not None:
        full_path = _resolve(path)
        if full_path.exists():
            with open(full_path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"{full_path} must hold a flat key/value mapping")
            data.update(loaded)
        else:
            logger.warning("Config file %s not found, using defaults", full_path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return NavigationConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e
