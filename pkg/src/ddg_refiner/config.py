# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Run configuration: model architecture, training schedule and paths.

Configuration files are JSON documents matching ``RunConfig``. Command-line
flags are merged on top of the file (flags win) by ``load_config``.
"""

from __future__ import annotations

from collections.abc import Mapping
import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigurationError
from .models import CorruptionKind, MomentFormula, VarianceInitKind, VarianceRule

logger = logging.getLogger(__name__)

# One-hot type (20) + one-hot group (2) + mask flag (1) + at least one
# learned embedding column.
MIN_NODE_WIDTH = 24


class ModelConfig(BaseModel):
    """Architecture of encoder, refiner and head."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    node_width: int = Field(default=128, ge=MIN_NODE_WIDTH)
    pooled_width: int = Field(default=128, ge=1)
    encoder_layers: int = Field(default=1, ge=1)
    refiner_layers: int = Field(default=2, ge=1)
    knn_k: int = Field(default=8, ge=1)
    formula: MomentFormula = MomentFormula.STANDARD
    variance_rule: VarianceRule = VarianceRule.ADDITIVE
    variance_init: VarianceInitKind = VarianceInitKind.LEARNABLE
    interface_cutoff: float = Field(default=8.0, gt=0.0)


class TrainConfig(BaseModel):
    """Joint refinement and ΔΔG training schedule."""

    model_config = ConfigDict(extra="forbid")

    k_recycles: int = Field(default=3, ge=1)
    lam: float = Field(default=1.0, ge=0.0)
    l: int = Field(default=5, ge=0)  # noqa: E741
    r: int = Field(default=5, ge=0)
    lr: float = Field(default=1e-4, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    max_iterations: int = Field(default=50_000, ge=1)
    corruption: CorruptionKind = CorruptionKind.INTERPOLATE
    delta: float = Field(default=1.0, gt=0.0)
    alpha: float = Field(default=0.5, gt=0.0)
    seed: int = 0
    val_every: int = Field(default=1_000, ge=1)
    patience: int = Field(default=10, ge=0)
    min_lr: float = Field(default=1e-6, gt=0.0)
    log_every: int = Field(default=10, ge=1)


class RunConfig(BaseModel):
    """Everything one CLI run needs."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: Path | None = None
    structure_dir: Path | None = None
    rmsf_dir: Path | None = None
    fold: int = Field(default=0, ge=0)
    n_folds: int = Field(default=3, ge=2)
    val_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    checkpoint: Path | None = None
    init_checkpoint: Path | None = None
    log_file: Path | None = None

    @model_validator(mode="after")
    def _fold_in_range(self) -> RunConfig:
        if self.fold >= self.n_folds:
            msg = f"fold {self.fold} out of range for {self.n_folds} folds"
            raise ValueError(msg)
        return self

    def check_paths(self) -> None:
        """Raise if a referenced input path does not exist."""
        for name in ("dataset", "structure_dir", "rmsf_dir", "init_checkpoint"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                msg = f"{name}: path does not exist: {path}"
                raise ConfigurationError(msg)


def _merge(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Deep-merge ``overrides`` into ``base``; ``None`` values are ignored."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Load a JSON config file and apply flag overrides.

    Args:
        path: Optional JSON file; defaults are used when omitted
        overrides: Nested mapping of values that win over the file. Keys
            with ``None`` values are skipped so unset flags do not erase
            file settings.

    Returns:
        Validated run configuration

    Raises:
        ConfigurationError: If the file is missing, unreadable or invalid
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            msg = f"Config file not found: {path}"
            raise ConfigurationError(msg) from e
        except json.JSONDecodeError as e:
            msg = f"Config file {path} is not valid JSON: {e}"
            raise ConfigurationError(msg) from e
        if not isinstance(raw, dict):
            msg = f"Config file {path} must contain a JSON object"
            raise ConfigurationError(msg)
        logger.debug(f"Loaded config from {path}")

    merged = _merge(raw, overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        msg = f"Invalid configuration: {e}"
        raise ConfigurationError(msg) from e


def dump_config(config: RunConfig, path: Path) -> None:
    """Write ``config`` as indented JSON."""
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
