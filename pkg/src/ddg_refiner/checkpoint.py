# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Parameter checkpoint files.

A checkpoint is a JSON document::

    {
      "format_version": 1,
      "model": {...ModelConfig...},
      "train": {...TrainConfig...} | null,
      "iteration": 1200,
      "params": {"encoder.0.phi_e.0.w": {"shape": [151, 128], "values": [...]}, ...}
    }

Values are flat row-major lists of float64 numbers, written with full
``repr`` precision so a load reproduces the saved arrays bit for bit.
"""

from __future__ import annotations

from collections.abc import Mapping
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import ModelConfig, TrainConfig
from .exceptions import ConfigurationError, DataFormatError, ShapeError

if TYPE_CHECKING:
    from .autograd import Tensor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ParamBlob(BaseModel):
    """One named parameter array."""

    model_config = ConfigDict(extra="forbid")

    shape: list[int]
    values: list[float]

    @model_validator(mode="after")
    def _size_matches(self) -> ParamBlob:
        expected = int(np.prod(self.shape)) if self.shape else 1
        if len(self.values) != expected:
            msg = f"shape {self.shape} needs {expected} values, got {len(self.values)}"
            raise ValueError(msg)
        return self

    def to_array(self) -> NDArray[np.float64]:
        return np.array(self.values, dtype=np.float64).reshape(self.shape)


class CheckpointFile(BaseModel):
    """Schema of a checkpoint document."""

    model_config = ConfigDict(extra="forbid")

    format_version: int = Field(default=FORMAT_VERSION)
    model: ModelConfig
    train: TrainConfig | None = None
    iteration: int = 0
    params: dict[str, ParamBlob]


def save_checkpoint(
    path: Path,
    params: Mapping[str, Tensor],
    model: ModelConfig,
    train: TrainConfig | None = None,
    iteration: int = 0,
) -> None:
    """Write named parameter tensors plus the architecture to ``path``."""
    doc = CheckpointFile(
        model=model,
        train=train,
        iteration=iteration,
        params={
            name: ParamBlob(
                shape=list(t.shape), values=t.values.reshape(-1).tolist()
            )
            for name, t in params.items()
        },
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(doc.model_dump_json(), encoding="utf-8")
    logger.info(f"Saved checkpoint with {len(params)} tensors to {path}")


def read_checkpoint(path: Path) -> CheckpointFile:
    """Parse and validate a checkpoint document.

    Raises:
        ConfigurationError: If the file does not exist
        DataFormatError: If it is not a valid checkpoint of a known version
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as e:
        msg = f"Checkpoint not found: {path}"
        raise ConfigurationError(msg) from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"{path}: not a JSON checkpoint ({e})"
        raise DataFormatError(msg) from e
    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        msg = f"{path}: unsupported checkpoint format_version {version!r}"
        raise DataFormatError(msg)
    try:
        return CheckpointFile.model_validate(raw)
    except ValidationError as e:
        msg = f"{path}: invalid checkpoint: {e}"
        raise DataFormatError(msg) from e


def assign_params(doc: CheckpointFile, params: Mapping[str, Tensor]) -> None:
    """Copy checkpoint arrays into existing tensors (names and shapes must match)."""
    missing = sorted(set(params) - set(doc.params))
    if missing:
        msg = f"checkpoint lacks parameters: {', '.join(missing[:5])}"
        raise DataFormatError(msg)
    for name, tensor in params.items():
        values = doc.params[name].to_array()
        if values.shape != tensor.shape:
            raise ShapeError(f"load[{name}]", tensor.shape, values.shape)
        tensor.values[...] = values
    unused = set(doc.params) - set(params)
    if unused:
        logger.warning(f"Ignoring {len(unused)} unknown checkpoint tensors")
