# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for checkpoint module."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ddg_refiner.checkpoint import assign_params, read_checkpoint, save_checkpoint
from ddg_refiner.config import ModelConfig, TrainConfig
from ddg_refiner.exceptions import ConfigurationError, DataFormatError, ShapeError
from ddg_refiner.pipeline import ModelParams


class TestSaveAndRead:
    """Tests for save_checkpoint and read_checkpoint."""

    def test_bit_exact_reload(self, tmp_path: Path, tiny_model: ModelConfig) -> None:
        """Test that saved weights load back bit for bit."""
        saved = ModelParams.init(tiny_model, seed=1)
        path = tmp_path / "ckpt" / "model.json"
        save_checkpoint(path, saved.named_parameters(), tiny_model, TrainConfig(lr=0.02), 42)

        doc = read_checkpoint(path)
        assert doc.model == tiny_model
        assert doc.train is not None and doc.train.lr == 0.02
        assert doc.iteration == 42

        fresh = ModelParams.init(tiny_model, seed=2)
        assign_params(doc, fresh.named_parameters())
        for name, tensor in saved.named_parameters().items():
            np.testing.assert_array_equal(fresh.named_parameters()[name].values, tensor.values)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test that a missing checkpoint is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            read_checkpoint(tmp_path / "none.json")

    def test_not_json(self, tmp_path: Path) -> None:
        """Test that garbage is a data error."""
        path = tmp_path / "bad.json"
        path.write_text("garbage")
        with pytest.raises(DataFormatError, match="not a JSON checkpoint"):
            read_checkpoint(path)

    def test_unknown_version(self, tmp_path: Path, tiny_model: ModelConfig) -> None:
        """Test that a newer format version is rejected."""
        path = tmp_path / "model.json"
        save_checkpoint(path, {}, tiny_model)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(DataFormatError, match="format_version 99"):
            read_checkpoint(path)

    def test_value_count_mismatch(self, tmp_path: Path, tiny_model: ModelConfig) -> None:
        """Test that a blob whose values do not fill its shape is rejected."""
        path = tmp_path / "model.json"
        doc = {
            "format_version": 1,
            "model": tiny_model.model_dump(mode="json"),
            "params": {"x": {"shape": [2, 2], "values": [1.0, 2.0, 3.0]}},
        }
        path.write_text(json.dumps(doc))
        with pytest.raises(DataFormatError, match="invalid checkpoint"):
            read_checkpoint(path)


class TestAssignParams:
    """Tests for assign_params function."""

    def test_missing_names(self, tmp_path: Path, tiny_model: ModelConfig) -> None:
        """Test that a checkpoint without every parameter is rejected."""
        params = ModelParams.init(tiny_model).named_parameters()
        partial = {k: v for k, v in params.items() if not k.startswith("head.")}
        path = tmp_path / "model.json"
        save_checkpoint(path, partial, tiny_model)
        with pytest.raises(DataFormatError, match="lacks parameters"):
            assign_params(read_checkpoint(path), params)

    def test_shape_mismatch(self, tmp_path: Path, tiny_model: ModelConfig) -> None:
        """Test that weights of another architecture are rejected."""
        other = tiny_model.model_copy(update={"pooled_width": 8})
        path = tmp_path / "model.json"
        save_checkpoint(path, ModelParams.init(other).named_parameters(), other)
        with pytest.raises(ShapeError, match="load"):
            assign_params(read_checkpoint(path), ModelParams.init(tiny_model).named_parameters())
