# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for progress_tracker module."""

from __future__ import annotations

from datetime import timedelta
import io

import pytest
from rich.console import Console

from ddg_refiner import progress_tracker
from ddg_refiner.progress_tracker import DummyProgressTracker, TrainingProgress


@pytest.fixture
def tracker() -> TrainingProgress:
    """A tracker rendering to an in-memory console."""
    return TrainingProgress("train fold 0", 10, Console(file=io.StringIO()))


class TestTrainingProgress:
    """Tests for TrainingProgress class."""

    def test_update_records_losses(self, tracker: TrainingProgress) -> None:
        """Test that a step's losses and learning rate are kept."""
        tracker.update(4, {"loss_total": 0.5, "loss_ddg": 0.25}, 1e-3)
        summary = tracker.get_summary()
        assert summary["iterations"] == 4
        assert summary["losses"] == {"loss_total": 0.5, "loss_ddg": 0.25}
        assert tracker.lr == 1e-3
        assert tracker._percent() == pytest.approx(40.0)

    def test_validation_counts(self, tracker: TrainingProgress) -> None:
        """Test that validations are counted with the best score."""
        tracker.record_validation({"spearman": 0.5}, 0.5)
        tracker.record_validation({"spearman": 0.7}, 0.7)
        assert tracker.get_summary()["validations"] == 2
        assert tracker.best_metric == 0.7

    def test_display_text(self, tracker: TrainingProgress) -> None:
        """Test that the rendered text names the task and the losses."""
        tracker.update(2, {"loss_total": 0.125})
        text = tracker._generate_display_text().plain
        assert "train fold 0" in text
        assert "2/10" in text
        assert "loss_total 0.125" in text

    def test_live_start_stop(self, tracker: TrainingProgress) -> None:
        """Test that the live display starts, suspends, resumes and stops."""
        tracker.start()
        tracker.update(1, {"loss_total": 1.0})
        tracker.suspend()
        assert tracker.paused
        tracker.resume()
        assert not tracker.paused
        tracker.stop()

    def test_fallback_prints(
        self,
        monkeypatch: pytest.MonkeyPatch,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        """Test the plain-text display when the live view cannot start."""

        def broken_live(*args: object, **kwargs: object) -> None:
            msg = "unsupported terminal"
            raise OSError(msg)

        monkeypatch.setattr(progress_tracker, "Live", broken_live)
        tracker = TrainingProgress("pretrain", 5, Console(file=io.StringIO()))
        tracker.start()
        assert not tracker.live_enabled
        assert tracker.live is None
        tracker.update(1, {"loss_refine": 2.0})
        tracker.update(1, {"loss_refine": 2.0})
        out = capsys.readouterr().out
        assert out.count("pretrain (1/5 steps, 20%)") == 1
        assert "loss_refine 2" in out

    def test_zero_total(self) -> None:
        """Test that a tracker without planned steps reports zero percent."""
        tracker = TrainingProgress("x", 0, Console(file=io.StringIO()))
        assert tracker._percent() == 0.0

    def test_format_duration(self, tracker: TrainingProgress) -> None:
        """Test minute and second formatting."""
        assert tracker._format_duration(timedelta(seconds=42)) == "42s"
        assert tracker._format_duration(timedelta(seconds=125)) == "2m 5s"


class TestDummyProgressTracker:
    """Tests for DummyProgressTracker class."""

    def test_no_op(self) -> None:
        """Test that the dummy only remembers the last iteration."""
        tracker = DummyProgressTracker("quiet", 3)
        tracker.start()
        tracker.update(3, {"loss": 0.1})
        tracker.record_validation({}, 0.0)
        tracker.update_operation("Validating")
        tracker.stop()
        assert tracker.get_summary() == {"task": "quiet", "iterations": 3}
