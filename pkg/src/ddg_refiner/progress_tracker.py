# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

from __future__ import annotations

from contextlib import suppress
from datetime import datetime, timedelta
import math
from typing import Any

from rich.console import Console
from rich.live import Live
from rich.text import Text


class TrainingProgress:
    """Live progress display for training, pretraining and uncertainty fits."""

    def __init__(
        self,
        task: str,
        total_iterations: int,
        console: Console | None = None,
    ):
        """Initialize a tracker for one optimization run.

        Args:
            task: Short label shown in the header (e.g. "train fold 0")
            total_iterations: Planned number of optimizer steps
            console: Console to render on (a fresh one when omitted)
        """
        self.task = task
        self.total_iterations = total_iterations
        self.start_time = datetime.now()
        self.console = console or Console()

        self.iteration = 0
        self.losses: dict[str, float] = {}
        self.lr: float | None = None
        self.best_metric: float | None = None
        self.last_validation: dict[str, float] = {}
        self.validations = 0
        self.current_operation = "Initializing..."

        self.live: Live | None = None
        self.live_enabled = True
        self.paused = False
        self._last_display = ""

    def start(self) -> None:
        """Start the live progress display."""
        if not self.live_enabled:
            return
        try:
            self.live = Live(
                self._generate_display_text(),
                console=self.console,
                refresh_per_second=2,
                transient=False,
            )
            self.live.start()
        except Exception:
            # Unsupported terminal
            self.live_enabled = False
            self.live = None

    def stop(self) -> None:
        """Stop the live progress display."""
        if self.live:
            with suppress(Exception):
                self.live.stop()
        self.paused = False

    def suspend(self) -> None:
        """Temporarily pause the live display to allow clean printing elsewhere."""
        if self.live and self.live_enabled and not self.paused:
            with suppress(Exception):
                self.live.stop()
            self.paused = True

    def resume(self) -> None:
        """Resume the live display after it was suspended."""
        if self.live_enabled and self.paused:
            with suppress(Exception):
                self.live = Live(
                    self._generate_display_text(),
                    console=self.console,
                    refresh_per_second=2,
                    transient=False,
                )
                self.live.start()
            self.paused = False

    def update(
        self, iteration: int, losses: dict[str, float], lr: float | None = None
    ) -> None:
        """Record the losses of a finished optimizer step."""
        self.iteration = iteration
        self.losses = dict(losses)
        self.lr = lr
        self.current_operation = "Optimizing"
        self._refresh_display()

    def record_validation(self, metrics: dict[str, float], best: float) -> None:
        """Record a validation pass and the best score so far."""
        self.validations += 1
        self.last_validation = dict(metrics)
        self.best_metric = best
        self._refresh_display()

    def update_operation(self, operation: str) -> None:
        """Update the current operation description."""
        self.current_operation = operation
        self._refresh_display()

    def _refresh_display(self) -> None:
        if self.live and self.live_enabled and not self.paused:
            with suppress(Exception):
                self.live.update(self._generate_display_text())
        elif not self.live_enabled:
            self._fallback_display()

    def _percent(self) -> float:
        if self.total_iterations <= 0:
            return 0.0
        return 100.0 * self.iteration / self.total_iterations

    def _loss_summary(self) -> str:
        return " | ".join(f"{name} {value:.4g}" for name, value in self.losses.items())

    def _generate_display_text(self) -> Text:
        """Generate the current progress display text."""
        text = Text()
        text.append("🧬 ", style="bold blue")
        text.append(f"{self.task} ", style="bold cyan")
        text.append(
            f"({self.iteration}/{self.total_iterations} steps, ", style="white"
        )
        text.append(f"{self._percent():.0f}%", style="green")
        text.append(")", style="white")
        if self.lr is not None:
            text.append(f" | lr {self.lr:.2e}", style="white")
        text.append("\n")

        if self.losses:
            text.append(f"📉 {self._loss_summary()}", style="white")
        else:
            text.append(f"📋 {self.current_operation}", style="dim white")

        if self.best_metric is not None and math.isfinite(self.best_metric):
            text.append(
                f"\n✅ {self.validations} validations, best score {self.best_metric:.4f}",
                style="green",
            )

        elapsed = datetime.now() - self.start_time
        text.append(
            f"\n⏱️  Elapsed: {self._format_duration(elapsed)}", style="dim blue"
        )
        return text

    def _fallback_display(self) -> None:
        """Plain text display for terminals where the live view cannot start."""
        progress_line = (
            f"🧬 {self.task} ({self.iteration}/{self.total_iterations} steps, "
            f"{self._percent():.0f}%)"
        )
        detail_line = (
            f"📉 {self._loss_summary()}" if self.losses else f"📋 {self.current_operation}"
        )
        elapsed = datetime.now() - self.start_time
        time_line = f"⏱️  Elapsed: {self._format_duration(elapsed)}"
        current_display = f"{progress_line}\n{detail_line}\n{time_line}"
        if current_display != self._last_display:
            print(f"\r{current_display}\n", end="", flush=True)
            self._last_display = current_display

    def _format_duration(self, duration: timedelta) -> str:
        total_seconds = int(duration.total_seconds())
        minutes = total_seconds // 60
        seconds = total_seconds % 60
        if minutes > 0:
            return f"{minutes}m {seconds}s"
        return f"{seconds}s"

    def get_summary(self) -> dict[str, Any]:
        """Summary of the run so far."""
        elapsed = datetime.now() - self.start_time
        return {
            "task": self.task,
            "iterations": self.iteration,
            "total_iterations": self.total_iterations,
            "validations": self.validations,
            "best_metric": self.best_metric,
            "losses": dict(self.losses),
            "elapsed_time": self._format_duration(elapsed),
        }


class DummyProgressTracker:
    """A no-op tracker for quiet runs and tests."""

    def __init__(self, task: str = "", total_iterations: int = 0):
        self.task = task
        self.total_iterations = total_iterations
        self.iteration = 0

    def start(self) -> None:
        pass

    def stop(self) -> None:
        pass

    def suspend(self) -> None:
        pass

    def resume(self) -> None:
        pass

    def update(
        self, iteration: int, losses: dict[str, float], lr: float | None = None
    ) -> None:
        self.iteration = iteration

    def record_validation(self, metrics: dict[str, float], best: float) -> None:
        pass

    def update_operation(self, operation: str) -> None:
        pass

    def get_summary(self) -> dict[str, Any]:
        return {"task": self.task, "iterations": self.iteration}


ProgressLike = TrainingProgress | DummyProgressTracker
