# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Training, pretraining and uncertainty-fitting loops.

The loops own the optimizer, the plateau scheduler, the line-delimited
JSON training log and best-checkpoint retention. Single optimization
steps live in :mod:`ddg_refiner.pipeline`.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import logging
import math
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import NDArray

from .autograd import no_grad
from .checkpoint import assign_params, read_checkpoint, save_checkpoint
from .config import TrainConfig
from .data_io import complex_key, rmsf_for_complex
from .exceptions import ConfigurationError, DataFormatError
from .metrics import EvalReport, evaluate, pearson
from .models import (
    DatasetEntry,
    EvalRecord,
    FoldAssignment,
    UncertaintyReport,
    VarianceInitKind,
)
from .optim import Adam, ReduceLROnPlateau
from .pipeline import (
    ModelParams,
    TrainSample,
    covariance_sq_norms,
    mmm_pretrain_step,
    predict_ddg,
    train_step,
    uncertainty_train_step,
)
from .progress_tracker import DummyProgressTracker, ProgressLike
from .structure import interface_residues

if TYPE_CHECKING:
    from .data_io import ComplexKey
    from .models import Complex

logger = logging.getLogger(__name__)

MAX_WORKERS = 32


def default_workers() -> int:
    """Worker count for concurrent evaluation, derived from the CPU count."""
    return max(1, min(MAX_WORKERS, os.cpu_count() or 1))


class TrainingLog:
    """Append-only line-delimited JSON log; a no-op without a path."""

    def __init__(self, path: Path | None):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def write(self, record: Mapping[str, Any]) -> None:
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(dict(record)) + "\n")


def load_model(path: Path) -> tuple[ModelParams, TrainConfig]:
    """Rebuild the architecture stored in a checkpoint and load its weights.

    Returns:
        The parameters and the training configuration saved with them
        (defaults when the checkpoint has none)
    """
    doc = read_checkpoint(path)
    params = ModelParams.init(doc.model)
    assign_params(doc, params.named_parameters())
    logger.debug(f"Loaded model from {path} (iteration {doc.iteration})")
    return params, doc.train or TrainConfig()


def load_pretrained(path: Path, params: ModelParams) -> None:
    """Copy encoder and refiner weights from a checkpoint into ``params``.

    The checkpoint may come from pretraining or from a full run; the head
    is left as initialized.
    """
    doc = read_checkpoint(path)
    if doc.model.node_width != params.config.node_width:
        msg = (
            f"{path}: node width {doc.model.node_width} does not match "
            f"{params.config.node_width}"
        )
        raise DataFormatError(msg)
    assign_params(doc, params.pretrain_parameters())


def build_samples(
    entries: Sequence[DatasetEntry],
    complexes: Mapping[ComplexKey, Complex],
    rmsf: Mapping[str, Mapping[tuple[str, int], float]] | None = None,
) -> list[TrainSample]:
    """Pair dataset entries with their parsed complexes (and RMSF, if any)."""
    samples: list[TrainSample] = []
    for entry in entries:
        c = complexes[complex_key(entry)]
        values = None
        if rmsf is not None:
            if entry.pdb_id not in rmsf:
                msg = f"No RMSF table for structure {entry.pdb_id}"
                raise DataFormatError(msg)
            values = rmsf_for_complex(c, rmsf[entry.pdb_id])
        samples.append(TrainSample(entry, c, values))
    return samples


@dataclass
class FoldSplit:
    """Entries for training, validation and testing of one fold."""

    train: list[DatasetEntry]
    val: list[DatasetEntry]
    test: list[DatasetEntry]


def split_for_fold(
    entries: Sequence[DatasetEntry],
    folds: FoldAssignment,
    fold: int,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> FoldSplit:
    """Hold out ``fold`` for testing and a slice of structures for validation.

    Validation structures are drawn from the training folds so no
    structure appears in two splits. With a single training structure
    nothing is held out.
    """
    if not 0 <= fold < folds.n_folds:
        msg = f"fold {fold} out of range for {folds.n_folds} folds"
        raise ValueError(msg)
    pool = folds.entries_not_in(entries, fold)
    structures = sorted({e.pdb_id for e in pool})
    n_val = 0 if len(structures) < 2 else max(1, round(val_fraction * len(structures)))
    n_val = min(n_val, len(structures) - 1) if structures else 0
    order = np.random.default_rng(seed).permutation(len(structures))
    held_out = {structures[i] for i in order[:n_val]}
    return FoldSplit(
        train=[e for e in pool if e.pdb_id not in held_out],
        val=[e for e in pool if e.pdb_id in held_out],
        test=folds.entries_in(entries, fold),
    )


def predict_records(
    samples: Sequence[TrainSample],
    params: ModelParams,
    cfg: TrainConfig,
    workers: int = 1,
) -> list[EvalRecord]:
    """Predict every sample; results keep the input order.

    Predictions run without gradient recording, so worker threads only
    read the shared parameter tensors.
    """

    def one(sample: TrainSample) -> EvalRecord:
        with no_grad():
            y = predict_ddg(
                sample.complex, sample.entry.mutations, params, cfg, sample.rmsf
            )
        return EvalRecord(sample.entry.pdb_id, sample.entry.ddg, y)

    if workers <= 1 or len(samples) <= 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, samples))


def validation_score(report: EvalReport) -> float:
    """Lower is better: 1 − Spearman (per structure when defined), else RMSE."""
    for key in ("per_structure_spearman", "spearman"):
        value = report.metrics.get(key, math.nan)
        if not math.isnan(value):
            return 1.0 - value
    value = report.metrics.get("rmse", math.nan)
    return math.inf if math.isnan(value) else value


@dataclass
class TrainResult:
    """Outcome of a training loop."""

    history: list[dict[str, float]] = field(default_factory=list)
    validations: list[dict[str, float]] = field(default_factory=list)
    best_score: float = math.inf
    best_iteration: int = 0

    @property
    def initial_loss(self) -> float:
        return self.history[0]["loss_total"] if self.history else math.nan

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss_total"] if self.history else math.nan


class Trainer:
    """Joint refinement and ΔΔG training with periodic validation.

    Batches are drawn epoch-wise from a seeded permutation, so a run is
    reproducible for a fixed ``TrainConfig.seed``.
    """

    def __init__(
        self,
        params: ModelParams,
        cfg: TrainConfig,
        train_samples: Sequence[TrainSample],
        val_samples: Sequence[TrainSample] = (),
        checkpoint_path: Path | None = None,
        log_path: Path | None = None,
        progress: ProgressLike | None = None,
        workers: int = 1,
    ):
        if not train_samples:
            msg = "Training needs at least one sample"
            raise DataFormatError(msg)
        self.params = params
        self.cfg = cfg
        self.train_samples = list(train_samples)
        self.val_samples = list(val_samples)
        self.checkpoint_path = checkpoint_path
        self.log = TrainingLog(log_path)
        self.progress = progress or DummyProgressTracker("train", cfg.max_iterations)
        self.workers = workers
        self.optimizer = Adam(params.named_parameters(), lr=cfg.lr)
        self.scheduler = ReduceLROnPlateau(
            self.optimizer, patience=cfg.patience, min_lr=cfg.min_lr
        )
        self.rng = np.random.default_rng(cfg.seed)
        self._order: list[int] = []

    def _next_batch(self) -> list[TrainSample]:
        size = min(self.cfg.batch_size, len(self.train_samples))
        batch: list[TrainSample] = []
        while len(batch) < size:
            if not self._order:
                self._order = self.rng.permutation(len(self.train_samples)).tolist()
            batch.append(self.train_samples[self._order.pop()])
        return batch

    def validate(self) -> EvalReport:
        records = predict_records(self.val_samples, self.params, self.cfg, self.workers)
        return evaluate(records)

    def _save(self, iteration: int) -> None:
        if self.checkpoint_path is not None:
            save_checkpoint(
                self.checkpoint_path,
                self.params.named_parameters(),
                self.params.config,
                self.cfg,
                iteration,
            )

    def fit(self) -> TrainResult:
        """Run ``max_iterations`` joint steps and return the loss history."""
        result = TrainResult()
        self.progress.start()
        try:
            for iteration in range(1, self.cfg.max_iterations + 1):
                batch = self._next_batch()
                step_seed = int(self.rng.integers(2**31))
                losses = train_step(batch, self.params, self.optimizer, self.cfg, step_seed)
                record = {"iteration": iteration, **losses, "lr": self.optimizer.lr}
                result.history.append(record)
                if iteration % self.cfg.log_every == 0 or iteration == 1:
                    self.log.write(record)
                    logger.debug(
                        f"iter {iteration}: total {losses['loss_total']:.4g} "
                        f"ddg {losses['loss_ddg']:.4g} refine {losses['loss_refine']:.4g}"
                    )
                self.progress.update(iteration, losses, self.optimizer.lr)
                if self.val_samples and iteration % self.cfg.val_every == 0:
                    self._validate_and_keep(iteration, result)
        finally:
            self.progress.stop()
        if result.best_iteration == 0:
            result.best_iteration = self.cfg.max_iterations
            self._save(self.cfg.max_iterations)
        logger.info(
            f"Training finished: loss {result.initial_loss:.4g} -> {result.final_loss:.4g}"
        )
        return result

    def _validate_and_keep(self, iteration: int, result: TrainResult) -> None:
        self.progress.update_operation("Validating")
        report = self.validate()
        score = validation_score(report)
        result.validations.append({"iteration": iteration, "score": score, **report.metrics})
        if score < result.best_score:
            result.best_score = score
            result.best_iteration = iteration
            self._save(iteration)
            self.progress.suspend()
            logger.info(f"iter {iteration}: new best validation score {score:.4f}")
            self.progress.resume()
        self.scheduler.step(score)
        self.progress.record_validation(report.metrics, result.best_score)


def pretrain(
    structures: Sequence[Complex],
    params: ModelParams,
    cfg: TrainConfig,
    progress: ProgressLike | None = None,
    log_path: Path | None = None,
) -> list[float]:
    """Masked-refinement pretraining of encoder and refiner.

    Every iteration draws ``min(batch_size, len(structures))`` structures
    with a seeded generator and takes one optimizer step.

    Returns:
        Refinement loss of every iteration
    """
    if not structures:
        msg = "Pretraining needs at least one structure"
        raise DataFormatError(msg)
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(params.pretrain_parameters(), lr=cfg.lr)
    log = TrainingLog(log_path)
    tracker = progress or DummyProgressTracker("pretrain", cfg.max_iterations)
    size = min(cfg.batch_size, len(structures))
    losses: list[float] = []
    tracker.start()
    try:
        for iteration in range(1, cfg.max_iterations + 1):
            picks = rng.choice(len(structures), size=size, replace=False)
            batch = [structures[i] for i in sorted(picks)]
            loss = mmm_pretrain_step(batch, params, optimizer, cfg, rng)
            losses.append(loss)
            if iteration % cfg.log_every == 0 or iteration == 1:
                log.write({"iteration": iteration, "loss_refine": loss, "lr": optimizer.lr})
            tracker.update(iteration, {"loss_refine": loss}, optimizer.lr)
    finally:
        tracker.stop()
    logger.info(f"Pretraining finished: loss {losses[0]:.4g} -> {losses[-1]:.4g}")
    return losses


def _require_learned_variance(params: ModelParams) -> None:
    if params.config.variance_init is VarianceInitKind.FROM_RMSF:
        msg = "Uncertainty fitting needs a model whose covariances do not start from RMSF"
        raise ConfigurationError(msg)


def fit_uncertainty(
    c: Complex,
    rmsf_target: NDArray[np.float64],
    params: ModelParams,
    steps: int,
    lr: float = 1e-3,
    progress: ProgressLike | None = None,
) -> list[float]:
    """Regress ‖Σ_i‖²_F onto RMSF by updating the encoder only."""
    _require_learned_variance(params)
    optimizer = Adam(dict(params.encoder_parameters()), lr=lr)
    tracker = progress or DummyProgressTracker("fit-uncertainty", steps)
    losses: list[float] = []
    tracker.start()
    try:
        for step in range(1, steps + 1):
            loss = uncertainty_train_step(c, rmsf_target, params, optimizer)
            losses.append(loss)
            tracker.update(step, {"loss": loss}, optimizer.lr)
    finally:
        tracker.stop()
    return losses


def correlate_uncertainty(
    c: Complex,
    rmsf: NDArray[np.float64],
    params: ModelParams,
    cutoff: float | None = None,
) -> UncertaintyReport:
    """Compare learned covariance magnitudes with RMSF, split by interface.

    Raises:
        MetricError: If the Pearson correlation is undefined (e.g. constant RMSF)
        ConfigurationError: If the model initializes covariances from RMSF
    """
    _require_learned_variance(params)
    target = np.asarray(rmsf, dtype=np.float64)
    with no_grad():
        sq = covariance_sq_norms(c, params).values
    if cutoff is None:
        cutoff = params.config.interface_cutoff
    interface = interface_residues(c, cutoff)
    at = np.array([i in interface for i in range(len(c))])

    def _mean(x: NDArray[np.float64], sel: NDArray[np.bool_]) -> float:
        return float(x[sel].mean()) if sel.any() else math.nan

    return UncertaintyReport(
        interface_mean_sq_norm=_mean(sq, at),
        non_interface_mean_sq_norm=_mean(sq, ~at),
        interface_mean_rmsf=_mean(target, at),
        non_interface_mean_rmsf=_mean(target, ~at),
        pearson=pearson(sq, target),
        n_interface=int(at.sum()),
        n_non_interface=int((~at).sum()),
        per_residue=[
            (c.residues[i].label, float(sq[i]), float(target[i])) for i in range(len(c))
        ],
    )


def model_summary(params: ModelParams) -> dict[str, int]:
    """Parameter counts per group, for logging."""
    return {
        "encoder": sum(t.size for _, t in params.encoder_parameters()),
        "refiner": sum(t.size for _, t in params.refiner_parameters()),
        "head": sum(t.size for _, t in params.head_parameters()),
        "node_width": params.config.node_width,
    }
