# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for trainer module."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from ddg_refiner.checkpoint import read_checkpoint, save_checkpoint
from ddg_refiner.config import ModelConfig, TrainConfig
from ddg_refiner.data_io import complex_key, split_folds
from ddg_refiner.exceptions import ConfigurationError, DataFormatError, MetricError
from ddg_refiner.metrics import EvalReport
from ddg_refiner.models import Complex, VarianceInitKind
from ddg_refiner.pipeline import ModelParams, TrainSample
from ddg_refiner.synthetic import SyntheticBenchmark, make_benchmark, rmsf_profile
from ddg_refiner.trainer import (
    Trainer,
    TrainingLog,
    build_samples,
    correlate_uncertainty,
    fit_uncertainty,
    load_model,
    load_pretrained,
    model_summary,
    predict_records,
    pretrain,
    split_for_fold,
    validation_score,
)


@pytest.fixture
def bench() -> SyntheticBenchmark:
    """Four synthetic complexes with one labeled mutation each."""
    return make_benchmark(n_complexes=4, seed=11)


@pytest.fixture
def samples(bench: SyntheticBenchmark) -> list[TrainSample]:
    """Training samples for every benchmark entry."""
    complexes = {complex_key(e): bench.complexes[e.pdb_id] for e in bench.entries}
    return build_samples(bench.entries, complexes)


def _report(**metrics: float) -> EvalReport:
    return EvalReport(metrics=metrics, n_records=10, per_structure=None)


class TestTrainingLog:
    """Tests for TrainingLog class."""

    def test_appends_json_lines(self, tmp_path: Path) -> None:
        """Test that records become one JSON object per line."""
        path = tmp_path / "logs" / "train.jsonl"
        log = TrainingLog(path)
        log.write({"iteration": 1, "loss_total": 0.5})
        log.write({"iteration": 2, "loss_total": 0.25})
        lines = path.read_text().splitlines()
        assert [json.loads(line)["iteration"] for line in lines] == [1, 2]

    def test_truncates_previous_run(self, tmp_path: Path) -> None:
        """Test that a new log starts empty."""
        path = tmp_path / "train.jsonl"
        path.write_text("stale\n")
        TrainingLog(path)
        assert path.read_text() == ""

    def test_without_path(self) -> None:
        """Test that a log without a path ignores writes."""
        TrainingLog(None).write({"iteration": 1})


class TestSplitForFold:
    """Tests for split_for_fold function."""

    def test_disjoint_structures(self) -> None:
        """Test that no structure appears in two splits."""
        bench = make_benchmark(n_complexes=9, mutations_per_complex=2, seed=1)
        folds = split_folds(bench.entries, n_folds=3, seed=0)
        split = split_for_fold(bench.entries, folds, fold=1, val_fraction=0.2)
        train = {e.pdb_id for e in split.train}
        val = {e.pdb_id for e in split.val}
        test = {e.pdb_id for e in split.test}
        assert not train & val and not train & test and not val & test
        assert val
        assert test == set(folds.structures_in(1))
        assert len(split.train) + len(split.val) + len(split.test) == len(bench.entries)

    def test_fold_out_of_range(self, bench: SyntheticBenchmark) -> None:
        """Test that a fold index past n_folds is rejected."""
        folds = split_folds(bench.entries, n_folds=2)
        with pytest.raises(ValueError, match="out of range"):
            split_for_fold(bench.entries, folds, fold=2)


class TestBuildSamples:
    """Tests for build_samples function."""

    def test_missing_rmsf_table(self, bench: SyntheticBenchmark) -> None:
        """Test that a structure without RMSF values is reported."""
        complexes = {complex_key(e): bench.complexes[e.pdb_id] for e in bench.entries}
        with pytest.raises(DataFormatError, match="No RMSF table"):
            build_samples(bench.entries, complexes, rmsf={})

    def test_rmsf_in_complex_order(self, bench: SyntheticBenchmark) -> None:
        """Test that per-residue tables are laid out in residue order."""
        complexes = {complex_key(e): bench.complexes[e.pdb_id] for e in bench.entries}
        tables = {
            pdb: {
                (r.chain_id, r.seq_number): float(v)
                for r, v in zip(c.residues, bench.rmsf[pdb], strict=True)
            }
            for pdb, c in bench.complexes.items()
        }
        out = build_samples(bench.entries, complexes, rmsf=tables)
        for sample in out:
            assert sample.rmsf is not None
            np.testing.assert_array_equal(sample.rmsf, bench.rmsf[sample.entry.pdb_id])


class TestPredictRecords:
    """Tests for predict_records function."""

    def test_workers_keep_order(
        self, samples: list[TrainSample], tiny_model: ModelConfig, fast_train: TrainConfig
    ) -> None:
        """Test that concurrent prediction matches the sequential order."""
        params = ModelParams.init(tiny_model, seed=0)
        serial = predict_records(samples, params, fast_train, workers=1)
        threaded = predict_records(samples, params, fast_train, workers=2)
        assert [r.structure_id for r in serial] == [e.entry.pdb_id for e in samples]
        assert [r.y_pred for r in threaded] == pytest.approx([r.y_pred for r in serial])
        assert [r.y_true for r in serial] == [s.entry.ddg for s in samples]


class TestValidationScore:
    """Tests for validation_score function."""

    def test_prefers_per_structure_spearman(self) -> None:
        """Test the per-structure Spearman branch."""
        assert validation_score(
            _report(per_structure_spearman=0.75, spearman=0.1, rmse=3.0)
        ) == pytest.approx(0.25)

    def test_falls_back_to_spearman(self) -> None:
        """Test the pooled Spearman branch."""
        assert validation_score(
            _report(per_structure_spearman=math.nan, spearman=0.5, rmse=3.0)
        ) == pytest.approx(0.5)

    def test_falls_back_to_rmse(self) -> None:
        """Test the RMSE branch."""
        assert validation_score(
            _report(per_structure_spearman=math.nan, spearman=math.nan, rmse=3.0)
        ) == pytest.approx(3.0)

    def test_nothing_defined(self) -> None:
        """Test that a report without any defined metric scores infinity."""
        assert validation_score(
            _report(per_structure_spearman=math.nan, spearman=math.nan, rmse=math.nan)
        ) == math.inf


class TestTrainer:
    """Tests for Trainer class."""

    def test_history_and_log(
        self,
        tmp_path: Path,
        samples: list[TrainSample],
        tiny_model: ModelConfig,
        fast_train: TrainConfig,
    ) -> None:
        """Test one history record and one log line per iteration."""
        log_path = tmp_path / "train.jsonl"
        trainer = Trainer(
            ModelParams.init(tiny_model), fast_train, samples, log_path=log_path
        )
        result = trainer.fit()
        assert [h["iteration"] for h in result.history] == [1, 2, 3]
        assert all(math.isfinite(h["loss_total"]) for h in result.history)
        assert len(log_path.read_text().splitlines()) == 3

    def test_checkpoint_at_best_validation(
        self,
        tmp_path: Path,
        samples: list[TrainSample],
        tiny_model: ModelConfig,
        fast_train: TrainConfig,
    ) -> None:
        """Test that validation at iteration 2 keeps that checkpoint."""
        path = tmp_path / "best.json"
        trainer = Trainer(
            ModelParams.init(tiny_model),
            fast_train,
            samples[:2],
            val_samples=samples[2:],
            checkpoint_path=path,
        )
        result = trainer.fit()
        assert len(result.validations) == 1
        assert result.best_iteration == 2
        assert read_checkpoint(path).iteration == 2

    def test_checkpoint_at_end_without_validation(
        self,
        tmp_path: Path,
        samples: list[TrainSample],
        tiny_model: ModelConfig,
        fast_train: TrainConfig,
    ) -> None:
        """Test that a run without validation saves its last weights."""
        path = tmp_path / "last.json"
        Trainer(ModelParams.init(tiny_model), fast_train, samples, checkpoint_path=path).fit()
        assert read_checkpoint(path).iteration == fast_train.max_iterations

    def test_no_samples(self, tiny_model: ModelConfig, fast_train: TrainConfig) -> None:
        """Test that an empty training set is rejected."""
        with pytest.raises(DataFormatError, match="at least one sample"):
            Trainer(ModelParams.init(tiny_model), fast_train, [])

    def test_seeded_runs_repeat(
        self, samples: list[TrainSample], tiny_model: ModelConfig, fast_train: TrainConfig
    ) -> None:
        """Test that equal seeds give equal loss histories."""
        first = Trainer(ModelParams.init(tiny_model), fast_train, samples).fit()
        second = Trainer(ModelParams.init(tiny_model), fast_train, samples).fit()
        assert first.history == second.history

    def test_progress_is_driven(
        self,
        mocker,  # type: ignore[no-untyped-def]
        samples: list[TrainSample],
        tiny_model: ModelConfig,
        fast_train: TrainConfig,
    ) -> None:
        """Test that the tracker is started, updated and stopped."""
        progress = mocker.Mock()
        Trainer(ModelParams.init(tiny_model), fast_train, samples, progress=progress).fit()
        progress.start.assert_called_once()
        progress.stop.assert_called_once()
        assert progress.update.call_count == fast_train.max_iterations


class TestPretrain:
    """Tests for pretrain function."""

    def test_head_untouched(
        self, bench: SyntheticBenchmark, tiny_model: ModelConfig, fast_train: TrainConfig
    ) -> None:
        """Test one loss per iteration and a frozen ΔΔG head."""
        params = ModelParams.init(tiny_model)
        head_before = {k: t.values.copy() for k, t in params.head_parameters()}
        losses = pretrain(list(bench.complexes.values()), params, fast_train)
        assert len(losses) == fast_train.max_iterations
        assert all(math.isfinite(v) for v in losses)
        for name, tensor in params.head_parameters():
            np.testing.assert_array_equal(tensor.values, head_before[name])

    def test_no_structures(self, tiny_model: ModelConfig, fast_train: TrainConfig) -> None:
        """Test that pretraining without structures is rejected."""
        with pytest.raises(DataFormatError, match="at least one structure"):
            pretrain([], ModelParams.init(tiny_model), fast_train)


class TestLoading:
    """Tests for load_model and load_pretrained."""

    def test_load_model(
        self, tmp_path: Path, tiny_model: ModelConfig, fast_train: TrainConfig
    ) -> None:
        """Test that a saved model rebuilds with the same weights."""
        saved = ModelParams.init(tiny_model, seed=5)
        path = tmp_path / "model.json"
        save_checkpoint(path, saved.named_parameters(), tiny_model, fast_train, 3)
        loaded, train = load_model(path)
        assert train == fast_train
        for name, tensor in saved.named_parameters().items():
            np.testing.assert_array_equal(loaded.named_parameters()[name].values, tensor.values)

    def test_load_pretrained_keeps_head(
        self, tmp_path: Path, tiny_model: ModelConfig
    ) -> None:
        """Test that encoder and refiner are copied and the head is kept."""
        source = ModelParams.init(tiny_model, seed=5)
        path = tmp_path / "pre.json"
        save_checkpoint(path, source.pretrain_parameters(), tiny_model)
        target = ModelParams.init(tiny_model, seed=6)
        head_before = {k: t.values.copy() for k, t in target.head_parameters()}
        load_pretrained(path, target)
        for name, tensor in source.pretrain_parameters().items():
            np.testing.assert_array_equal(target.pretrain_parameters()[name].values, tensor.values)
        for name, tensor in target.head_parameters():
            np.testing.assert_array_equal(tensor.values, head_before[name])

    def test_load_pretrained_width_mismatch(
        self, tmp_path: Path, tiny_model: ModelConfig
    ) -> None:
        """Test that a checkpoint of another width is rejected."""
        wider = tiny_model.model_copy(update={"node_width": 32})
        path = tmp_path / "pre.json"
        save_checkpoint(path, ModelParams.init(wider).pretrain_parameters(), wider)
        with pytest.raises(DataFormatError, match="does not match"):
            load_pretrained(path, ModelParams.init(tiny_model))


class TestUncertainty:
    """Tests for fit_uncertainty and correlate_uncertainty."""

    def test_fit_updates_encoder_only(
        self, small_complex: Complex, tiny_model: ModelConfig
    ) -> None:
        """Test a falling loss with refiner and head left as they were."""
        params = ModelParams.init(tiny_model)
        frozen = {
            k: t.values.copy()
            for k, t in [*params.refiner_parameters(), *params.head_parameters()]
        }
        losses = fit_uncertainty(small_complex, rmsf_profile(small_complex), params, 30, lr=1e-2)
        assert len(losses) == 30
        assert losses[-1] < losses[0]
        for name, tensor in [*params.refiner_parameters(), *params.head_parameters()]:
            np.testing.assert_array_equal(tensor.values, frozen[name])

    def test_report_partitions_residues(
        self, helix_complex: Complex, tiny_model: ModelConfig
    ) -> None:
        """Test that interface and non-interface counts cover the complex."""
        report = correlate_uncertainty(
            helix_complex, rmsf_profile(helix_complex), ModelParams.init(tiny_model)
        )
        assert report.n_interface + report.n_non_interface == len(helix_complex)
        assert report.n_interface > 0
        assert len(report.per_residue) == len(helix_complex)
        assert -1.0 <= report.pearson <= 1.0

    def test_zero_cutoff_is_respected(
        self, helix_complex: Complex, tiny_model: ModelConfig
    ) -> None:
        """Test that an explicit zero cutoff leaves no interface residues."""
        report = correlate_uncertainty(
            helix_complex,
            rmsf_profile(helix_complex),
            ModelParams.init(tiny_model),
            cutoff=0.0,
        )
        assert report.n_interface == 0
        assert report.n_non_interface == len(helix_complex)
        assert math.isnan(report.interface_mean_sq_norm)

    def test_constant_rmsf(self, helix_complex: Complex, tiny_model: ModelConfig) -> None:
        """Test that a constant RMSF profile has no defined correlation."""
        with pytest.raises(MetricError):
            correlate_uncertainty(
                helix_complex, np.ones(len(helix_complex)), ModelParams.init(tiny_model)
            )

    def test_rmsf_initialized_model(
        self, helix_complex: Complex, tiny_model: ModelConfig
    ) -> None:
        """Test that a model seeded from RMSF cannot be fitted to RMSF."""
        config = tiny_model.model_copy(update={"variance_init": VarianceInitKind.FROM_RMSF})
        with pytest.raises(ConfigurationError, match="RMSF"):
            fit_uncertainty(
                helix_complex, rmsf_profile(helix_complex), ModelParams.init(config), 1
            )


class TestModelSummary:
    """Tests for model_summary function."""

    def test_counts_add_up(self, tiny_model: ModelConfig) -> None:
        """Test that group counts sum to the total parameter count."""
        params = ModelParams.init(tiny_model)
        summary = model_summary(params)
        total = sum(t.size for t in params.named_parameters().values())
        assert summary["encoder"] + summary["refiner"] + summary["head"] == total
        assert summary["node_width"] == tiny_model.node_width
