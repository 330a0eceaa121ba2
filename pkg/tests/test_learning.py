# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Desk-scale learning runs on synthetic complexes.

These take minutes rather than seconds and are marked slow.
"""

from __future__ import annotations

import numpy as np
import pytest

from ddg_refiner.autograd import no_grad
from ddg_refiner.config import ModelConfig, TrainConfig
from ddg_refiner.data_io import complex_key
from ddg_refiner.metrics import spearman
from ddg_refiner.mmm import corrupt_interpolate, masked_ca_rmsd, random_mask_region
from ddg_refiner.pipeline import ModelParams, TrainSample, refine
from ddg_refiner.synthetic import helix_pair, make_benchmark, rmsf_profile
from ddg_refiner.trainer import (
    Trainer,
    build_samples,
    correlate_uncertainty,
    fit_uncertainty,
    predict_records,
    pretrain,
)

pytestmark = pytest.mark.slow

DESK_MODEL = ModelConfig(
    node_width=32, pooled_width=16, encoder_layers=2, refiner_layers=2, knn_k=6
)


def _benchmark_samples(n_complexes: int, seed: int) -> list[TrainSample]:
    bench = make_benchmark(n_complexes=n_complexes, seed=seed)
    complexes = {complex_key(e): bench.complexes[e.pdb_id] for e in bench.entries}
    return build_samples(bench.entries, complexes)


class TestJointTraining:
    """Tests for joint refinement and ΔΔG training."""

    def test_overfits_one_sample(self) -> None:
        """Test that 300 steps on one sample cut the loss by 90%."""
        samples = _benchmark_samples(1, seed=2)
        cfg = TrainConfig(
            k_recycles=1, l=2, r=2, lr=3e-3, batch_size=1, max_iterations=300, val_every=1000
        )
        result = Trainer(ModelParams.init(DESK_MODEL), cfg, samples).fit()
        assert result.final_loss <= 0.1 * result.initial_loss

    def test_desk_benchmark(self) -> None:
        """Test ranking quality and loss reduction on twenty complexes."""
        samples = _benchmark_samples(20, seed=0)
        cfg = TrainConfig(
            k_recycles=1, l=3, r=3, lr=2e-3, batch_size=4, max_iterations=2000, val_every=10_000
        )
        params = ModelParams.init(DESK_MODEL)
        result = Trainer(params, cfg, samples).fit()
        initial = float(np.mean([h["loss_total"] for h in result.history[:20]]))
        final = float(np.mean([h["loss_total"] for h in result.history[-20:]]))
        assert final <= 0.1 * initial
        records = predict_records(samples, params, cfg)
        assert spearman([r.y_pred for r in records], [r.y_true for r in records]) >= 0.9


class TestMaskedPretraining:
    """Tests for masked-refinement pretraining."""

    def test_loss_falls(self) -> None:
        """Test that 500 steps on five complexes cut the refinement loss to a quarter."""
        rng = np.random.default_rng(0)
        structures = [helix_pair(rng) for _ in range(5)]
        cfg = TrainConfig(k_recycles=1, l=3, r=3, lr=3e-3, batch_size=5, max_iterations=500)
        losses = pretrain(structures, ModelParams.init(DESK_MODEL), cfg)
        assert np.mean(losses[-25:]) < 0.25 * np.mean(losses[:5])

    def test_refined_windows_beat_interpolation(self) -> None:
        """Test that refinement improves on the interpolated start of unseen windows."""
        rng = np.random.default_rng(1)
        structures = [helix_pair(rng) for _ in range(5)]
        cfg = TrainConfig(k_recycles=1, l=3, r=3, lr=3e-3, batch_size=5, max_iterations=500)
        params = ModelParams.init(DESK_MODEL)
        pretrain(structures, params, cfg)

        held_out = np.random.default_rng(99)
        start_err, refined_err = [], []
        with no_grad():
            for c in structures:
                region, _ = random_mask_region(c, held_out, cfg.l, cfg.r)
                start = corrupt_interpolate(c.coords, region)
                refined = refine(c, start, region, c.aa_indices, params, cfg.k_recycles)
                start_err.append(masked_ca_rmsd(start, c.coords, region))
                refined_err.append(masked_ca_rmsd(refined.values, c.coords, region))
        assert np.mean(refined_err) < np.mean(start_err)


class TestUncertaintyFit:
    """Tests for fitting covariance magnitudes to RMSF."""

    def test_constant_target(self) -> None:
        """Test that a constant target is reached within 500 steps."""
        c = helix_pair(np.random.default_rng(4), len_ligand=14, len_receptor=14)
        losses = fit_uncertainty(c, np.full(len(c), 2.0), ModelParams.init(DESK_MODEL), 500, lr=1e-2)
        assert losses[-1] < 0.1 * losses[0]

    def test_profile_target(self) -> None:
        """Test that a fitted profile correlates with its target."""
        c = helix_pair(np.random.default_rng(5), len_ligand=14, len_receptor=14)
        target = rmsf_profile(c)
        params = ModelParams.init(DESK_MODEL)
        losses = fit_uncertainty(c, target, params, 500, lr=1e-2)
        assert losses[-1] < 0.1 * losses[0]
        assert correlate_uncertainty(c, target, params).pearson >= 0.9
