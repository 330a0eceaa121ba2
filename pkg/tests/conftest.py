# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Pytest configuration and fixtures."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from pathlib import Path
import sys

import numpy as np
import pytest

# Add src directory to Python path so tests can import the package
src_path = Path(__file__).parent.parent / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from ddg_refiner.config import ModelConfig, TrainConfig  # noqa: E402
from ddg_refiner.models import Complex, Group, Residue  # noqa: E402
from ddg_refiner.synthetic import helix_pair  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# Backbone offsets from CA used by ``make_complex``.
_OFFSETS = {
    "N": np.array([-1.2, 0.5, 0.0]),
    "C": np.array([1.2, 0.5, 0.0]),
    "O": np.array([1.5, 1.5, 0.0]),
    "CB": np.array([0.0, -1.5, 0.0]),
}

ComplexFactory = Callable[..., Complex]


def _residue(chain_id: str, number: int, aa: str, ca: Sequence[float]) -> Residue:
    center = np.asarray(ca, dtype=np.float64)
    atoms = {"CA": center.copy()}
    for name, offset in _OFFSETS.items():
        if name == "CB" and aa == "G":
            continue
        atoms[name] = center + offset
    return Residue(chain_id, number, aa, atoms)


@pytest.fixture
def fixtures_dir() -> Path:
    """Directory with static test inputs."""
    return FIXTURES


@pytest.fixture
def make_complex() -> ComplexFactory:
    """Factory building a complex from per-chain CA traces.

    ``make_complex({"A": ca_list, "B": ca_list}, sequences={"A": "ALA..."})``
    puts chain A in the ligand group and every other chain in the receptor.
    """

    def build(
        chains: dict[str, Sequence[Sequence[float]]],
        sequences: dict[str, str] | None = None,
        ligand: Sequence[str] = ("A",),
    ) -> Complex:
        residues = []
        for chain_id, trace in chains.items():
            seq = (sequences or {}).get(chain_id, "A" * len(trace))
            residues.extend(
                _residue(chain_id, k + 1, seq[k], ca) for k, ca in enumerate(trace)
            )
        groups = {
            chain_id: Group.LIGAND if chain_id in ligand else Group.RECEPTOR
            for chain_id in chains
        }
        return Complex(tuple(residues), groups)

    return build


@pytest.fixture
def helix_complex() -> Complex:
    """A 14 + 14 residue two-helix complex."""
    return helix_pair(np.random.default_rng(7), len_ligand=14, len_receptor=14)


@pytest.fixture
def small_complex() -> Complex:
    """An 8 + 8 residue two-helix complex for gradient-heavy tests."""
    return helix_pair(np.random.default_rng(3), len_ligand=8, len_receptor=8)


@pytest.fixture
def tiny_model() -> ModelConfig:
    """Smallest architecture the encoder accepts."""
    return ModelConfig(
        node_width=24,
        pooled_width=16,
        encoder_layers=1,
        refiner_layers=1,
        knn_k=4,
    )


@pytest.fixture
def fast_train() -> TrainConfig:
    """One recycle, narrow mask windows and tiny batches."""
    return TrainConfig(
        k_recycles=1,
        l=2,
        r=2,
        lr=1e-3,
        batch_size=2,
        max_iterations=3,
        val_every=2,
        log_every=1,
    )
