# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for structure module."""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from ddg_refiner.autograd import Tensor
from ddg_refiner.exceptions import StructureError
from ddg_refiner.geometry import random_rigid_motion
from ddg_refiner.models import AA_INDEX, Complex
from ddg_refiner.structure import (
    FIXED_FEATURES,
    HIDDEN_TYPE,
    N_TYPES,
    build_edges,
    edges_from_ca,
    fixed_features,
    initial_features,
    interface_residues,
)
from ddg_refiner.synthetic import helix_pair

from .conftest import ComplexFactory


def _moved(c: Complex, seed: int) -> Complex:
    q, g = random_rigid_motion(seed)
    return c.with_coords(q.apply(c.coords, g))


class TestBuildEdges:
    """Tests for build_edges function."""

    def test_two_residues_one_cross_edge(self, make_complex: ComplexFactory) -> None:
        """Test that two residues with k = 1 share one undirected edge."""
        c = make_complex({"A": [(0.0, 0.0, 0.0)], "B": [(5.0, 0.0, 0.0)]})
        edges = build_edges(c, k=1)
        assert edges.cross_lr == ((0, 1), (1, 0))
        assert edges.internal_l == ()
        assert edges.internal_r == ()

    def test_collinear_chain_degrees(self) -> None:
        """Test degrees 1, 2, 2, 1 along an evenly spaced line with k = 1."""
        ca = np.array([[float(i), 0.0, 0.0] for i in range(4)])
        edges = edges_from_ca(ca, np.zeros(4, dtype=np.int64), k=1)
        degree = Counter(i for i, _ in edges.all_edges())
        assert [degree[i] for i in range(4)] == [1, 2, 2, 1]

    def test_edges_are_symmetric_and_loop_free(self, helix_complex: Complex) -> None:
        """Test that every edge appears in both directions and none is a self loop."""
        pairs = {tuple(e) for e in build_edges(helix_complex, k=4).all_edges()}
        assert all((j, i) in pairs for i, j in pairs)
        assert all(i != j for i, j in pairs)

    def test_every_residue_has_k_neighbours(self, helix_complex: Complex) -> None:
        """Test that symmetrization only adds edges."""
        degree = Counter(i for i, _ in build_edges(helix_complex, k=4).all_edges())
        assert min(degree[i] for i in range(len(helix_complex))) >= 4

    def test_partition_by_group(self, helix_complex: Complex) -> None:
        """Test that the three lists partition edges by partner membership."""
        edges = build_edges(helix_complex, k=6)
        groups = helix_complex.group_indices
        assert all(groups[i] == groups[j] == 0 for i, j in edges.internal_l)
        assert all(groups[i] == groups[j] == 1 for i, j in edges.internal_r)
        assert all(groups[i] != groups[j] for i, j in edges.cross_lr)
        assert len(edges) == len(edges.all_edges())

    def test_k_larger_than_complex(self, make_complex: ComplexFactory) -> None:
        """Test that k beyond n − 1 links every pair."""
        c = make_complex(
            {"A": [(0.0, 0.0, 0.0), (3.8, 0.0, 0.0)], "B": [(0.0, 6.0, 0.0)]}
        )
        assert len(build_edges(c, k=10)) == 6

    def test_invariant_under_rigid_motion(self, helix_complex: Complex) -> None:
        """Test that a rigid motion leaves the edge set unchanged."""
        base = build_edges(helix_complex, k=8)
        for seed in range(10):
            assert build_edges(_moved(helix_complex, seed), k=8) == base

    def test_too_few_residues(self) -> None:
        """Test that a single residue cannot form a graph."""
        with pytest.raises(StructureError, match="at least 2"):
            edges_from_ca(np.zeros((1, 3)), np.zeros(1, dtype=np.int64), k=1)


class TestInterfaceResidues:
    """Tests for interface_residues function."""

    def test_far_apart_partners(self, make_complex: ComplexFactory) -> None:
        """Test that partners 100 Å apart have no interface."""
        c = make_complex({"A": [(0.0, 0.0, 0.0)], "B": [(100.0, 0.0, 0.0)]})
        assert interface_residues(c) == set()

    def test_close_pair(self, make_complex: ComplexFactory) -> None:
        """Test that two residues 5 Å apart are both interface residues."""
        c = make_complex({"A": [(0.0, 0.0, 0.0)], "B": [(5.0, 0.0, 0.0)]})
        assert interface_residues(c, 8.0) == {0, 1}

    def test_matches_brute_force(self) -> None:
        """Test against an all-pairs loop on 50 random complexes."""
        rng = np.random.default_rng(0)
        for _ in range(50):
            c = helix_pair(rng, len_ligand=10, len_receptor=10)
            groups = c.group_indices
            expected = {
                i
                for i in range(len(c))
                for j in range(len(c))
                if groups[i] != groups[j]
                and np.linalg.norm(c.ca[i] - c.ca[j]) <= 8.0
            }
            assert interface_residues(c, 8.0) == expected


class TestFeatures:
    """Tests for fixed_features and initial_features."""

    def test_one_hot_layout(self) -> None:
        """Test type, group and mask columns."""
        aa = np.array([AA_INDEX["A"], AA_INDEX["W"]])
        out = fixed_features(aa, np.array([0, 1]), masked={1})
        assert out.shape == (2, FIXED_FEATURES)
        assert out[0, AA_INDEX["A"]] == 1.0
        assert out[0, N_TYPES] == 1.0
        assert out[0, N_TYPES + 2] == 0.0
        assert out[1, AA_INDEX["W"]] == 1.0
        assert out[1, N_TYPES + 1] == 1.0
        assert out[1, N_TYPES + 2] == 1.0
        assert out.sum() == 5.0

    def test_hidden_types(self) -> None:
        """Test that hiding zeroes the type one-hot of masked residues only."""
        aa = np.array([AA_INDEX["A"], AA_INDEX["W"]])
        out = fixed_features(aa, np.array([0, 1]), masked={1}, hide_types=True)
        assert out[1, :N_TYPES].sum() == 0.0
        assert out[0, AA_INDEX["A"]] == 1.0

    def test_embedding_rows(self, helix_complex: Complex) -> None:
        """Test that learned columns come from the type embedding."""
        table = Tensor(np.arange(21.0 * 2).reshape(21, 2))
        h = initial_features(helix_complex, {0}, table, hide_types=True).values
        assert h.shape == (len(helix_complex), FIXED_FEATURES + 2)
        np.testing.assert_array_equal(h[0, FIXED_FEATURES:], table.values[HIDDEN_TYPE])
        k = helix_complex.aa_indices[1]
        np.testing.assert_array_equal(h[1, FIXED_FEATURES:], table.values[k])

    def test_type_override(self, helix_complex: Complex) -> None:
        """Test that substituted types change only the substituted row."""
        table = Tensor(np.random.default_rng(0).standard_normal((21, 3)))
        types = helix_complex.aa_indices.copy()
        types[2] = (types[2] + 1) % N_TYPES
        base = initial_features(helix_complex, (), table).values
        swapped = initial_features(helix_complex, (), table, aa_indices=types).values
        changed = np.flatnonzero(np.any(base != swapped, axis=1))
        assert changed.tolist() == [2]

    def test_invariant_under_rigid_motion(self, helix_complex: Complex) -> None:
        """Test that features do not depend on coordinates."""
        table = Tensor(np.ones((21, 1)))
        base = initial_features(helix_complex, {3}, table).values
        moved = initial_features(_moved(helix_complex, 1), {3}, table).values
        np.testing.assert_array_equal(base, moved)
