# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Residue graph construction, interface detection and node features."""

from __future__ import annotations

from collections.abc import Collection
import logging

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from .autograd import Tensor, concat, take
from .exceptions import StructureError
from .models import AMINO_ACIDS, Complex, EdgeSet

logger = logging.getLogger(__name__)

DEFAULT_K = 8
DEFAULT_INTERFACE_CUTOFF = 8.0
N_TYPES = len(AMINO_ACIDS)
# Row of the type embedding used when a residue's identity is hidden.
HIDDEN_TYPE = N_TYPES
FIXED_FEATURES = N_TYPES + 2 + 1

# Distances are compared after rounding so that rigid motions, which move
# coordinates by round-off, cannot reorder tied neighbours.
_DISTANCE_DECIMALS = 9


def knn_pairs(ca: NDArray[np.float64], k: int) -> set[tuple[int, int]]:
    """Symmetrized k-nearest-neighbour pairs on CA positions.

    Each residue links to its ``k`` nearest other residues (fewer if the
    complex is smaller); ties go to the lower residue index. The result
    holds both directions of every link.
    """
    n = len(ca)
    dist = np.round(cdist(ca, ca), _DISTANCE_DECIMALS)
    np.fill_diagonal(dist, np.inf)
    k_eff = min(k, n - 1)
    pairs: set[tuple[int, int]] = set()
    index = np.arange(n)
    for i in range(n):
        # lexsort: last key is primary, so distance first then index.
        order = np.lexsort((index, dist[i]))[:k_eff]
        for j in order:
            pairs.add((i, int(j)))
            pairs.add((int(j), i))
    return pairs


def build_edges(c: Complex, k: int = DEFAULT_K) -> EdgeSet:
    """Build the symmetrized kNN edge set of a complex.

    Args:
        c: Complex with CA atoms on every residue
        k: Neighbours per residue before symmetrization

    Returns:
        Edges partitioned into ligand-internal, receptor-internal and
        cross-partner lists

    Raises:
        StructureError: If the complex has fewer than two residues
    """
    return edges_from_ca(c.ca, c.group_indices, k)


def edges_from_ca(
    ca: NDArray[np.float64], groups: NDArray[np.int64], k: int = DEFAULT_K
) -> EdgeSet:
    """``build_edges`` on raw CA positions and group labels."""
    if len(ca) < 2:
        msg = f"Need at least 2 residues to build edges, got {len(ca)}"
        raise StructureError(msg)
    if k < 1:
        msg = f"k must be positive, got {k}"
        raise StructureError(msg)
    internal_l: list[tuple[int, int]] = []
    internal_r: list[tuple[int, int]] = []
    cross_lr: list[tuple[int, int]] = []
    for i, j in sorted(knn_pairs(ca, k)):
        if groups[i] != groups[j]:
            cross_lr.append((i, j))
        elif groups[i] == 0:
            internal_l.append((i, j))
        else:
            internal_r.append((i, j))
    return EdgeSet(tuple(internal_l), tuple(internal_r), tuple(cross_lr))


def interface_residues(
    c: Complex, cutoff: float = DEFAULT_INTERFACE_CUTOFF
) -> set[int]:
    """Residues whose CA lies within ``cutoff`` Å of a CA of the other partner."""
    groups = c.group_indices
    lig = np.flatnonzero(groups == 0)
    rec = np.flatnonzero(groups == 1)
    close = cdist(c.ca[lig], c.ca[rec]) <= cutoff
    found = {int(i) for i in lig[close.any(axis=1)]}
    found.update(int(j) for j in rec[close.any(axis=0)])
    return found


def fixed_features(
    aa_indices: NDArray[np.int64],
    group_indices: NDArray[np.int64],
    masked: Collection[int],
    hide_types: bool = False,
) -> NDArray[np.float64]:
    """Non-learned part of the node features, shape (n, 23).

    Columns: one-hot residue type (20), one-hot partner (2), mask flag (1).
    With ``hide_types`` the type one-hot of masked residues is zeroed.
    """
    n = len(aa_indices)
    out = np.zeros((n, FIXED_FEATURES))
    out[np.arange(n), aa_indices] = 1.0
    out[np.arange(n), N_TYPES + group_indices] = 1.0
    mask_idx = np.fromiter(masked, dtype=np.int64) if masked else np.zeros(0, np.int64)
    out[mask_idx, N_TYPES + 2] = 1.0
    if hide_types and len(mask_idx):
        out[mask_idx, :N_TYPES] = 0.0
    return out


def initial_features(
    c: Complex,
    masked: Collection[int],
    type_embedding: Tensor,
    hide_types: bool = False,
    aa_indices: NDArray[np.int64] | None = None,
) -> Tensor:
    """Roto-translation invariant starting features ``h⁰``.

    The fixed columns of ``fixed_features`` are followed by the row of
    ``type_embedding`` (shape (21, node_width − 23)) for each residue's
    type; row 20 stands in for hidden masked residues.

    Args:
        c: Complex; only residue types and groups are read
        masked: Indices of masked residues
        type_embedding: Learned embedding table
        hide_types: Hide the identity of masked residues
        aa_indices: Override of the residue types (mutant substitution)
    """
    types = c.aa_indices if aa_indices is None else np.asarray(aa_indices)
    fixed = fixed_features(types, c.group_indices, masked, hide_types)
    rows = types.copy()
    if hide_types and masked:
        rows[list(masked)] = HIDDEN_TYPE
    return concat([Tensor(fixed), take(type_embedding, rows, axis=0)], axis=1)
