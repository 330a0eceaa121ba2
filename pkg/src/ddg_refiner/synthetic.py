# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Synthetic two-helix complexes with analytic ΔΔG labels and RMSF profiles.

Used for fixtures, desk-scale learning runs and the ``make-synthetic``
command. Every generator is deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from .models import (
    AMINO_ACIDS,
    BACKBONE_ATOMS,
    Complex,
    DatasetEntry,
    Group,
    Mutation,
    Residue,
)

logger = logging.getLogger(__name__)

HELIX_RISE = 1.5
HELIX_TWIST_DEG = 100.0
HELIX_RADIUS = 2.3
MAX_RESIDUES = 40
CONTACT_CUTOFF = 10.0
LABEL_SCALE = 0.3
# With 14+ residues a default 5+5 mask window around a site two or more
# residues from either terminus always leaves anchors to interpolate from.
MIN_HELIX = 14
MAX_HELIX = 20

# Atom offsets in the local (radial, tangential, axial) frame of a CA.
_LOCAL_OFFSETS = {
    "N": np.array([-0.3, -1.2, -0.6]),
    "C": np.array([-0.3, 1.2, 0.5]),
    "O": np.array([0.6, 1.8, 1.2]),
    "CB": np.array([1.4, 0.0, -0.6]),
}

KYTE_DOOLITTLE = {
    "A": 1.8, "R": -4.5, "N": -3.5, "D": -3.5, "C": 2.5,
    "Q": -3.5, "E": -3.5, "G": -0.4, "H": -3.2, "I": 4.5,
    "L": 3.8, "K": -3.9, "M": 1.9, "F": 2.8, "P": -1.6,
    "S": -0.8, "T": -0.7, "W": -0.9, "Y": -1.3, "V": 4.2,
}  # fmt: skip


def helix_backbone(
    length: int,
    rotation: NDArray[np.float64] | None = None,
    shift: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    """Ideal α-helix backbone as an (length, 5, 3) array (CB always placed)."""
    i = np.arange(length)
    theta = np.deg2rad(HELIX_TWIST_DEG) * i
    radial = np.stack([np.cos(theta), np.sin(theta), np.zeros(length)], axis=1)
    tangential = np.stack([-np.sin(theta), np.cos(theta), np.zeros(length)], axis=1)
    axial = np.tile([0.0, 0.0, 1.0], (length, 1))
    ca = HELIX_RADIUS * radial + HELIX_RISE * i[:, None] * axial
    out = np.empty((length, len(BACKBONE_ATOMS), 3))
    for a, name in enumerate(BACKBONE_ATOMS):
        if name == "CA":
            out[:, a] = ca
            continue
        dr, dt, dz = _LOCAL_OFFSETS[name]
        out[:, a] = ca + dr * radial + dt * tangential + dz * axial
    if rotation is not None:
        out = out @ rotation.T
    if shift is not None:
        out = out + shift
    return out


def _residues(
    chain_id: str, sequence: str, coords: NDArray[np.float64], start: int = 1
) -> list[Residue]:
    residues = []
    for k, aa in enumerate(sequence):
        atoms = {
            name: coords[k, a].copy()
            for a, name in enumerate(BACKBONE_ATOMS)
            if not (name == "CB" and aa == "G")
        }
        residues.append(Residue(chain_id, start + k, aa, atoms))
    return residues


def _rotation_z(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def helix_pair(
    rng: np.random.Generator,
    len_ligand: int | None = None,
    len_receptor: int | None = None,
    separation: float | None = None,
) -> Complex:
    """Two parallel helices, chain A (ligand) and chain B (receptor)."""
    len_l = len_ligand or int(rng.integers(MIN_HELIX, MAX_HELIX + 1))
    len_r = len_receptor or int(rng.integers(MIN_HELIX, MAX_HELIX + 1))
    if len_l + len_r > MAX_RESIDUES:
        msg = f"Synthetic complexes hold at most {MAX_RESIDUES} residues"
        raise ValueError(msg)
    gap = separation or float(rng.uniform(8.0, 10.0))
    coords_l = helix_backbone(len_l, _rotation_z(rng.uniform(0, 2 * np.pi)))
    coords_r = helix_backbone(
        len_r,
        _rotation_z(rng.uniform(0, 2 * np.pi)),
        np.array([gap, 0.0, rng.uniform(-3.0, 3.0)]),
    )
    seq_l = "".join(rng.choice(list(AMINO_ACIDS), size=len_l))
    seq_r = "".join(rng.choice(list(AMINO_ACIDS), size=len_r))
    residues = _residues("A", seq_l, coords_l) + _residues("B", seq_r, coords_r)
    return Complex(tuple(residues), {"A": Group.LIGAND, "B": Group.RECEPTOR})


def interface_contacts(c: Complex, index: int, cutoff: float = CONTACT_CUTOFF) -> int:
    """Number of opposite-partner CAs within ``cutoff`` Å of a residue's CA."""
    other = np.flatnonzero(c.group_indices != c.group_indices[index])
    d = cdist(c.ca[index : index + 1], c.ca[other])[0]
    return int(np.sum(d <= cutoff))


def analytic_ddg(c: Complex, mutations: tuple[Mutation, ...]) -> float:
    """Label: Σ contacts × (hydrophobicity lost) × scale, over all mutations."""
    total = 0.0
    for m in mutations:
        index = c.residue_index(m.chain_id, m.seq_number, m.insertion_code)
        if index is None:
            msg = f"Mutation {m} does not match the synthetic complex"
            raise ValueError(msg)
        lost = (KYTE_DOOLITTLE[m.wt_aa] - KYTE_DOOLITTLE[m.mt_aa]) / 4.5
        total += LABEL_SCALE * interface_contacts(c, index) * lost
    return total


def rmsf_profile(c: Complex) -> NDArray[np.float64]:
    """Smooth RMSF: low near the partner, rising towards chain termini."""
    groups = c.group_indices
    dist = cdist(c.ca, c.ca)
    out = np.empty(len(c))
    for chain in c.chain_order.values():
        n = len(chain)
        for p, i in enumerate(chain):
            nearest = dist[i, groups != groups[i]].min()
            terminal = np.exp(-min(p, n - 1 - p) / 2.0)
            out[i] = 0.5 + 1.5 * (1.0 - np.exp(-nearest / 8.0)) + terminal
    return out


def random_mutation(c: Complex, rng: np.random.Generator, margin: int = 2) -> Mutation:
    """Point mutation of a residue away from chain termini."""
    chain_id = str(rng.choice(sorted(c.chain_order)))
    chain = c.chain_order[chain_id]
    pos = int(rng.integers(margin, len(chain) - margin))
    residue = c.residues[chain[pos]]
    choices = [aa for aa in AMINO_ACIDS if aa != residue.aa]
    return Mutation(residue.aa, chain_id, residue.seq_number, str(rng.choice(choices)))


@dataclass
class SyntheticBenchmark:
    """Complexes keyed by structure id, labeled entries and RMSF profiles."""

    complexes: dict[str, Complex] = field(default_factory=dict)
    entries: list[DatasetEntry] = field(default_factory=list)
    rmsf: dict[str, NDArray[np.float64]] = field(default_factory=dict)


def make_benchmark(
    n_complexes: int = 20, mutations_per_complex: int = 1, seed: int = 0
) -> SyntheticBenchmark:
    """Generate a labeled benchmark of two-helix complexes."""
    rng = np.random.default_rng(seed)
    bench = SyntheticBenchmark()
    for k in range(n_complexes):
        pdb_id = f"syn{k:03d}"
        c = helix_pair(rng)
        bench.complexes[pdb_id] = c
        bench.rmsf[pdb_id] = rmsf_profile(c)
        for _ in range(mutations_per_complex):
            muts = (random_mutation(c, rng),)
            bench.entries.append(
                DatasetEntry(pdb_id, ("A",), ("B",), muts, analytic_ddg(c, muts))
            )
    logger.info(
        f"Generated {n_complexes} synthetic complexes with {len(bench.entries)} entries"
    )
    return bench
