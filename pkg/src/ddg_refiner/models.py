# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Data models for ddg-refiner."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .exceptions import MutationError, StructureError

# Canonical one-letter alphabet; the position of a letter is its type index.
AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}
THREE_TO_ONE = {
    "ALA": "A",
    "CYS": "C",
    "ASP": "D",
    "GLU": "E",
    "PHE": "F",
    "GLY": "G",
    "HIS": "H",
    "ILE": "I",
    "LYS": "K",
    "LEU": "L",
    "MET": "M",
    "ASN": "N",
    "PRO": "P",
    "GLN": "Q",
    "ARG": "R",
    "SER": "S",
    "THR": "T",
    "VAL": "V",
    "TRP": "W",
    "TYR": "Y",
}
ONE_TO_THREE = {one: three for three, one in THREE_TO_ONE.items()}

# Atom channel order of every (n, 5, 3) coordinate array.
BACKBONE_ATOMS = ("N", "CA", "C", "O", "CB")
REQUIRED_ATOMS = ("N", "CA", "C", "O")
CA_CHANNEL = 1
CB_CHANNEL = 4


class Group(str, Enum):
    """Binding partner a chain belongs to."""

    LIGAND = "ligand"
    RECEPTOR = "receptor"


class MomentFormula(str, Enum):
    """Variance formula for squared-distance moments.

    STANDARD uses 2·tr(S²); LINEAR_TRACE uses 2·tr(S) and is kept for
    comparison against Monte Carlo.
    """

    STANDARD = "standard"
    LINEAR_TRACE = "linear_trace"


class VarianceRule(str, Enum):
    """Covariance update rule of a PDC layer."""

    ADDITIVE = "additive"
    PROPAGATED = "propagated"


class VarianceInitKind(str, Enum):
    """How the initial covariance of every residue is chosen."""

    IDENTITY = "identity"
    FROM_RMSF = "rmsf"
    LEARNABLE = "learnable"


class CorruptionKind(str, Enum):
    """Masked-region initialization mode."""

    NOISE = "noise"
    INTERPOLATE = "interpolate"


class CheckSuite(str, Enum):
    """Verification suites exposed by the check command."""

    EQUIVARIANCE = "equivariance"
    MOMENTS = "moments"
    GRADIENTS = "gradients"
    ALL = "all"


@dataclass(frozen=True)
class Residue:
    """One residue with its backbone atoms (plus CB when present)."""

    chain_id: str
    seq_number: int
    aa: str
    atoms: Mapping[str, NDArray[np.float64]]
    insertion_code: str | None = None

    def __post_init__(self) -> None:
        if self.aa not in AA_INDEX:
            msg = f"Unknown amino acid type '{self.aa}'"
            raise StructureError(msg)

    @property
    def is_usable(self) -> bool:
        """Whether N, CA, C and O are all present."""
        return all(name in self.atoms for name in REQUIRED_ATOMS)

    @property
    def label(self) -> str:
        """Human readable identifier such as ``A38`` or ``A38B``."""
        return f"{self.chain_id}{self.seq_number}{self.insertion_code or ''}"


@dataclass(frozen=True)
class Complex:
    """Residue-level protein-protein complex split into ligand and receptor."""

    residues: tuple[Residue, ...]
    group_of_chain: Mapping[str, Group]

    def __post_init__(self) -> None:
        seen_groups: set[Group] = set()
        for residue in self.residues:
            group = self.group_of_chain.get(residue.chain_id)
            if group is None:
                msg = f"Chain '{residue.chain_id}' has no partner group"
                raise StructureError(msg)
            if not residue.is_usable:
                msg = f"Residue {residue.label} lacks a required backbone atom"
                raise StructureError(msg)
            seen_groups.add(group)
        if seen_groups != {Group.LIGAND, Group.RECEPTOR}:
            msg = "Complex needs residues in both ligand and receptor groups"
            raise StructureError(msg)

    def __len__(self) -> int:
        return len(self.residues)

    @cached_property
    def coords(self) -> NDArray[np.float64]:
        """Coordinates as an (n, 5, 3) array, NaN where an atom is absent."""
        out = np.full((len(self.residues), len(BACKBONE_ATOMS), 3), np.nan)
        for i, residue in enumerate(self.residues):
            for a, name in enumerate(BACKBONE_ATOMS):
                xyz = residue.atoms.get(name)
                if xyz is not None:
                    out[i, a] = xyz
        out.setflags(write=False)
        return out

    @property
    def ca(self) -> NDArray[np.float64]:
        """CA coordinates, shape (n, 3)."""
        return self.coords[:, CA_CHANNEL]

    @cached_property
    def aa_indices(self) -> NDArray[np.int64]:
        """Residue type indices into ``AMINO_ACIDS``."""
        return np.array([AA_INDEX[r.aa] for r in self.residues], dtype=np.int64)

    @cached_property
    def group_indices(self) -> NDArray[np.int64]:
        """0 for ligand residues, 1 for receptor residues."""
        return np.array(
            [
                0 if self.group_of_chain[r.chain_id] is Group.LIGAND else 1
                for r in self.residues
            ],
            dtype=np.int64,
        )

    @cached_property
    def chain_order(self) -> dict[str, list[int]]:
        """Residue indices of each chain, in file order."""
        chains: dict[str, list[int]] = {}
        for i, residue in enumerate(self.residues):
            chains.setdefault(residue.chain_id, []).append(i)
        return chains

    def residue_index(
        self,
        chain_id: str,
        seq_number: int,
        insertion_code: str | None = None,
    ) -> int | None:
        """Find the index of a residue by its PDB identity."""
        for i in self.chain_order.get(chain_id, []):
            residue = self.residues[i]
            if (
                residue.seq_number == seq_number
                and (residue.insertion_code or None) == (insertion_code or None)
            ):
                return i
        return None

    def with_coords(self, coords: NDArray[np.float64]) -> Complex:
        """Return a copy with replaced coordinates; absent atoms stay absent."""
        coords = np.asarray(coords, dtype=np.float64)
        if coords.shape != self.coords.shape:
            msg = f"Coordinate shape {coords.shape} != {self.coords.shape}"
            raise StructureError(msg)
        residues = []
        for i, residue in enumerate(self.residues):
            atoms = {
                name: coords[i, a].copy()
                for a, name in enumerate(BACKBONE_ATOMS)
                if name in residue.atoms
            }
            residues.append(
                Residue(
                    chain_id=residue.chain_id,
                    seq_number=residue.seq_number,
                    aa=residue.aa,
                    atoms=atoms,
                    insertion_code=residue.insertion_code,
                )
            )
        return Complex(tuple(residues), dict(self.group_of_chain))

    def with_types(self, types: Sequence[str]) -> Complex:
        """Return a copy with substituted residue types (same geometry)."""
        if len(types) != len(self.residues):
            msg = f"Expected {len(self.residues)} types, got {len(types)}"
            raise StructureError(msg)
        residues = tuple(
            Residue(
                chain_id=r.chain_id,
                seq_number=r.seq_number,
                aa=aa,
                atoms=r.atoms,
                insertion_code=r.insertion_code,
            )
            for r, aa in zip(self.residues, types, strict=True)
        )
        return Complex(residues, dict(self.group_of_chain))


@dataclass(frozen=True)
class EdgeSet:
    """Directed residue pairs split by partner membership."""

    internal_l: tuple[tuple[int, int], ...]
    internal_r: tuple[tuple[int, int], ...]
    cross_lr: tuple[tuple[int, int], ...]

    def all_edges(self) -> NDArray[np.int64]:
        """All edges as an (E, 2) array of (i, j) rows, j sending to i."""
        pairs = [*self.internal_l, *self.internal_r, *self.cross_lr]
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.internal_l) + len(self.internal_r) + len(self.cross_lr)


@dataclass(frozen=True)
class Mutation:
    """A single point substitution, e.g. ``TI38A``."""

    wt_aa: str
    chain_id: str
    seq_number: int
    mt_aa: str
    insertion_code: str | None = None

    def __post_init__(self) -> None:
        for aa in (self.wt_aa, self.mt_aa):
            if aa not in AA_INDEX:
                msg = f"Unknown amino acid letter '{aa}' in {self}"
                raise MutationError(msg)
        if self.wt_aa == self.mt_aa:
            msg = f"Identity mutation {self}"
            raise MutationError(msg)

    def __str__(self) -> str:
        return (
            f"{self.wt_aa}{self.chain_id}{self.seq_number}"
            f"{self.insertion_code or ''}{self.mt_aa}"
        )


@dataclass(frozen=True)
class DatasetEntry:
    """One SKEMPI-style record: structure, partner grouping, mutations, ΔΔG."""

    pdb_id: str
    ligand_chains: tuple[str, ...]
    receptor_chains: tuple[str, ...]
    mutations: tuple[Mutation, ...]
    ddg: float

    def __post_init__(self) -> None:
        if not self.ligand_chains or not self.receptor_chains:
            msg = f"{self.pdb_id}: both chain groups must be non-empty"
            raise StructureError(msg)
        if set(self.ligand_chains) & set(self.receptor_chains):
            msg = f"{self.pdb_id}: chain groups overlap"
            raise StructureError(msg)
        if not np.isfinite(self.ddg):
            msg = f"{self.pdb_id}: ddg must be finite"
            raise StructureError(msg)

    @property
    def group_of_chain(self) -> dict[str, Group]:
        """Chain to partner mapping for this entry."""
        groups = dict.fromkeys(self.ligand_chains, Group.LIGAND)
        groups.update(dict.fromkeys(self.receptor_chains, Group.RECEPTOR))
        return groups

    @property
    def mutation_string(self) -> str:
        """Comma separated mutation list."""
        return ",".join(str(m) for m in self.mutations)


MutationRecord = DatasetEntry


@dataclass
class FoldAssignment:
    """Structure-level assignment to cross-validation folds."""

    folds: dict[str, int]
    n_folds: int

    def structures_in(self, fold: int) -> list[str]:
        """Structure ids assigned to ``fold``."""
        return sorted(s for s, f in self.folds.items() if f == fold)

    def entries_in(
        self, entries: Sequence[DatasetEntry], fold: int
    ) -> list[DatasetEntry]:
        """Entries whose structure is in ``fold``."""
        return [e for e in entries if self.folds[e.pdb_id] == fold]

    def entries_not_in(
        self, entries: Sequence[DatasetEntry], fold: int
    ) -> list[DatasetEntry]:
        """Entries whose structure is outside ``fold``."""
        return [e for e in entries if self.folds[e.pdb_id] != fold]


@dataclass(frozen=True)
class EvalRecord:
    """Experimental and predicted ΔΔG for one record."""

    structure_id: str
    y_true: float
    y_pred: float


@dataclass
class UncertaintyReport:
    """Learned covariance magnitude against simulated RMSF."""

    interface_mean_sq_norm: float
    non_interface_mean_sq_norm: float
    interface_mean_rmsf: float
    non_interface_mean_rmsf: float
    pearson: float
    n_interface: int
    n_non_interface: int
    per_residue: list[tuple[str, float, float]] = field(default_factory=list)
