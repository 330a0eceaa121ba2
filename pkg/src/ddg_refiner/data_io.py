# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Readers and writers for structures, mutation datasets and RMSF tables.

Formats:

- PDB: fixed-column ``ATOM`` records; only N, CA, C, O and CB are read.
- Dataset: TSV with header ``pdb ligand_chains receptor_chains mutations ddg``.
- RMSF: TSV with header ``chain resseq rmsf``.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
import logging
from pathlib import Path
import re

import numpy as np
from numpy.typing import NDArray

from .exceptions import DataFormatError, MutationError, StructureError
from .models import (
    BACKBONE_ATOMS,
    ONE_TO_THREE,
    THREE_TO_ONE,
    Complex,
    DatasetEntry,
    FoldAssignment,
    Group,
    Mutation,
    Residue,
)

logger = logging.getLogger(__name__)

DATASET_HEADER = ("pdb", "ligand_chains", "receptor_chains", "mutations", "ddg")
RMSF_HEADER = ("chain", "resseq", "rmsf")

_MUTATION_RE = re.compile(r"^([A-Z])([A-Za-z0-9])(-?\d+)([A-Za-z]?)([A-Z])$")

ResidueKey = tuple[str, int, str]
ComplexKey = tuple[str, tuple[str, ...], tuple[str, ...]]


# --------------------------------------------------------------------------
# PDB
# --------------------------------------------------------------------------


def _coordinate(line: str, start: int, end: int, line_number: int) -> float:
    field = line[start:end]
    try:
        return float(field)
    except ValueError as e:
        msg = f"cannot parse coordinate {field.strip()!r}"
        raise DataFormatError(msg, line_number) from e


def parse_pdb(
    text: str,
    ligand_chains: Iterable[str],
    receptor_chains: Iterable[str],
) -> Complex:
    """Read the backbone (plus CB) of the given chains from PDB text.

    Only the first model is read. The first alternate location listed for
    an atom wins. Residues with a non-canonical name, and residues lacking
    N, CA, C or O, are skipped with a warning. Chains outside both groups
    are ignored.

    Args:
        text: PDB file content
        ligand_chains: Chain ids of the ligand partner
        receptor_chains: Chain ids of the receptor partner

    Returns:
        Parsed complex

    Raises:
        DataFormatError: If a coordinate or residue number cannot be parsed
        StructureError: If a partner ends up without usable residues
    """
    groups = dict.fromkeys(ligand_chains, Group.LIGAND)
    groups.update(dict.fromkeys(receptor_chains, Group.RECEPTOR))

    order: list[ResidueKey] = []
    names: dict[ResidueKey, str] = {}
    atoms: dict[ResidueKey, dict[str, NDArray[np.float64]]] = {}
    skipped: set[ResidueKey] = set()

    for line_number, line in enumerate(text.splitlines(), start=1):
        if line.startswith("ENDMDL"):
            break
        if not line.startswith("ATOM"):
            continue
        chain_id = line[21:22]
        if chain_id not in groups:
            continue
        try:
            seq_number = int(line[22:26])
        except ValueError as e:
            msg = f"cannot parse residue number {line[22:26].strip()!r}"
            raise DataFormatError(msg, line_number) from e
        key = (chain_id, seq_number, line[26:27].strip())
        res_name = line[17:20].strip()
        if res_name not in THREE_TO_ONE:
            if key not in skipped:
                logger.warning(
                    f"Skipping non-canonical residue {res_name} {chain_id}{seq_number}"
                )
                skipped.add(key)
            continue
        atom_name = line[12:16].strip()
        if atom_name not in BACKBONE_ATOMS:
            continue
        if key not in atoms:
            order.append(key)
            names[key] = res_name
            atoms[key] = {}
        if atom_name in atoms[key]:
            continue
        atoms[key][atom_name] = np.array(
            [
                _coordinate(line, 30, 38, line_number),
                _coordinate(line, 38, 46, line_number),
                _coordinate(line, 46, 54, line_number),
            ]
        )

    residues: list[Residue] = []
    for key in order:
        chain_id, seq_number, icode = key
        residue = Residue(
            chain_id=chain_id,
            seq_number=seq_number,
            aa=THREE_TO_ONE[names[key]],
            atoms=atoms[key],
            insertion_code=icode or None,
        )
        if not residue.is_usable:
            logger.warning(f"Dropping residue {residue.label}: incomplete backbone")
            continue
        residues.append(residue)
    logger.debug(f"Parsed {len(residues)} residues from {len(order)} candidates")
    return Complex(tuple(residues), groups)


def _atom_name_field(name: str) -> str:
    return f" {name:<3}" if len(name) < 4 else name


def serialize_pdb(c: Complex, coords: NDArray[np.float64] | None = None) -> str:
    """Write a complex (optionally with replacement coordinates) as PDB text.

    Atoms absent from a residue are not written. Coordinates are rounded
    to three decimals as the format requires.
    """
    xyz = c.coords if coords is None else np.asarray(coords, dtype=np.float64)
    if xyz.shape != c.coords.shape:
        msg = f"Coordinate shape {xyz.shape} != {c.coords.shape}"
        raise StructureError(msg)
    lines: list[str] = []
    serial = 1
    previous_chain: str | None = None
    for i, residue in enumerate(c.residues):
        if previous_chain is not None and residue.chain_id != previous_chain:
            lines.append("TER")
        previous_chain = residue.chain_id
        for a, name in enumerate(BACKBONE_ATOMS):
            if name not in residue.atoms:
                continue
            x, y, z = xyz[i, a]
            lines.append(
                f"ATOM  {serial:5d} {_atom_name_field(name)} "
                f"{ONE_TO_THREE[residue.aa]:>3} {residue.chain_id}"
                f"{residue.seq_number:4d}{residue.insertion_code or ' '}   "
                f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}"
                f"          {name[0]:>2}"
            )
            serial += 1
    lines.extend(["TER", "END"])
    return "\n".join(lines) + "\n"


def load_structure(
    path: Path, ligand_chains: Iterable[str], receptor_chains: Iterable[str]
) -> Complex:
    """Parse a PDB file from disk."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        msg = f"Cannot read structure {path}: {e}"
        raise DataFormatError(msg) from e
    return parse_pdb(text, ligand_chains, receptor_chains)


# --------------------------------------------------------------------------
# Mutations and datasets
# --------------------------------------------------------------------------


def parse_mutation(s: str) -> tuple[Mutation, ...]:
    """Parse a comma separated list like ``TI38A,RC106K``.

    Raises:
        MutationError: On a malformed token, unknown letter or identity
            substitution; the message names the token
    """
    tokens = [t.strip() for t in s.split(",")]
    if not s.strip() or any(not t for t in tokens):
        msg = f"Empty mutation token in {s!r}"
        raise MutationError(msg)
    mutations: list[Mutation] = []
    for token in tokens:
        match = _MUTATION_RE.match(token)
        if match is None:
            msg = f"Malformed mutation token {token!r}"
            raise MutationError(msg)
        wt, chain, number, icode, mt = match.groups()
        try:
            mutations.append(
                Mutation(
                    wt_aa=wt,
                    chain_id=chain,
                    seq_number=int(number),
                    mt_aa=mt,
                    insertion_code=icode or None,
                )
            )
        except MutationError as e:
            msg = f"Invalid mutation token {token!r}: {e}"
            raise MutationError(msg) from e
    return tuple(mutations)


def read_dataset(text: str) -> list[DatasetEntry]:
    """Parse dataset TSV text.

    Raises:
        DataFormatError: On a bad header, column count, ΔΔG or mutation
    """
    numbered = [
        (n, ln)
        for n, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.startswith("#")
    ]
    if not numbered or tuple(numbered[0][1].split("\t")) != DATASET_HEADER:
        msg = f"dataset header must be {' '.join(DATASET_HEADER)}"
        raise DataFormatError(msg, numbered[0][0] if numbered else 1)
    entries: list[DatasetEntry] = []
    for line_number, line in numbered[1:]:
        fields = line.split("\t")
        if len(fields) != len(DATASET_HEADER):
            msg = f"expected {len(DATASET_HEADER)} columns, got {len(fields)}"
            raise DataFormatError(msg, line_number)
        pdb_id, ligand, receptor, mutation_text, ddg_text = (f.strip() for f in fields)
        try:
            ddg = float(ddg_text)
        except ValueError as e:
            msg = f"cannot parse ddg {ddg_text!r}"
            raise DataFormatError(msg, line_number) from e
        try:
            entries.append(
                DatasetEntry(
                    pdb_id=pdb_id,
                    ligand_chains=tuple(ligand),
                    receptor_chains=tuple(receptor),
                    mutations=parse_mutation(mutation_text),
                    ddg=ddg,
                )
            )
        except (MutationError, StructureError) as e:
            raise DataFormatError(str(e), line_number) from e
    logger.debug(f"Read {len(entries)} dataset entries")
    return entries


def write_dataset(entries: Sequence[DatasetEntry]) -> str:
    rows = ["\t".join(DATASET_HEADER)]
    for e in entries:
        rows.append(
            "\t".join(
                [
                    e.pdb_id,
                    "".join(e.ligand_chains),
                    "".join(e.receptor_chains),
                    e.mutation_string,
                    repr(float(e.ddg)),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def load_dataset(path: Path) -> list[DatasetEntry]:
    try:
        return read_dataset(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        msg = f"Cannot read dataset {path}: {e}"
        raise DataFormatError(msg) from e


def complex_key(entry: DatasetEntry) -> ComplexKey:
    """Key identifying a structure together with its partner grouping."""
    return (entry.pdb_id, entry.ligand_chains, entry.receptor_chains)


def load_structures(
    entries: Sequence[DatasetEntry], structure_dir: Path
) -> dict[ComplexKey, Complex]:
    """Parse ``<structure_dir>/<pdb>.pdb`` once per distinct grouping."""
    complexes: dict[ComplexKey, Complex] = {}
    for entry in entries:
        key = complex_key(entry)
        if key not in complexes:
            complexes[key] = load_structure(
                Path(structure_dir) / f"{entry.pdb_id}.pdb",
                entry.ligand_chains,
                entry.receptor_chains,
            )
    return complexes


def split_folds(
    entries: Sequence[DatasetEntry], n_folds: int = 3, seed: int = 0
) -> FoldAssignment:
    """Assign whole structures to folds: seeded shuffle, then round-robin.

    Raises:
        DataFormatError: If there are fewer structures than folds
    """
    structures = sorted({e.pdb_id for e in entries})
    if len(structures) < n_folds:
        msg = f"Need at least {n_folds} structures to split, found {len(structures)}"
        raise DataFormatError(msg)
    order = np.random.default_rng(seed).permutation(len(structures))
    folds = {structures[s]: k % n_folds for k, s in enumerate(order)}
    return FoldAssignment(folds=folds, n_folds=n_folds)


# --------------------------------------------------------------------------
# RMSF
# --------------------------------------------------------------------------


def load_rmsf(text: str) -> dict[tuple[str, int], float]:
    """Parse an RMSF table into ``{(chain, resseq): value}``.

    Raises:
        DataFormatError: On malformed lines, negative values or duplicates
    """
    values: dict[tuple[str, int], float] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if tuple(f.strip() for f in fields) == RMSF_HEADER:
            continue
        if len(fields) != 3:
            msg = f"expected 3 columns, got {len(fields)}"
            raise DataFormatError(msg, line_number)
        chain, resseq_text, value_text = (f.strip() for f in fields)
        try:
            key = (chain, int(resseq_text))
            value = float(value_text)
        except ValueError as e:
            msg = f"cannot parse {line.strip()!r}"
            raise DataFormatError(msg, line_number) from e
        if not np.isfinite(value) or value < 0.0:
            msg = f"RMSF must be finite and non-negative, got {value}"
            raise DataFormatError(msg, line_number)
        if key in values:
            msg = f"duplicate RMSF entry for {chain}{key[1]}"
            raise DataFormatError(msg, line_number)
        values[key] = value
    return values


def write_rmsf(values: Mapping[tuple[str, int], float]) -> str:
    rows = ["\t".join(RMSF_HEADER)]
    rows.extend(f"{chain}\t{resseq}\t{float(value)!r}" for (chain, resseq), value in values.items())
    return "\n".join(rows) + "\n"


def rmsf_for_complex(
    c: Complex, values: Mapping[tuple[str, int], float]
) -> NDArray[np.float64]:
    """Per-residue RMSF in complex order.

    Raises:
        DataFormatError: If a residue has no value
    """
    out = np.empty(len(c))
    for i, residue in enumerate(c.residues):
        key = (residue.chain_id, residue.seq_number)
        if key not in values:
            msg = f"No RMSF value for residue {residue.label}"
            raise DataFormatError(msg)
        out[i] = values[key]
    return out
