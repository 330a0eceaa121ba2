# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for data_io module."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from ddg_refiner.data_io import (
    load_dataset,
    load_rmsf,
    load_structure,
    load_structures,
    parse_mutation,
    parse_pdb,
    read_dataset,
    rmsf_for_complex,
    serialize_pdb,
    split_folds,
    write_dataset,
    write_rmsf,
)
from ddg_refiner.exceptions import DataFormatError, MutationError, StructureError
from ddg_refiner.models import CA_CHANNEL, CB_CHANNEL, Complex, DatasetEntry, Mutation

HEADER = "pdb\tligand_chains\treceptor_chains\tmutations\tddg\n"


@pytest.fixture
def golden(fixtures_dir: Path) -> Complex:
    """The small mixed-content PDB fixture parsed with A against B."""
    return load_structure(fixtures_dir / "golden.pdb", ["A"], ["B"])


class TestParsePdb:
    """Tests for parse_pdb function."""

    def test_usable_residues_only(self, golden: Complex) -> None:
        """Test that unknown, incomplete, foreign-chain and water residues are dropped."""
        assert [r.label for r in golden.residues] == ["A1", "A2", "B6"]
        assert "".join(r.aa for r in golden.residues) == "AGS"

    def test_coordinates(self, golden: Complex) -> None:
        """Test fixed-column coordinate parsing."""
        np.testing.assert_allclose(golden.coords[0, CA_CHANNEL], [11.639, 6.071, -5.147])
        np.testing.assert_allclose(golden.coords[0, CB_CHANNEL], [11.074, 7.226, -4.343])

    def test_glycine_has_no_cb(self, golden: Complex) -> None:
        """Test that glycine carries a NaN CB."""
        assert np.all(np.isnan(golden.coords[1, CB_CHANNEL]))
        assert "CB" not in golden.residues[1].atoms

    def test_first_altloc_wins(self, golden: Complex) -> None:
        """Test that the A alternate location of SER B6 is kept."""
        np.testing.assert_allclose(golden.coords[2, CA_CHANNEL], [23.5, -0.5, 4.0])

    def test_groups(self, golden: Complex) -> None:
        """Test partner assignment."""
        assert golden.group_indices.tolist() == [0, 0, 1]

    def test_partner_without_residues(self, fixtures_dir: Path) -> None:
        """Test that a partner made only of ignored chains is rejected."""
        with pytest.raises(StructureError, match="both ligand and receptor"):
            load_structure(fixtures_dir / "golden.pdb", ["A"], ["Z"])

    def test_bad_coordinate(self) -> None:
        """Test that an unparsable coordinate names its line."""
        line = "ATOM      1  CA  ALA A   1      xx.xxx   6.071  -5.147  1.00  0.00           C"
        with pytest.raises(DataFormatError, match="line 2"):
            parse_pdb("HEADER\n" + line + "\n", ["A"], ["B"])

    def test_only_first_model(self, golden: Complex, fixtures_dir: Path) -> None:
        """Test that records after ENDMDL are ignored."""
        text = (fixtures_dir / "golden.pdb").read_text()
        extra = text.replace("END\n", "ENDMDL\n") + text
        assert len(parse_pdb(extra, ["A"], ["B"])) == len(golden)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test that an unreadable file raises a data error."""
        with pytest.raises(DataFormatError, match="Cannot read structure"):
            load_structure(tmp_path / "nope.pdb", ["A"], ["B"])


class TestSerializePdb:
    """Tests for serialize_pdb function."""

    def test_reparse_keeps_atoms(self, golden: Complex) -> None:
        """Test that written PDB text parses back to the same backbone."""
        again = parse_pdb(serialize_pdb(golden), ["A"], ["B"])
        assert [r.label for r in again.residues] == [r.label for r in golden.residues]
        np.testing.assert_allclose(again.coords, golden.coords, atol=5e-4)

    def test_replacement_coordinates(self, golden: Complex) -> None:
        """Test writing refined coordinates in place of the originals."""
        shifted = golden.coords + 1.0
        again = parse_pdb(serialize_pdb(golden, shifted), ["A"], ["B"])
        np.testing.assert_allclose(again.coords, shifted, atol=5e-4)

    def test_fixed_columns(self, golden: Complex) -> None:
        """Test atom record layout."""
        first = serialize_pdb(golden).splitlines()[0]
        assert first.startswith("ATOM      1  N   ALA A   1")
        assert first[30:38] == "  11.104"

    def test_chain_breaks(self, golden: Complex) -> None:
        """Test a TER record between chains and at the end."""
        lines = serialize_pdb(golden).splitlines()
        assert lines.count("TER") == 2
        assert lines[-1] == "END"

    def test_shape_mismatch(self, golden: Complex) -> None:
        """Test that coordinates of the wrong shape are rejected."""
        with pytest.raises(StructureError):
            serialize_pdb(golden, np.zeros((2, 5, 3)))


class TestParseMutation:
    """Tests for parse_mutation function."""

    def test_single(self) -> None:
        """Test one substitution."""
        assert parse_mutation("TI38A") == (Mutation("T", "I", 38, "A"),)

    def test_list_with_insertion_code(self) -> None:
        """Test a comma separated list with an insertion code."""
        muts = parse_mutation("TI38A, RC100BK")
        assert muts[1] == Mutation("R", "C", 100, "K", "B")
        assert str(muts[1]) == "RC100BK"

    @pytest.mark.parametrize("token", ["TI38", "ti38a", "TI3.8A", "T-I38A"])
    def test_malformed(self, token: str) -> None:
        """Test that badly shaped tokens are rejected by name."""
        with pytest.raises(MutationError, match="Malformed mutation token"):
            parse_mutation(token)

    @pytest.mark.parametrize("token", ["XI38A", "TI38T"])
    def test_invalid(self, token: str) -> None:
        """Test unknown letters and identity substitutions."""
        with pytest.raises(MutationError, match="Invalid mutation token"):
            parse_mutation(token)

    def test_empty_token(self) -> None:
        """Test that a trailing comma is rejected."""
        with pytest.raises(MutationError, match="Empty"):
            parse_mutation("TI38A,")


class TestDataset:
    """Tests for read_dataset and write_dataset."""

    def test_read(self) -> None:
        """Test a two-line dataset with a comment."""
        text = HEADER + "# comment\n1abc\tA\tBC\tTA5G,KB7E\t1.25\n2xyz\tHL\tA\tWH3A\t-0.5\n"
        entries = read_dataset(text)
        assert len(entries) == 2
        assert entries[0].receptor_chains == ("B", "C")
        assert entries[0].mutation_string == "TA5G,KB7E"
        assert entries[1].ligand_chains == ("H", "L")
        assert entries[1].ddg == -0.5

    def test_leading_comment_and_blank_line(self) -> None:
        """Test that comments and blank lines before the header are skipped."""
        text = "# skempi subset\n\n" + HEADER + "1abc\tA\tB\tDA1G\t0.5\n"
        entries = read_dataset(text)
        assert len(entries) == 1
        assert entries[0].ddg == 0.5

    def test_line_numbers_after_leading_comment(self) -> None:
        """Test that error line numbers count the skipped leading lines."""
        text = "# skempi subset\n" + HEADER + "1abc\tA\tB\tDA1G\tabc\n"
        with pytest.raises(DataFormatError, match="line 3: cannot parse ddg"):
            read_dataset(text)

    def test_write_then_read(self) -> None:
        """Test that written datasets read back unchanged."""
        entries = [
            DatasetEntry("1abc", ("A",), ("B",), (Mutation("T", "A", 5, "G"),), 0.1 + 0.2)
        ]
        assert read_dataset(write_dataset(entries)) == entries

    def test_bad_header(self) -> None:
        """Test that a wrong header is rejected at line 1."""
        with pytest.raises(DataFormatError, match="line 1"):
            read_dataset("pdb\tddg\n")

    def test_bad_ddg_line_number(self) -> None:
        """Test that a bad ΔΔG names its line."""
        text = HEADER + "1abc\tA\tB\tTA5G\t1.0\n1abc\tA\tB\tTA6G\tabc\n"
        with pytest.raises(DataFormatError, match="line 3: cannot parse ddg"):
            read_dataset(text)

    def test_bad_mutation_line_number(self) -> None:
        """Test that a bad mutation names its line and token."""
        with pytest.raises(DataFormatError, match="line 2: .*TA5"):
            read_dataset(HEADER + "1abc\tA\tB\tTA5\t1.0\n")

    def test_overlapping_groups(self) -> None:
        """Test that a chain in both partners is rejected."""
        with pytest.raises(DataFormatError, match="overlap"):
            read_dataset(HEADER + "1abc\tAB\tB\tTA5G\t1.0\n")

    def test_column_count(self) -> None:
        """Test that a short row is rejected."""
        with pytest.raises(DataFormatError, match="expected 5 columns"):
            read_dataset(HEADER + "1abc\tA\tB\t1.0\n")

    def test_load_missing(self, tmp_path: Path) -> None:
        """Test that a missing dataset file raises a data error."""
        with pytest.raises(DataFormatError, match="Cannot read dataset"):
            load_dataset(tmp_path / "missing.tsv")


class TestLoadStructures:
    """Tests for load_structures function."""

    def test_one_parse_per_grouping(self, fixtures_dir: Path, tmp_path: Path) -> None:
        """Test that entries sharing a structure and grouping share a complex."""
        (tmp_path / "golden.pdb").write_text((fixtures_dir / "golden.pdb").read_text())
        entries = [
            DatasetEntry("golden", ("A",), ("B",), (Mutation("A", "A", 1, "G"),), 1.0),
            DatasetEntry("golden", ("A",), ("B",), (Mutation("G", "A", 2, "A"),), 2.0),
            DatasetEntry("golden", ("B",), ("A",), (Mutation("S", "B", 6, "A"),), 3.0),
        ]
        complexes = load_structures(entries, tmp_path)
        assert len(complexes) == 2
        swapped = complexes[("golden", ("B",), ("A",))]
        assert swapped.group_indices.tolist() == [1, 1, 0]


class TestSplitFolds:
    """Tests for split_folds function."""

    @staticmethod
    def _entries(n_structures: int, per_structure: int = 3) -> list[DatasetEntry]:
        return [
            DatasetEntry(f"s{k:02d}", ("A",), ("B",), (Mutation("A", "A", j + 1, "G"),), 0.0)
            for k in range(n_structures)
            for j in range(per_structure)
        ]

    def test_structures_stay_together(self) -> None:
        """Test that every structure lands in exactly one fold."""
        entries = self._entries(10)
        folds = split_folds(entries, 3, seed=1)
        seen: dict[str, set[int]] = {}
        for fold in range(3):
            for e in folds.entries_in(entries, fold):
                seen.setdefault(e.pdb_id, set()).add(fold)
        assert all(len(v) == 1 for v in seen.values())
        assert len(seen) == 10

    def test_balanced(self) -> None:
        """Test round-robin fold sizes."""
        folds = split_folds(self._entries(10), 3, seed=2)
        sizes = sorted(len(folds.structures_in(f)) for f in range(3))
        assert sizes == [3, 3, 4]

    def test_seeded(self) -> None:
        """Test that equal seeds give equal splits."""
        entries = self._entries(9)
        assert split_folds(entries, 3, seed=5).folds == split_folds(entries, 3, seed=5).folds

    def test_too_few_structures(self) -> None:
        """Test that fewer structures than folds is rejected."""
        with pytest.raises(DataFormatError, match="at least 3"):
            split_folds(self._entries(2), 3)


class TestRmsf:
    """Tests for RMSF tables."""

    def test_load(self) -> None:
        """Test parsing with a header and a comment."""
        values = load_rmsf("chain\tresseq\trmsf\n# note\nA\t1\t0.8\nB\t6\t1.5\n")
        assert values == {("A", 1): 0.8, ("B", 6): 1.5}

    def test_write_then_load(self) -> None:
        """Test that written tables load back unchanged."""
        values = {("A", 1): 0.1 + 0.2, ("B", 12): 2.0}
        assert load_rmsf(write_rmsf(values)) == values

    def test_negative(self) -> None:
        """Test that negative RMSF values are rejected."""
        with pytest.raises(DataFormatError, match="line 2: RMSF must be"):
            load_rmsf("chain\tresseq\trmsf\nA\t1\t-0.5\n")

    def test_duplicate(self) -> None:
        """Test that repeated residues are rejected."""
        with pytest.raises(DataFormatError, match="duplicate"):
            load_rmsf("A\t1\t0.5\nA\t1\t0.6\n")

    def test_for_complex(self, golden: Complex) -> None:
        """Test per-residue ordering."""
        values = {("A", 1): 0.5, ("A", 2): 0.7, ("B", 6): 1.1}
        np.testing.assert_array_equal(rmsf_for_complex(golden, values), [0.5, 0.7, 1.1])

    def test_missing_residue(self, golden: Complex) -> None:
        """Test that a residue without a value is reported."""
        with pytest.raises(DataFormatError, match="B6"):
            rmsf_for_complex(golden, {("A", 1): 0.5, ("A", 2): 0.7})
