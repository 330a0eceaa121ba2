# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Tests for checks module."""

from __future__ import annotations

import pytest

from ddg_refiner.checks import (
    CheckResult,
    SuiteReport,
    check_equivariance,
    check_gradients,
    check_moments,
    check_psd_stability,
    run_checks,
    run_suite,
)
from ddg_refiner.exceptions import CheckFailedError
from ddg_refiner.models import CheckSuite, VarianceRule


def _suite(suite: CheckSuite, passed: bool) -> SuiteReport:
    return SuiteReport(suite, [CheckResult(f"{suite.value} property", passed, 0.0, 1.0)])


class TestSmallSuites:
    """Reduced-size runs of each property suite."""

    @pytest.mark.parametrize("rule", list(VarianceRule))
    def test_equivariance(self, rule: VarianceRule) -> None:
        """Test rigid-motion equivariance on one complex and two motions."""
        results = check_equivariance(n_complexes=1, n_motions=2, n_layers=2, variance_rule=rule)
        assert len(results) == 3
        assert all(r.passed for r in results), [(r.name, r.max_deviation) for r in results]

    def test_psd_stability(self) -> None:
        """Test that a short stress stack stays PSD under both rules."""
        results = check_psd_stability(n_complexes=1, n_layers=3)
        assert len(results) == len(VarianceRule)
        assert all(r.passed for r in results)
        assert all(r.details["min_eigenvalue"] > 0.0 for r in results)

    def test_moments(self) -> None:
        """Test closed-form moments against a modest Monte Carlo run."""
        results = check_moments(n_pairs=2, n_samples=200_000)
        assert [r.passed for r in results[:2]] == [True, True]
        assert results[2].passed
        assert results[2].details["n_pairs"] == 2

    def test_gradients(self) -> None:
        """Test finite differences on one instance per parameter group."""
        results = check_gradients(n_instances=1, max_entries=2)
        assert len(results) == 4
        assert all(r.passed for r in results), [(r.name, r.max_deviation) for r in results]


class TestRunSuite:
    """Tests for run_suite function."""

    def test_rejects_all(self) -> None:
        """Test that the ALL selector is not a single suite."""
        with pytest.raises(ValueError, match="single suite"):
            run_suite(CheckSuite.ALL)

    def test_forwards_arguments(self) -> None:
        """Test that keyword arguments reach the suite."""
        report = run_suite(CheckSuite.MOMENTS, n_pairs=1, n_samples=100_000)
        assert report.suite is CheckSuite.MOMENTS
        assert report.results[2].details["n_pairs"] == 1


class TestRunChecks:
    """Tests for run_checks function."""

    def test_failure_raises_with_reports(self, mocker) -> None:  # type: ignore[no-untyped-def]
        """Test that a failing property raises and carries every report."""
        mocker.patch(
            "ddg_refiner.checks.run_suite",
            side_effect=lambda s: _suite(s, s is not CheckSuite.MOMENTS),
        )
        with pytest.raises(CheckFailedError, match="1 check") as exc_info:
            run_checks()
        assert [r.suite for r in exc_info.value.report] == [
            CheckSuite.EQUIVARIANCE,
            CheckSuite.MOMENTS,
            CheckSuite.GRADIENTS,
        ]

    def test_failure_without_raising(self, mocker) -> None:  # type: ignore[no-untyped-def]
        """Test that reports are returned when raising is disabled."""
        mocker.patch("ddg_refiner.checks.run_suite", side_effect=lambda s: _suite(s, False))
        reports = run_checks(CheckSuite.GRADIENTS, raise_on_failure=False)
        assert len(reports) == 1
        assert not reports[0].passed

    @pytest.mark.slow
    def test_full_suites_pass(self) -> None:
        """Test every suite at full size."""
        reports = run_checks()
        assert all(r.passed for r in reports)
