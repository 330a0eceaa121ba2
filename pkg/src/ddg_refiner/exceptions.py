# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Custom exceptions for ddg-refiner."""

from __future__ import annotations

from typing import Any


class DdgRefinerError(Exception):
    """Base exception for ddg-refiner."""

    pass


class InvalidPDCError(DdgRefinerError):
    """Covariance is not symmetric PSD, or a derived quantity is undefined."""

    pass


class InvalidRotationError(DdgRefinerError):
    """Matrix is not a proper 3x3 rotation."""

    pass


class ShapeError(DdgRefinerError):
    """Operands of a tensor operation have incompatible shapes."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        """Initialize shape error.

        Args:
            op: Name of the failing operation
            *shapes: Shapes of the offending operands
        """
        rendered = ", ".join(str(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")
        self.op = op
        self.shapes = shapes


class GraphError(DdgRefinerError):
    """Misuse of the differentiation graph (untracked loss, double backward)."""

    pass


class StructureError(DdgRefinerError):
    """Structure cannot support the requested operation."""

    pass


class MutationError(DdgRefinerError):
    """Mutation string is malformed or does not match the structure."""

    pass


class DataFormatError(DdgRefinerError):
    """Input file content could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        """Initialize data format error.

        Args:
            message: Error message
            line_number: 1-based line number of the offending line
        """
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class MetricError(DdgRefinerError):
    """Metric is undefined for the given records."""

    pass


class ConfigurationError(DdgRefinerError):
    """Configuration error."""

    pass


class CheckFailedError(DdgRefinerError):
    """A verification suite did not pass."""

    def __init__(self, message: str, report: Any = None):
        """Initialize check failure.

        Args:
            message: Error message
            report: Suite report that failed
        """
        super().__init__(message)
        self.report = report
