# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Evaluation metrics for ΔΔG predictions."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
import logging
import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .exceptions import MetricError
from .models import EvalRecord

logger = logging.getLogger(__name__)

MIN_GROUP_SIZE = 10


def _pair(xs: ArrayLike, ys: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        msg = f"Expected two equal-length 1-D sequences, got {x.shape} and {y.shape}"
        raise MetricError(msg)
    if len(x) < 2:
        msg = f"Need at least 2 points, got {len(x)}"
        raise MetricError(msg)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        msg = "Metric inputs must be finite"
        raise MetricError(msg)
    return x, y


def pearson(xs: ArrayLike, ys: ArrayLike) -> float:
    """Sample Pearson correlation.

    Raises:
        MetricError: If either side has zero variance or fewer than 2 points
    """
    x, y = _pair(xs, ys)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        msg = "Pearson correlation is undefined for a constant sequence"
        raise MetricError(msg)
    r = float(stats.pearsonr(x, y).statistic)
    return max(-1.0, min(1.0, r))


def spearman(xs: ArrayLike, ys: ArrayLike) -> float:
    """Pearson correlation of average ranks (ties share the mean rank)."""
    x, y = _pair(xs, ys)
    return pearson(stats.rankdata(x), stats.rankdata(y))


def _affine_fit(pred: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    """Least-squares calibration ``a·pred + b``; constant fallback when degenerate."""
    if np.ptp(pred) == 0.0:
        return np.full_like(y, y.mean())
    design = np.column_stack([pred, np.ones_like(pred)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return design @ coef


def minimized_rmse(y_pred: ArrayLike, y_true: ArrayLike) -> float:
    """RMSE after the best affine recalibration of the predictions."""
    pred, y = _pair(y_pred, y_true)
    resid = y - _affine_fit(pred, y)
    return float(np.sqrt(np.mean(resid * resid)))


def minimized_mae(y_pred: ArrayLike, y_true: ArrayLike) -> float:
    """MAE of the least-squares affine recalibration of the predictions."""
    pred, y = _pair(y_pred, y_true)
    return float(np.mean(np.abs(y - _affine_fit(pred, y))))


def rmse(y_pred: ArrayLike, y_true: ArrayLike) -> float:
    """Plain RMSE, an upper bound of ``minimized_rmse``."""
    pred, y = _pair(y_pred, y_true)
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def auroc(records: Sequence[EvalRecord]) -> float:
    """Area under ROC for classifying ΔΔG > 0 (destabilizing) by prediction.

    Equals the probability that a random positive is scored above a random
    negative, ties counting one half.

    Raises:
        MetricError: If only one class is present
    """
    y_true = np.array([r.y_true for r in records], dtype=np.float64)
    y_pred = np.array([r.y_pred for r in records], dtype=np.float64)
    positive = y_true > 0.0
    n_pos = int(positive.sum())
    n_neg = len(records) - n_pos
    if n_pos == 0 or n_neg == 0:
        msg = "AUROC needs both positive and non-positive ΔΔG records"
        raise MetricError(msg)
    ranks = stats.rankdata(y_pred)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class PerStructure:
    """Unweighted means of per-structure correlations."""

    pearson: float
    spearman: float
    n_groups: int
    per_group: dict[str, tuple[int, float, float]] = field(default_factory=dict)


def per_structure(
    records: Sequence[EvalRecord], min_size: int = MIN_GROUP_SIZE
) -> PerStructure:
    """Average Pearson and Spearman over structures with ≥ ``min_size`` records.

    Groups whose correlation is undefined (constant values) are skipped
    with a warning.

    Raises:
        MetricError: If no group survives
    """
    groups: dict[str, list[EvalRecord]] = defaultdict(list)
    for record in records:
        groups[record.structure_id].append(record)
    per_group: dict[str, tuple[int, float, float]] = {}
    for structure_id in sorted(groups):
        group = groups[structure_id]
        if len(group) < min_size:
            continue
        xs = [r.y_pred for r in group]
        ys = [r.y_true for r in group]
        try:
            per_group[structure_id] = (len(group), pearson(xs, ys), spearman(xs, ys))
        except MetricError as e:
            logger.warning(f"Skipping structure {structure_id}: {e}")
    if not per_group:
        msg = f"No structure has at least {min_size} usable records"
        raise MetricError(msg)
    return PerStructure(
        pearson=float(np.mean([v[1] for v in per_group.values()])),
        spearman=float(np.mean([v[2] for v in per_group.values()])),
        n_groups=len(per_group),
        per_group=per_group,
    )


@dataclass
class EvalReport:
    """All metrics for one evaluation; undefined metrics are NaN."""

    n_records: int
    metrics: dict[str, float]
    per_structure: PerStructure | None


def _guarded(fn: Callable[..., float], *args: Any) -> float:
    try:
        return float(fn(*args))
    except MetricError as e:
        logger.warning(f"{getattr(fn, '__name__', fn)}: {e}")
        return math.nan


def evaluate(records: Sequence[EvalRecord]) -> EvalReport:
    """Compute every metric; ones that are undefined become NaN."""
    y_pred = [r.y_pred for r in records]
    y_true = [r.y_true for r in records]
    try:
        grouped: PerStructure | None = per_structure(records)
    except MetricError as e:
        logger.warning(f"per-structure metrics unavailable: {e}")
        grouped = None
    metrics = {
        "per_structure_pearson": grouped.pearson if grouped else math.nan,
        "per_structure_spearman": grouped.spearman if grouped else math.nan,
        "pearson": _guarded(pearson, y_pred, y_true),
        "spearman": _guarded(spearman, y_pred, y_true),
        "rmse": _guarded(rmse, y_pred, y_true),
        "minimized_rmse": _guarded(minimized_rmse, y_pred, y_true),
        "minimized_mae": _guarded(minimized_mae, y_pred, y_true),
        "auroc": _guarded(auroc, records),
    }
    return EvalReport(len(records), metrics, grouped)


def format_report(report: EvalReport) -> str:
    """TSV: one row per metric, then a per-structure section."""
    rows = ["metric\tvalue"]
    rows.extend(f"{name}\t{value:.6f}" for name, value in report.metrics.items())
    rows.append(f"n_records\t{report.n_records}")
    if report.per_structure is not None:
        rows.extend(["", "structure\tn\tpearson\tspearman"])
        for sid, (n, p, s) in report.per_structure.per_group.items():
            rows.append(f"{sid}\t{n}\t{p:.6f}\t{s:.6f}")
    return "\n".join(rows) + "\n"
