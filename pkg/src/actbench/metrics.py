"""Action-fidelity metrics: instruction-execution consistency, displacement
errors, confusion matrices, and per-category aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AlignmentError, FrameError, InvalidInputError, SchemaError
from .geometry import Trajectory
from .labeler import BenchCategory


@dataclass(frozen=True)
class LabelPair:
    """One instructed/estimated category pair for a benchmark sample."""

    instructed: BenchCategory
    estimated: Optional[BenchCategory]
    sample_id: str = ""


def iec(pairs: Sequence[LabelPair]) -> float:
    """Fraction of pairs whose estimated category matches the instructed one.

    A missing estimate (None) never matches.
    """
    if len(pairs) == 0:
        raise InvalidInputError("IEC needs at least one label pair")
    matches = sum(1 for p in pairs if p.estimated is p.instructed)
    return matches / len(pairs)


def _check_comparable(instructed: Trajectory, estimated: Trajectory) -> None:
    if instructed.frame != estimated.frame:
        raise FrameError(
            f"trajectories are in different frames: {instructed.frame!r} vs {estimated.frame!r}"
        )


def ade(instructed: Trajectory, estimated: Trajectory) -> float:
    """Average displacement error: mean Euclidean distance over matched points.

    Both trajectories must have the same point count; resample with
    :func:`actbench.geometry.resample_by_time` onto shared timestamps first
    if they do not.
    """
    _check_comparable(instructed, estimated)
    if len(instructed) != len(estimated):
        raise AlignmentError(
            f"point counts differ ({len(instructed)} vs {len(estimated)}); "
            "resample_by_time both trajectories onto shared timestamps first"
        )
    deltas = instructed.xy() - estimated.xy()
    return float(np.mean(np.hypot(deltas[:, 0], deltas[:, 1])))


def fde(instructed: Trajectory, estimated: Trajectory) -> float:
    """Final displacement error: Euclidean distance between the last points."""
    _check_comparable(instructed, estimated)
    a, b = instructed.points[-1], estimated.points[-1]
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Instructed-vs-estimated category counts with row-normalized ratios.

    Columns follow ``categories`` plus one trailing column for missing
    estimates (None). Rows with no samples have all-zero ratios.
    """

    categories: tuple[BenchCategory, ...]
    counts: np.ndarray
    row_ratios: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def weighted_diagonal(self) -> float:
        """Diagonal mass over all samples; equals IEC over the same pairs."""
        total = int(self.counts.sum())
        if total == 0:
            raise InvalidInputError("confusion matrix is empty")
        return float(np.trace(self.counts[:, : len(self.categories)])) / total


def confusion_matrix(
    pairs: Sequence[LabelPair], categories: Sequence[BenchCategory]
) -> ConfusionMatrix:
    """Count (instructed, estimated) occurrences over an ordered category list."""
    cats = tuple(categories)
    if len(set(cats)) != len(cats):
        raise SchemaError("confusion matrix categories must be unique")
    index = {cat: i for i, cat in enumerate(cats)}
    none_col = len(cats)
    counts = np.zeros((len(cats), len(cats) + 1), dtype=np.int64)
    for pair in pairs:
        if pair.instructed not in index:
            raise SchemaError(f"unknown instructed category {pair.instructed!r}")
        if pair.estimated is not None and pair.estimated not in index:
            raise SchemaError(f"unknown estimated category {pair.estimated!r}")
        row = index[pair.instructed]
        col = none_col if pair.estimated is None else index[pair.estimated]
        counts[row, col] += 1
    ratios = np.zeros_like(counts, dtype=float)
    row_totals = counts.sum(axis=1)
    nonzero = row_totals > 0
    ratios[nonzero] = counts[nonzero] / row_totals[nonzero, None]
    return ConfusionMatrix(cats, counts, ratios)


@dataclass(frozen=True)
class CategoryStats:
    """Mean displacement errors over one group of samples."""

    count: int
    mean_ade: Optional[float]
    mean_fde: Optional[float]


@dataclass(frozen=True)
class CategoryReport:
    """Per-category displacement statistics plus a record-weighted overall row."""

    categories: tuple[BenchCategory, ...]
    per_category: dict[BenchCategory, CategoryStats]
    overall: CategoryStats


def aggregate_by_category(
    records: Iterable[tuple[BenchCategory, float, float]],
    categories: Sequence[BenchCategory],
) -> CategoryReport:
    """Average (category, ade, fde) records per category.

    Empty categories get None means (rendered as "N/A" downstream); the
    overall row averages over all records, not over category means.
    """
    cats = tuple(categories)
    buckets: dict[BenchCategory, list[tuple[float, float]]] = {cat: [] for cat in cats}
    all_values: list[tuple[float, float]] = []
    for category, ade_value, fde_value in records:
        if category not in buckets:
            raise SchemaError(f"unknown category {category!r}")
        if not (math.isfinite(ade_value) and math.isfinite(fde_value)):
            raise InvalidInputError("ADE/FDE values must be finite")
        buckets[category].append((ade_value, fde_value))
        all_values.append((ade_value, fde_value))

    def stats(values: list[tuple[float, float]]) -> CategoryStats:
        if not values:
            return CategoryStats(0, None, None)
        count = len(values)
        return CategoryStats(
            count,
            sum(v[0] for v in values) / count,
            sum(v[1] for v in values) / count,
        )

    return CategoryReport(
        categories=cats,
        per_category={cat: stats(buckets[cat]) for cat in cats},
        overall=stats(all_values),
    )
