"""Song-frequency statistics under full, partial, and proxy information."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Playlist, SongId
from .errors import SchemaError


@dataclass(frozen=True)
class SongFrequencyTable:
    """Exact occurrence counts of songs over a set of playlists."""

    counts: dict[SongId, int]
    total: int

    def relative(self, song: SongId) -> float:
        return self.counts.get(song, 0) / self.total if self.total else 0.0


@dataclass(frozen=True)
class FrequencyEstimate:
    """Estimated relative song frequencies with provenance.

    For "full" and "partial" provenance a song absent from the table is a
    known zero (the collective observed data and did not see it). For "proxy"
    provenance absent songs are unknown: unknown is not the same as rare, so
    they are ineligible as direct anchors.
    """

    values: dict[SongId, float]
    provenance: str
    unknown_is_zero: bool = True

    def lookup(self, song: SongId) -> float | None:
        if song in self.values:
            return self.values[song]
        return 0.0 if self.unknown_is_zero else None


def count_frequencies(playlists: Iterable[Playlist]) -> SongFrequencyTable:
    """Exact multiset counts of song occurrences."""
    counts: Counter[SongId] = Counter()
    for p in playlists:
        counts.update(p.tracks)
    if not counts:
        raise ValueError("no playlists to count")
    return SongFrequencyTable(counts=dict(counts), total=sum(counts.values()))


def estimate_full(table: SongFrequencyTable) -> FrequencyEstimate:
    """Full-information estimate: the true relative training frequencies."""
    values = {s: c / table.total for s, c in table.counts.items()}
    return FrequencyEstimate(values=values, provenance="full")


def estimate_partial(
    collective: Sequence[Playlist],
    remaining: Sequence[Playlist],
    beta: float,
    seed: int,
) -> FrequencyEstimate:
    """Estimate from the collective's playlists plus a beta-fraction sample.

    beta=0 uses only the collective's own playlists; beta=1 uses everything.
    Songs unseen in the pooled sample get estimate 0.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must be in [0, 1]")
    pool = list(collective)
    n_extra = int(np.floor(beta * len(remaining)))
    if n_extra > 0:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(remaining), size=n_extra, replace=False))
        pool.extend(remaining[i] for i in idx)
    if not pool:
        return FrequencyEstimate(values={}, provenance=f"partial({beta})")
    table = count_frequencies(pool)
    values = {s: c / table.total for s, c in table.counts.items()}
    return FrequencyEstimate(values=values, provenance=f"partial({beta})")


def estimate_proxy(path: str | Path) -> FrequencyEstimate:
    """Load proxy stream counts from a CSV with header song_id,stream_count.

    Counts are normalized to a relative scale; only rank order is meaningful.
    Songs not present in the file are unknown (excluded from anchor candidacy).
    """
    raw: dict[SongId, float] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is not None and not {"song_id", "stream_count"}.issubset(reader.fieldnames):
            raise SchemaError(f"{path}: expected header song_id,stream_count", field="song_id")
        for row in reader:
            try:
                count = float(row["stream_count"])
            except (TypeError, ValueError) as e:
                raise SchemaError(f"{path}: non-numeric stream_count for {row['song_id']}", field="stream_count") from e
            if count < 0:
                raise SchemaError(f"{path}: negative stream_count for {row['song_id']}", field="stream_count")
            raw[row["song_id"]] = count
    total = sum(raw.values())
    values = {s: (c / total if total > 0 else 0.0) for s, c in raw.items()}
    return FrequencyEstimate(values=values, provenance="proxy", unknown_is_zero=False)


@dataclass(frozen=True)
class InequalityReport:
    gini: float
    lorenz: list[tuple[float, float]]

    def to_json(self) -> dict:
        return {"gini": self.gini, "lorenz": [[x, y] for x, y in self.lorenz]}


def gini(values: Sequence[float]) -> float:
    """Gini coefficient: mean absolute pairwise difference over twice the mean.

    Computed with the exact sorted-index formula, O(n log n).
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0 or np.any(x < 0):
        raise ValueError("gini requires non-negative values")
    total = x.sum()
    if total <= 0:
        raise ValueError("gini undefined for all-zero input")
    n = x.size
    i = np.arange(1, n + 1)
    return float((2.0 * np.sum(i * x)) / (n * total) - (n + 1) / n)


def lorenz(values: Sequence[float]) -> list[tuple[float, float]]:
    """Lorenz curve points from (0,0) to (1,1), values sorted ascending."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0 or np.any(x < 0):
        raise ValueError("lorenz requires non-negative values")
    total = x.sum()
    if total <= 0:
        raise ValueError("lorenz undefined for all-zero input")
    cum = np.cumsum(x) / total
    cum[-1] = 1.0
    points = [(0.0, 0.0)]
    n = x.size
    points.extend(((k + 1) / n, float(cum[k])) for k in range(n))
    points[-1] = (1.0, 1.0)
    return points


def inequality_report(values: Sequence[float]) -> InequalityReport:
    return InequalityReport(gini=gini(values), lorenz=lorenz(values))


@dataclass(frozen=True)
class EstimateComparison:
    """Per-anchor (estimated, true) probability pairs plus a gap summary."""

    pairs: list[tuple[SongId, float, float]]
    mean_log_ratio: float
    n_missing_truth: int


def compare_estimates(
    estimate: FrequencyEstimate,
    truth: SongFrequencyTable,
    anchors: Sequence[SongId],
) -> EstimateComparison:
    """Emit (estimated, true) probability pairs for the targeted anchors.

    The gap statistic is the mean of log(estimated / true) over anchors where
    both sides are positive; anchors absent from the truth table are reported
    with true=0 and excluded from the mean.
    """
    pairs = []
    ratios = []
    missing = 0
    for a in anchors:
        est = estimate.lookup(a) or 0.0
        true = truth.relative(a)
        if true == 0.0:
            missing += 1
        pairs.append((a, est, true))
        if est > 0 and true > 0:
            ratios.append(math.log(est / true))
    mean_ratio = float(np.mean(ratios)) if ratios else 0.0
    return EstimateComparison(pairs=pairs, mean_log_ratio=mean_ratio, n_missing_truth=missing)
