"""Downstream analyses over classified users.

Temporal drift of cumulative domain scores, ideology-group composition per
biweekly bucket, group hashtags, per-state group fractions and the
two-dimension score heatmaps.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .catalog import DimScore, Dimension, DomainCatalog, match_counts, score_bin_index
from .corpus import UserAggregate

logger = logging.getLogger(__name__)


class AnalysisError(ValueError):
    pass


# --------------------------------------------------------------------------
# Time buckets
# --------------------------------------------------------------------------

PAPER_INTERVALS = (
    (date(2020, 1, 21), date(2020, 1, 31)),
    (date(2020, 2, 1), date(2020, 2, 15)),
    (date(2020, 2, 16), date(2020, 2, 29)),
    (date(2020, 3, 1), date(2020, 3, 16)),
    (date(2020, 3, 17), date(2020, 3, 31)),
    (date(2020, 4, 1), date(2020, 4, 15)),
    (date(2020, 4, 16), date(2020, 5, 1)),
)


@dataclass(frozen=True)
class BiweeklySpec:
    """Ordered, non-overlapping inclusive date intervals; buckets are numbered from 1."""

    intervals: tuple[tuple[date, date], ...]

    def __post_init__(self):
        if not self.intervals:
            raise AnalysisError("need at least one interval")
        prev_end = None
        for start, end in self.intervals:
            if end < start:
                raise AnalysisError(f"interval {start}..{end} is reversed")
            if prev_end is not None and start <= prev_end:
                raise AnalysisError(f"interval starting {start} overlaps its predecessor")
            prev_end = end

    @classmethod
    def default(cls) -> "BiweeklySpec":
        return cls(PAPER_INTERVALS)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def buckets(self) -> range:
        return range(1, len(self.intervals) + 1)

    def bucket_of(self, ts: datetime | date) -> int | None:
        d = ts.astimezone(timezone.utc).date() if isinstance(ts, datetime) else ts
        for i, (start, end) in enumerate(self.intervals, 1):
            if start <= d <= end:
                return i
        return None


# --------------------------------------------------------------------------
# Drift
# --------------------------------------------------------------------------


def delta_series(paths: Mapping[str, Sequence[float]] | Sequence[Sequence[float]]) -> list[float]:
    """Mean absolute change of users' scores between consecutive buckets.

    ``paths`` holds one score sequence per user (same length for all). The
    value at position ``t-1`` of the result is ``sum_i |d[i][t] - d[i][t-1]| / N``.
    """
    rows = list(paths.values()) if isinstance(paths, Mapping) else list(paths)
    if not rows:
        raise AnalysisError("no users to compute drift over")
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise AnalysisError("each path needs at least two buckets")
    return (np.abs(np.diff(arr, axis=1)).sum(axis=0) / arr.shape[0]).tolist()


def cumulative_paths(
    aggs: Mapping[str, UserAggregate], catalog: DomainCatalog, spec: BiweeklySpec
) -> tuple[dict[str, list[float]], dict[str, list[int]]]:
    """Cumulative domain score per bucket for users with matches in every bucket.

    Returns the score paths and the per-bucket matched-domain counts.
    """
    paths = {}
    counts = {}
    for uid in sorted(aggs):
        per_bucket = aggs[uid].per_bucket_domains
        sums, ns = [], []
        for b in spec.buckets:
            s, n = match_counts(per_bucket.get(b, {}), catalog)
            if n == 0:
                break
            sums.append(s)
            ns.append(n)
        else:
            cs = np.cumsum(sums)
            cn = np.cumsum(ns)
            paths[uid] = (cs / cn).tolist()
            counts[uid] = ns
    return paths, counts


def drift_table(
    aggs: Mapping[str, UserAggregate], catalogs: Mapping[Dimension, DomainCatalog], spec: BiweeklySpec
) -> dict[Dimension, tuple[int, list[float]]]:
    """Per dimension: number of consistent users and their drift sequence."""
    out = {}
    for dim, cat in catalogs.items():
        paths, _ = cumulative_paths(aggs, cat, spec)
        if paths:
            out[dim] = (len(paths), delta_series(paths))
        else:
            logger.warning("no users share %s domains in every bucket", dim.value)
    return out


# --------------------------------------------------------------------------
# Ideology groups
# --------------------------------------------------------------------------


class IdeologyGroup(str, Enum):
    PROSCI_LEFT = "ProSci-Left"
    PROSCI_MODERATE = "ProSci-Moderate"
    PROSCI_RIGHT = "ProSci-Right"
    ANTISCI_LEFT = "AntiSci-Left"
    ANTISCI_MODERATE = "AntiSci-Moderate"
    ANTISCI_RIGHT = "AntiSci-Right"


GROUPS = tuple(IdeologyGroup)


def assign_group(science: int | None, moderacy: int | None, political: int | None = None) -> IdeologyGroup | None:
    """Map pole labels (+1/-1, or None if unknown) to one of six groups.

    Moderate users ignore the political label; Hardline users need it.
    """
    if science not in (1, -1) or moderacy not in (1, -1):
        return None
    sci = "PROSCI" if science == 1 else "ANTISCI"
    if moderacy == 1:
        return IdeologyGroup[f"{sci}_MODERATE"]
    if political not in (1, -1):
        return None
    return IdeologyGroup[f"{sci}_{'RIGHT' if political == 1 else 'LEFT'}"]


def assign_groups(labels: Mapping[Dimension, Mapping[str, int]]) -> dict[str, IdeologyGroup]:
    sci = labels.get(Dimension.SCIENCE, {})
    mod = labels.get(Dimension.MODERACY, {})
    pol = labels.get(Dimension.POLITICAL, {})
    out = {}
    for uid in sorted(set(sci) & set(mod)):
        g = assign_group(sci[uid], mod[uid], pol.get(uid))
        if g is not None:
            out[uid] = g
    return out


@dataclass
class FractionRow:
    key: object
    n: int
    fractions: dict[IdeologyGroup, float] = field(default_factory=dict)
    flag: str | None = None


def _fractions(counts: Counter, n: int) -> dict[IdeologyGroup, float]:
    return {g: counts[g] / n for g in GROUPS}


def group_activity_series(
    groups: Mapping[str, IdeologyGroup], aggs: Mapping[str, UserAggregate], spec: BiweeklySpec
) -> list[FractionRow]:
    """Fraction of active classified users per group, one row per bucket.

    A user is active in a bucket if they posted at least once in it.
    """
    rows = []
    for b in spec.buckets:
        counts: Counter = Counter()
        for uid, g in groups.items():
            agg = aggs.get(uid)
            if agg is not None and agg.per_bucket_tweets.get(b, 0) > 0:
                counts[g] += 1
        n = sum(counts.values())
        if n == 0:
            rows.append(FractionRow(b, 0, {}, "empty"))
        else:
            rows.append(FractionRow(b, n, _fractions(counts, n)))
    return rows


def state_fractions(
    groups: Mapping[str, IdeologyGroup], states: Mapping[str, str | None], min_state_users: int = 50
) -> list[FractionRow]:
    """Per-state share of classified users in each group.

    States with fewer than ``min_state_users`` classified users are
    suppressed: their row carries the count and a flag but no fractions.
    """
    by_state: dict[str, Counter] = {}
    for uid, g in groups.items():
        st = states.get(uid)
        if st:
            by_state.setdefault(st, Counter())[g] += 1
    rows = []
    for st in sorted(by_state):
        counts = by_state[st]
        n = sum(counts.values())
        if n < min_state_users:
            rows.append(FractionRow(st, n, {}, "suppressed"))
        else:
            rows.append(FractionRow(st, n, _fractions(counts, n)))
    return rows


def _ranked(counts: Counter) -> list[tuple[str, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def top_group_hashtags(
    groups: Mapping[str, IdeologyGroup], aggs: Mapping[str, UserAggregate], k: int = 50
) -> dict[IdeologyGroup, list[tuple[str, int]]]:
    """Most frequent hashtags per group after dropping those common to all six.

    "Common" means present in every group's top-``k`` list before filtering.
    """
    totals: dict[IdeologyGroup, Counter] = {g: Counter() for g in GROUPS}
    for uid, g in groups.items():
        agg = aggs.get(uid)
        if agg is not None:
            totals[g].update(agg.hashtag_counts)
    top_sets = [{h for h, _ in _ranked(totals[g])[:k]} for g in GROUPS]
    common = set.intersection(*top_sets)
    return {g: [(h, c) for h, c in _ranked(totals[g]) if h not in common][:k] for g in GROUPS}


# --------------------------------------------------------------------------
# Heatmaps
# --------------------------------------------------------------------------


def score_heatmap(
    table: Mapping[str, Mapping[Dimension, DimScore]], bins: int = 20
) -> dict[tuple[Dimension, Dimension], np.ndarray]:
    """User counts on a ``bins x bins`` grid of equal-width cells over [-1, 1]^2.

    Rows index the science score, columns the political or moderacy score.
    Cells are closed on the left; a score of exactly +1 lands in the last bin.
    """
    if bins < 1:
        raise AnalysisError("bins must be positive")
    out = {}
    sci = [score_bin_index(row[Dimension.SCIENCE], bins) for row in table.values()]
    for other in (Dimension.POLITICAL, Dimension.MODERACY):
        grid = np.zeros((bins, bins), dtype=np.int64)
        cols = [score_bin_index(row[other], bins) for row in table.values()]
        np.add.at(grid, (np.asarray(sci, dtype=np.int64), np.asarray(cols, dtype=np.int64)), 1)
        out[(Dimension.SCIENCE, other)] = grid
    return out
