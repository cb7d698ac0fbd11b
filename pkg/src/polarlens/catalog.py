"""Curated domain catalogs, per-user domain scores and quantile binning."""

from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import UserAggregate, extract_domain

logger = logging.getLogger(__name__)


class Dimension(str, Enum):
    SCIENCE = "science"
    POLITICAL = "political"
    MODERACY = "moderacy"


class Bin(IntEnum):
    NEG = -1
    UNBINNED = 0
    POS = 1


# label -> (dimension, pole value)
POLE_LABELS: dict[str, tuple[Dimension, int]] = {
    "pro_science": (Dimension.SCIENCE, +1),
    "anti_science": (Dimension.SCIENCE, -1),
    "conservative": (Dimension.POLITICAL, +1),
    "liberal": (Dimension.POLITICAL, -1),
    "moderate": (Dimension.MODERACY, +1),
    "hardline": (Dimension.MODERACY, -1),
}

POLE_NAMES: dict[Dimension, dict[int, str]] = {}
for _label, (_dim, _val) in POLE_LABELS.items():
    POLE_NAMES.setdefault(_dim, {})[_val] = _label

_NUMERIC_POLES = {"+1": 1, "1": 1, "-1": -1, "−1": -1}


class CatalogError(ValueError):
    pass


def parse_pole(label: str, dimension: Dimension) -> int:
    """Translate a pole label (``pro_science``, ``+1`` ...) into ``+1``/``-1``."""
    key = label.strip().lower().replace("-", "_").replace(" ", "_")
    if key in _NUMERIC_POLES:
        return _NUMERIC_POLES[key]
    if label.strip() in _NUMERIC_POLES:
        return _NUMERIC_POLES[label.strip()]
    if key not in POLE_LABELS:
        raise CatalogError(f"unknown pole label {label!r}")
    dim, val = POLE_LABELS[key]
    if dim is not dimension:
        raise CatalogError(f"label {label!r} belongs to {dim.value}, not {dimension.value}")
    return val


@dataclass(frozen=True)
class DomainCatalog:
    dimension: Dimension
    pole_of: Mapping[str, int]

    def __post_init__(self):
        bad = {d: v for d, v in self.pole_of.items() if v not in (-1, 1)}
        if bad:
            raise CatalogError(f"pole values must be +1/-1: {bad}")

    def domains(self, pole: int) -> set[str]:
        return {d for d, v in self.pole_of.items() if v == pole}

    def __len__(self) -> int:
        return len(self.pole_of)


def catalog_from_rows(rows: Iterable[tuple[str, str]], dimension: Dimension) -> DomainCatalog:
    pole_of: dict[str, int] = {}
    for raw_domain, label in rows:
        domain = extract_domain(raw_domain) or raw_domain.strip().lower()
        val = parse_pole(str(label), dimension)
        prev = pole_of.get(domain)
        if prev is not None and prev != val:
            raise CatalogError(f"domain {domain!r} listed with conflicting poles")
        pole_of[domain] = val
    return DomainCatalog(dimension, pole_of)


def load_catalog(path: str | Path, dimension: Dimension | str) -> DomainCatalog:
    """Read a ``domain,label`` CSV (header optional)."""
    dimension = Dimension(dimension)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if i == 0 and row[0].strip().lower() == "domain":
                continue
            if len(row) < 2:
                raise CatalogError(f"{path}:{i + 1}: expected domain,label")
            rows.append((row[0], row[1]))
    return catalog_from_rows(rows, dimension)


def with_hardline_superset(moderacy: DomainCatalog, political: DomainCatalog) -> DomainCatalog:
    """Add every political (left or right) domain to the moderacy Hardline pole."""
    pole_of = dict(moderacy.pole_of)
    for domain in political.pole_of:
        if pole_of.get(domain) == +1:
            raise CatalogError(f"domain {domain!r} is political but listed as moderate")
        pole_of[domain] = -1
    return DomainCatalog(Dimension.MODERACY, pole_of)


def load_catalogs(directory: str | Path) -> dict[Dimension, DomainCatalog]:
    """Load ``science.csv``, ``political.csv`` and ``moderacy.csv`` from a directory."""
    directory = Path(directory)
    cats = {}
    for dim in Dimension:
        p = directory / f"{dim.value}.csv"
        if p.exists():
            cats[dim] = load_catalog(p, dim)
    if not cats:
        raise CatalogError(f"no catalog CSVs found in {directory}")
    if Dimension.POLITICAL in cats:
        base = cats.get(Dimension.MODERACY, DomainCatalog(Dimension.MODERACY, {}))
        cats[Dimension.MODERACY] = with_hardline_superset(base, cats[Dimension.POLITICAL])
    return cats


def write_catalog(path: str | Path, catalog: DomainCatalog) -> None:
    names = POLE_NAMES[catalog.dimension]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "label"])
        for d in sorted(catalog.pole_of):
            w.writerow([d, names[catalog.pole_of[d]]])


# --------------------------------------------------------------------------
# Scoring
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DimScore:
    user_id: str
    dimension: Dimension
    delta: float | None
    n_domains: int
    bin: Bin = Bin.UNBINNED
    pole_sum: int = field(default=0, compare=False)


def match_counts(domains: Mapping[str, int], catalog: DomainCatalog) -> tuple[int, int]:
    """Return (sum of pole values, number of matched shares), counting multiplicity."""
    total = 0
    n = 0
    pole_of = catalog.pole_of
    for d, c in domains.items():
        v = pole_of.get(d)
        if v is not None:
            total += v * c
            n += c
    return total, n


def domain_score(agg: UserAggregate, catalog: DomainCatalog, min_domains: int = 3) -> DimScore:
    """Mean pole value over the user's catalog-matched domain shares.

    Scores with fewer than ``min_domains`` matches keep their delta but are
    never binned; with zero matches delta is ``None``.
    """
    total, n = match_counts(agg.shared_domains, catalog)
    delta = total / n if n else None
    return DimScore(agg.user_id, catalog.dimension, delta, n, Bin.UNBINNED, total)


def score_users(
    aggs: Mapping[str, UserAggregate], catalog: DomainCatalog, min_domains: int = 3
) -> list[DimScore]:
    """Scores for every user with at least one matched domain, sorted by user id."""
    out = []
    for uid in sorted(aggs):
        s = domain_score(aggs[uid], catalog, min_domains)
        if s.n_domains:
            out.append(s)
    return out


def nearest_rank_cutoffs(values: list[float], q: float) -> tuple[float, float]:
    """Cutoffs ``(lo, hi)`` marking the bottom and top ``q`` fraction.

    With ``r = ceil(q * n)``, ``lo`` is the r-th smallest and ``hi`` the r-th
    largest value. ``q`` is snapped to a short fraction first so that 0.3 * 10
    means exactly 3.
    """
    if not values:
        raise ValueError("cannot bin an empty score list")
    if not 0 < q <= 0.5:
        raise ValueError(f"q must be in (0, 0.5], got {q}")
    xs = sorted(values)
    n = len(xs)
    r = max(1, math.ceil(Fraction(q).limit_denominator(10**6) * n))
    return xs[r - 1], xs[n - r]


def bin_scores(
    scores: Iterable[DimScore],
    q: float = 0.30,
    min_domains: int = 3,
    cutoffs: tuple[float, float] | None = None,
) -> tuple[list[DimScore], tuple[float, float]]:
    """Assign polar bins using the top/bottom ``q`` cutoffs of eligible scores.

    Eligible scores have a delta and at least ``min_domains`` matches; cutoffs
    come from them unless fixed ``cutoffs`` are passed. Ties at a cutoff fall
    in the pole. Everything else stays Unbinned.
    """
    scores = list(scores)
    eligible = [s for s in scores if s.delta is not None and s.n_domains >= min_domains]
    if cutoffs is None:
        lo, hi = nearest_rank_cutoffs([s.delta for s in eligible], q)
    else:
        lo, hi = cutoffs
        if not eligible:
            raise ValueError("cannot bin an empty score list")
    # a value can sit on both cutoffs only when lo == hi; its tied block
    # goes to the side of the median it mostly occupies
    tie_pole = Bin.UNBINNED
    if lo >= hi and eligible:
        xs = sorted(s.delta for s in eligible)
        first = bisect.bisect_left(xs, lo)
        last = bisect.bisect_right(xs, lo) - 1
        mid2, center2 = first + last, len(xs) - 1
        tie_pole = Bin.NEG if mid2 < center2 else Bin.POS if mid2 > center2 else Bin.UNBINNED
        logger.warning("cutoffs coincide at %s; tied scores assigned to %s", lo, tie_pole.name)
    out = []
    for s in scores:
        b = Bin.UNBINNED
        if s.delta is not None and s.n_domains >= min_domains:
            pos, neg = s.delta >= hi, s.delta <= lo
            if pos and neg:
                b = tie_pole
            elif pos:
                b = Bin.POS
            elif neg:
                b = Bin.NEG
        out.append(replace(s, bin=b))
    return out, (lo, hi)


def cross_dimension_table(
    scores_by_dim: Mapping[Dimension, Iterable[DimScore]], min_domains: int = 3
) -> dict[str, dict[Dimension, DimScore]]:
    """Users with an eligible score on every dimension, keyed by user id."""
    per_dim = {}
    for dim in Dimension:
        per_dim[dim] = {
            s.user_id: s
            for s in scores_by_dim.get(dim, ())
            if s.delta is not None and s.n_domains >= min_domains
        }
    common = set.intersection(*(set(m) for m in per_dim.values()))
    return {uid: {dim: per_dim[dim][uid] for dim in Dimension} for uid in sorted(common)}


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------

SCORE_COLUMNS = ["user_id", "dim", "delta", "n", "bin"]


def write_scores(path: str | Path, scores: Iterable[DimScore]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            delta = "" if s.delta is None else repr(s.delta)
            w.writerow([s.user_id, s.dimension.value, delta, s.n_domains, int(s.bin)])


def read_scores(path: str | Path) -> dict[Dimension, list[DimScore]]:
    out: dict[Dimension, list[DimScore]] = {d: [] for d in Dimension}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            dim = Dimension(row["dim"])
            delta = float(row["delta"]) if row["delta"] else None
            out[dim].append(DimScore(row["user_id"], dim, delta, int(row["n"]), Bin(int(row["bin"]))))
    return out


def write_cutoffs(path: str | Path, cutoffs: Mapping[Dimension, tuple[float, float]], q: float, min_domains: int) -> None:
    doc = {
        "q": q,
        "min_domains": min_domains,
        "cutoffs": {d.value: {"lo": lo, "hi": hi} for d, (lo, hi) in cutoffs.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def score_bin_index(score: DimScore, bins: int) -> int:
    """Index of the left-closed equal-width bin on [-1, 1] holding ``score.delta``; +1 goes last."""
    # integer arithmetic when the stored numerator reproduces delta, so
    # rational scores sitting exactly on an edge are not misplaced by rounding
    n, total = score.n_domains, score.pole_sum
    if n and total / n == score.delta:
        i = (total + n) * bins // (2 * n)
    else:
        i = math.floor((score.delta + 1.0) * bins / 2.0)
    return min(max(i, 0), bins - 1)


def domain_histogram(scores: Iterable[DimScore], bins: int = 20) -> list[int]:
    """Counts of eligible deltas over ``bins`` equal-width bins on [-1, 1]."""
    counts = [0] * bins
    for s in scores:
        if s.delta is not None:
            counts[score_bin_index(s, bins)] += 1
    return counts

