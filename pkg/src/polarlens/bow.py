"""Seed-hashtag co-occurrence vocabularies and TF-IDF user features."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import Dimension
from .corpus import TweetRecord, UserAggregate, normalize_hashtag

logger = logging.getLogger(__name__)

# (positive-pole seeds, negative-pole seeds)
DEFAULT_SEEDS: dict[Dimension, tuple[tuple[str, ...], tuple[str, ...]]] = {
    Dimension.SCIENCE: (("stayhome",), ("plandemic",)),
    Dimension.POLITICAL: (("chinavirus",), ("trumpvirus",)),
    Dimension.MODERACY: (("pandemic", "lockdown"), ("trumpvirus", "chinavirus")),
}


@dataclass
class HashtagVocab:
    dimension: Dimension | None
    seeds_pos: list[str]
    seeds_neg: list[str]
    vocab: list[str]
    idf: dict[str, float] = field(default_factory=dict)
    cooccur_pos: list[tuple[str, int]] = field(default_factory=list)
    cooccur_neg: list[tuple[str, int]] = field(default_factory=list)

    def position(self) -> dict[str, int]:
        return {h: i for i, h in enumerate(self.vocab)}

    def to_json(self) -> dict:
        return {
            "dimension": None if self.dimension is None else self.dimension.value,
            "seeds_pos": self.seeds_pos,
            "seeds_neg": self.seeds_neg,
            "vocab": self.vocab,
            "idf": [self.idf.get(h) for h in self.vocab],
            "cooccur_pos": self.cooccur_pos,
            "cooccur_neg": self.cooccur_neg,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HashtagVocab":
        vocab = list(obj["vocab"])
        idf = {h: v for h, v in zip(vocab, obj.get("idf", [])) if v is not None}
        return cls(
            dimension=None if obj.get("dimension") is None else Dimension(obj["dimension"]),
            seeds_pos=list(obj["seeds_pos"]),
            seeds_neg=list(obj["seeds_neg"]),
            vocab=vocab,
            idf=idf,
            cooccur_pos=[tuple(x) for x in obj.get("cooccur_pos", [])],
            cooccur_neg=[tuple(x) for x in obj.get("cooccur_neg", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "HashtagVocab":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SparseFeatures:
    user_id: str
    indices: tuple[int, ...]
    values: tuple[float, ...]


def _norm_seeds(seeds: Iterable[str]) -> list[str]:
    out = []
    for s in seeds:
        h = normalize_hashtag(s)
        if h and h not in out:
            out.append(h)
    return out


def _cooccurrence(units: Iterable[set[str]], seeds: set[str]) -> Counter:
    counts: Counter = Counter()
    for tags in units:
        if tags & seeds:
            counts.update(tags - seeds)
    return counts


def cooccur_vocab(
    records: Iterable[TweetRecord] | None,
    seeds_pos: Sequence[str],
    seeds_neg: Sequence[str],
    k: int = 100,
    unit: str = "tweet",
    aggs: Mapping[str, UserAggregate] | None = None,
    dimension: Dimension | None = None,
) -> HashtagVocab:
    """Top-``k`` hashtags co-occurring with each seed group.

    A hashtag's score for a group is the number of tweets (``unit="tweet"``)
    or users (``unit="user"``, which reads ``aggs``) whose hashtags include
    it together with any of the group's seeds. The group's own seeds are not
    candidates. The vocabulary is the positive list followed by the negative
    list, duplicates removed. Ties rank alphabetically.
    """
    pos, neg = _norm_seeds(seeds_pos), _norm_seeds(seeds_neg)
    if not pos or not neg:
        raise ValueError("both seed groups must be nonempty")
    if unit == "tweet":
        if records is None:
            raise ValueError("tweet-level co-occurrence needs records")
        units = [set(r.hashtags) for r in records if r.hashtags]
    elif unit == "user":
        if aggs is None:
            raise ValueError("user-level co-occurrence needs aggregates")
        units = [set(a.hashtag_counts) for a in aggs.values() if a.hashtag_counts]
    else:
        raise ValueError(f"unknown co-occurrence unit {unit!r}")

    seen = set().union(*units) if units else set()
    for s in pos + neg:
        if s not in seen:
            logger.warning("seed hashtag #%s never appears in the corpus", s)

    ranked = []
    for group in (pos, neg):
        counts = _cooccurrence(units, set(group))
        top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        if len(top) < k:
            logger.warning("seed group %s yields only %d co-occurring hashtags", group, len(top))
        ranked.append(top)
    vocab: list[str] = []
    for top in ranked:
        for h, _ in top:
            if h not in vocab:
                vocab.append(h)
    return HashtagVocab(dimension, pos, neg, vocab, {}, ranked[0], ranked[1])


def tfidf_features(
    aggs: Mapping[str, UserAggregate], vocab: HashtagVocab, refit_idf: bool = True
) -> tuple[list[SparseFeatures], dict[str, float], int]:
    """TF-IDF vectors over ``vocab`` for users with at least one vocabulary hashtag.

    tf is the raw count; ``idf = ln((1 + N) / (1 + df)) + 1`` over the N users
    with a nonzero vector. With ``refit_idf=False`` the idf stored on ``vocab``
    is reused. Returns the features, the idf table and the number of users
    excluded for having an empty vector.
    """
    if not vocab.vocab:
        raise ValueError("empty vocabulary")
    pos = vocab.position()
    rows: list[tuple[str, list[tuple[int, int]]]] = []
    excluded = 0
    for uid in sorted(aggs):
        tf = sorted((pos[h], c) for h, c in aggs[uid].hashtag_counts.items() if h in pos and c > 0)
        if tf:
            rows.append((uid, tf))
        else:
            excluded += 1

    if refit_idf:
        n = len(rows)
        df: Counter = Counter()
        for _, tf in rows:
            df.update(i for i, _ in tf)
        idf = {h: math.log((1 + n) / (1 + df[i])) + 1.0 for h, i in pos.items()}
        vocab.idf = idf
    else:
        idf = vocab.idf

    by_index = {pos[h]: v for h, v in idf.items()}
    feats = []
    for uid, tf in rows:
        idx = tuple(i for i, _ in tf)
        vals = tuple(c * by_index[i] for i, c in tf)
        feats.append(SparseFeatures(uid, idx, vals))
    return feats, idf, excluded
