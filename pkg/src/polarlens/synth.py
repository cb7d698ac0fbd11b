"""Synthetic corpora and graphs with planted ideology labels.

The generator emits records in the same line format the ingest stage reads,
together with matching domain catalogs, seed sets and a word-vector table,
so every pipeline stage can be checked against known ground truth.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .analysis import GROUPS, BiweeklySpec, IdeologyGroup
from .catalog import Dimension, DomainCatalog, write_catalog
from .corpus import US_STATES, format_timestamp
from .embed import EmbeddingTable, write_vectors
from .graph import RetweetGraph, SeedSet, write_seeds

logger = logging.getLogger(__name__)


class SynthError(ValueError):
    pass


# group -> (science pole, moderacy pole, political pole or 0)
GROUP_POLES: dict[IdeologyGroup, tuple[int, int, int]] = {
    IdeologyGroup.PROSCI_LEFT: (1, -1, -1),
    IdeologyGroup.PROSCI_MODERATE: (1, 1, 0),
    IdeologyGroup.PROSCI_RIGHT: (1, -1, 1),
    IdeologyGroup.ANTISCI_LEFT: (-1, -1, -1),
    IdeologyGroup.ANTISCI_MODERATE: (-1, 1, 0),
    IdeologyGroup.ANTISCI_RIGHT: (-1, -1, 1),
}

POOL_PREFIX = {
    "pro_science": "prosci",
    "anti_science": "antisci",
    "liberal": "lib",
    "conservative": "con",
    "moderate": "mod",
}

SEED_TAGS = {
    "pro_science": ["stayhome"],
    "anti_science": ["plandemic"],
    "liberal": ["trumpvirus"],
    "conservative": ["chinavirus"],
    "moderate": ["pandemic", "lockdown"],
}

COMMON_TAGS = ["covid19", "coronavirus", "covid", "news", "usa", "health", "breaking", "update"]

DEFAULT_STATES = ["CA", "TX", "NY", "FL", "WA", "GA", "OH", "PA", "IL", "AZ"]

LOCATION_FORMS = ["{city}, {code}", "{name}", "{name}, USA", "{code}"]

CITIES = {
    "CA": "Los Angeles", "TX": "Austin", "NY": "Brooklyn", "FL": "Miami", "WA": "Seattle",
    "GA": "Atlanta", "OH": "Columbus", "PA": "Pittsburgh", "IL": "Chicago", "AZ": "Phoenix",
}


@dataclass
class SynthSpec:
    n_users: int = 600
    mixture: dict[str, float] = field(default_factory=lambda: {g.value: 1 / 6 for g in GROUPS})
    tweets_per_user: tuple[int, int] = (10, 20)
    url_prob: float = 0.6
    neutral_url_prob: float = 0.1
    hashtag_prob: float = 0.8
    word_purity: float = 0.5
    domain_purity: float = 1.0
    tag_purity: float = 0.7
    moderate_political_rate: float = 0.0
    words_per_tweet: int = 10
    p_in: float = 0.05
    p_out: float = 0.001
    seed_frac: float = 0.05
    n_domains_per_pole: int = 20
    n_tags_per_pole: int = 15
    n_words_per_pole: int = 40
    n_common_words: int = 150
    vector_dim: int = 32
    vector_noise: float = 0.35
    states: list[str] = field(default_factory=lambda: list(DEFAULT_STATES))
    location_missing: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_users < 1:
            raise SynthError("n_users must be positive")
        unknown = set(self.mixture) - {g.value for g in GROUPS}
        if unknown:
            raise SynthError(f"unknown groups in mixture: {sorted(unknown)}")
        w = np.array(list(self.mixture.values()), dtype=float)
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise SynthError("mixture weights must be nonnegative and sum to 1")
        if not 0 <= self.p_out <= 1 or not 0 <= self.p_in <= 1:
            raise SynthError("edge probabilities must lie in [0, 1]")
        if self.p_in <= self.p_out:
            logger.warning("p_in <= p_out: communities are not recoverable")
        lo, hi = self.tweets_per_user
        if lo < 1 or hi < lo:
            raise SynthError("tweets_per_user must be a nonempty positive range")

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "SynthSpec":
        obj = dict(obj)
        if "tweets_per_user" in obj:
            obj["tweets_per_user"] = tuple(obj["tweets_per_user"])
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class TruthRow:
    user_id: str
    group: IdeologyGroup
    science: int
    moderacy: int
    political: int
    lean: int
    state: str | None


@dataclass
class SynthCorpus:
    records: list[dict]
    truth: dict[str, TruthRow]
    catalogs: dict[Dimension, DomainCatalog]
    seeds: dict[Dimension, SeedSet]
    vectors: EmbeddingTable
    spec: SynthSpec

    def write_aux(self, directory: str | Path) -> dict[str, Path]:
        """Write catalogs, seeds and word vectors under ``directory``."""
        d = Path(directory)
        (d / "catalogs").mkdir(parents=True, exist_ok=True)
        (d / "seeds").mkdir(parents=True, exist_ok=True)
        for dim, cat in self.catalogs.items():
            write_catalog(d / "catalogs" / f"{dim.value}.csv", cat)
        for dim, seeds in self.seeds.items():
            write_seeds(d / "seeds" / f"{dim.value}.tsv", seeds)
        write_vectors(d / "vectors.txt", self.vectors)
        return {"catalogs": d / "catalogs", "seeds": d / "seeds", "vectors": d / "vectors.txt"}

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write corpus, truth and the auxiliary inputs under ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": d / "corpus.jsonl", "truth": d / "truth.csv"}
        write_corpus(paths["corpus"], self.records)
        write_truth(paths["truth"], self.truth)
        paths.update(self.write_aux(d))
        return paths


def write_corpus(path: str | Path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def write_truth(path: str | Path, truth: Mapping[str, TruthRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "group", "science", "moderacy", "political", "lean", "state"])
        for uid in sorted(truth):
            t = truth[uid]
            w.writerow([uid, t.group.value, t.science, t.moderacy, t.political, t.lean, t.state or ""])


def read_truth(path: str | Path) -> dict[str, TruthRow]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["user_id"]] = TruthRow(
                row["user_id"], IdeologyGroup(row["group"]), int(row["science"]), int(row["moderacy"]),
                int(row["political"]), int(row["lean"]), row["state"] or None,
            )
    return out


# --------------------------------------------------------------------------
# Graph generators
# --------------------------------------------------------------------------


def sample_block_edges(rng: np.random.Generator, block: np.ndarray, prob: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges i -> j (i != j) drawn independently with ``prob[block[i], block[j]]``."""
    n = len(block)
    src, dst = [], []
    for i in range(n):
        hit = rng.random(n) < prob[block[i], block]
        hit[i] = False
        js = np.flatnonzero(hit)
        src.append(np.full(len(js), i, dtype=np.int64))
        dst.append(js)
    if not src:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(src), np.concatenate(dst)


def planted_partition_graph(
    sizes: Sequence[int], p_in: float, p_out: float, rng_seed: int = 0
) -> tuple[RetweetGraph, np.ndarray]:
    """Directed planted-partition graph; returns the graph and each node's block."""
    rng = np.random.default_rng(rng_seed)
    block = np.repeat(np.arange(len(sizes)), sizes)
    prob = np.full((len(sizes), len(sizes)), p_out)
    np.fill_diagonal(prob, p_in)
    src, dst = sample_block_edges(rng, block, prob)
    return RetweetGraph.from_arrays(len(block), src, dst), block


def mixed_membership_graph(
    n_left: int,
    n_right: int,
    n_moderate: int,
    p_in: float = 0.02,
    p_cross: float = 0.0004,
    p_mod_pole: float = 0.02,
    p_mod_mod: float = 0.002,
    p_pole_mod: float = 0.0004,
    rng_seed: int = 0,
) -> tuple[RetweetGraph, np.ndarray]:
    """Two partisan communities plus moderates who retweet both sides equally.

    Blocks: 0 = left, 1 = right, 2 = moderate.
    """
    rng = np.random.default_rng(rng_seed)
    block = np.repeat([0, 1, 2], [n_left, n_right, n_moderate])
    prob = np.array(
        [
            [p_in, p_cross, p_pole_mod],
            [p_cross, p_in, p_pole_mod],
            [p_mod_pole, p_mod_pole, p_mod_mod],
        ]
    )
    src, dst = sample_block_edges(rng, block, prob)
    return RetweetGraph.from_arrays(len(block), src, dst), block


def sample_seeds(
    users: Sequence[str],
    poles: Sequence[int],
    dimension: Dimension,
    frac: float,
    rng: np.random.Generator,
    strata: Sequence[int] | None = None,
) -> SeedSet:
    """Pick ``max(1, round(frac * n_pole))`` seeds from each pole.

    With ``strata`` (a block id per user), each pole's seeds are spread over
    its blocks, at least one per block, the rest allocated by block size.
    """
    users = list(users)
    poles = np.asarray(poles)
    strata = np.zeros(len(users), dtype=np.int64) if strata is None else np.asarray(strata)
    label_of = {}
    for pole in (1, -1):
        idx = np.flatnonzero(poles == pole)
        if len(idx) == 0:
            continue
        blocks = np.unique(strata[idx])
        k = min(len(idx), max(len(blocks), int(round(frac * len(idx)))))
        members = [idx[strata[idx] == b] for b in blocks]
        share = np.array([len(m) for m in members], dtype=float) * (k - len(blocks)) / len(idx)
        alloc = 1 + np.floor(share).astype(int)
        for j in np.argsort(-(share - np.floor(share)), kind="stable")[: k - int(alloc.sum())]:
            alloc[j] += 1
        for m, a in zip(members, alloc):
            for i in sorted(rng.choice(m, size=min(a, len(m)), replace=False).tolist()):
                label_of[users[i]] = pole
    return SeedSet(dimension, label_of)


# --------------------------------------------------------------------------
# Corpus generator
# --------------------------------------------------------------------------


def _pools(spec: SynthSpec) -> tuple[dict[str, list[str]], dict[str, list[str]], dict[str, list[str]], list[str]]:
    domains = {}
    tags = {}
    words = {}
    for label, prefix in POOL_PREFIX.items():
        tld = "org" if label in ("pro_science", "moderate") else "com"
        domains[label] = [f"{prefix}{i}.{tld}" for i in range(spec.n_domains_per_pole)]
        seeds = SEED_TAGS[label]
        tags[label] = seeds + [f"{prefix}tag{i}" for i in range(spec.n_tags_per_pole - len(seeds))]
        words[label] = [f"{prefix}w{i}" for i in range(spec.n_words_per_pole)]
    common_words = [f"cw{i}" for i in range(spec.n_common_words)]
    return domains, tags, words, common_words


def _user_labels(poles: tuple[int, int, int], lean: int) -> dict[str, str]:
    sci, mod, pol = poles
    out = {"science": "pro_science" if sci == 1 else "anti_science"}
    if mod == 1:
        out["moderacy"] = "moderate"
        out["lean"] = "conservative" if lean == 1 else "liberal"
    else:
        out["political"] = "conservative" if pol == 1 else "liberal"
    return out


def _opposite(label: str) -> str:
    return {
        "pro_science": "anti_science",
        "anti_science": "pro_science",
        "liberal": "conservative",
        "conservative": "liberal",
        "moderate": "liberal",
    }[label]


def _make_vectors(spec: SynthSpec, words: dict[str, list[str]], common: list[str], rng) -> EmbeddingTable:
    dim = spec.vector_dim
    tokens, rows = [], []
    directions = {}
    for label in POOL_PREFIX:
        v = rng.normal(size=dim)
        directions[label] = v / np.linalg.norm(v)
    for label, ws in words.items():
        for w in ws:
            tokens.append(w)
            rows.append(directions[label] + rng.normal(scale=spec.vector_noise, size=dim))
    for w in common:
        tokens.append(w)
        rows.append(rng.normal(scale=spec.vector_noise, size=dim))
    return EmbeddingTable(dim, tokens, np.round(np.vstack(rows), 6))


def generate(spec: SynthSpec) -> SynthCorpus:
    """Generate a corpus, planted labels, catalogs, seeds and word vectors.

    Deterministic under ``spec.rng_seed``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    domains, tags, words, common_words = _pools(spec)
    neutral_domains = [f"neutral{i}.net" for i in range(10)]
    buckets = BiweeklySpec.default()
    start = datetime(2020, 1, 21, tzinfo=timezone.utc)
    end = datetime(2020, 5, 2, tzinfo=timezone.utc)

    group_names = [g for g in GROUPS if spec.mixture.get(g.value, 0) > 0]
    weights = np.array([spec.mixture[g.value] for g in group_names])
    n = spec.n_users
    width = len(str(n - 1))
    users = [f"u{i:0{width}d}" for i in range(n)]
    gidx = rng.choice(len(group_names), size=n, p=weights / weights.sum())
    leans = rng.choice([-1, 1], size=n)

    truth: dict[str, TruthRow] = {}
    locations: dict[str, str | None] = {}
    for i, uid in enumerate(users):
        g = group_names[gidx[i]]
        sci, mod, pol = GROUP_POLES[g]
        state = None
        loc = None
        if rng.random() >= spec.location_missing:
            state = spec.states[rng.integers(len(spec.states))]
            form = LOCATION_FORMS[rng.integers(len(LOCATION_FORMS))]
            loc = form.format(city=CITIES.get(state, "Springfield"), code=state, name=US_STATES[state])
        truth[uid] = TruthRow(uid, g, sci, mod, pol, int(leans[i]) if mod == 1 else pol, state)
        locations[uid] = loc

    def pick(pool):
        return pool[rng.integers(len(pool))]

    def user_pool_labels(t: TruthRow) -> dict[str, str]:
        return _user_labels((t.science, t.moderacy, t.political), t.lean)

    records: list[dict] = []
    tid = 0

    def ts_in(bucket_idx: int | None) -> datetime:
        if bucket_idx is None:
            sec = rng.integers(int((end - start).total_seconds()))
            return start + timedelta(seconds=int(sec))
        b0, b1 = buckets.intervals[bucket_idx]
        s = datetime(b0.year, b0.month, b0.day, tzinfo=timezone.utc)
        e = datetime(b1.year, b1.month, b1.day, tzinfo=timezone.utc) + timedelta(days=1)
        return s + timedelta(seconds=int(rng.integers(int((e - s).total_seconds()))))

    def emit(uid: str, labels: dict[str, str], ts: datetime, rt: str | None) -> None:
        nonlocal tid
        own = [labels["science"], labels.get("political") or labels.get("moderacy")]
        toks = []
        for _ in range(spec.words_per_tweet):
            if rng.random() < spec.word_purity:
                toks.append(pick(words[own[rng.integers(2)]]))
            else:
                toks.append(pick(common_words))
        hashtags: list[str] = []
        urls: list[str] = []
        if rt is None:
            if rng.random() < spec.hashtag_prob:
                for _ in range(1 + rng.integers(3)):
                    h = pick(tags[own[rng.integers(2)]]) if rng.random() < spec.tag_purity else pick(COMMON_TAGS)
                    if h not in hashtags:
                        hashtags.append(h)
            if rng.random() < spec.url_prob:
                axis = rng.integers(3)
                if axis == 0:
                    label = labels["science"]
                elif "political" in labels:
                    label = labels["political"]
                elif axis == 1 and rng.random() < spec.moderate_political_rate:
                    label = labels["lean"]
                else:
                    label = "moderate"
                if rng.random() >= spec.domain_purity:
                    label = _opposite(label)
                if rng.random() < spec.neutral_url_prob:
                    dom = pick(neutral_domains)
                else:
                    dom = pick(domains[label])
                urls.append(f"https://www.{dom}/story/{int(rng.integers(10**6))}")
        text = " ".join(toks)
        if hashtags:
            text += " " + " ".join("#" + h for h in hashtags)
        if urls:
            text += " " + " ".join(urls)
        if rt is not None:
            text = f"RT @{rt} {text}"
        rec = {
            "id": f"t{tid:08d}",
            "user_id": uid,
            "created_at": format_timestamp(ts),
            "text": text,
            "hashtags": hashtags,
            "urls": urls,
        }
        if rt is not None:
            rec["retweeted_user_id"] = rt
        if locations[uid] is not None:
            rec["user_location"] = locations[uid]
        records.append(rec)
        tid += 1

    lo, hi = spec.tweets_per_user
    for uid in users:
        labels = user_pool_labels(truth[uid])
        k = int(rng.integers(lo, hi + 1))
        for j in range(k):
            emit(uid, labels, ts_in(j if j < len(buckets) else None), None)

    # retweets: planted partition over the six groups
    block = np.array([GROUPS.index(truth[u].group) for u in users])
    prob = np.full((len(GROUPS), len(GROUPS)), spec.p_out)
    np.fill_diagonal(prob, spec.p_in)
    src, dst = sample_block_edges(rng, block, prob)
    for s, d in zip(src.tolist(), dst.tolist()):
        emit(users[s], user_pool_labels(truth[users[s]]), ts_in(None), users[d])

    records.sort(key=lambda r: (r["created_at"], r["id"]))

    catalogs = {
        Dimension.SCIENCE: DomainCatalog(
            Dimension.SCIENCE,
            {**{d: 1 for d in domains["pro_science"]}, **{d: -1 for d in domains["anti_science"]}},
        ),
        Dimension.POLITICAL: DomainCatalog(
            Dimension.POLITICAL,
            {**{d: -1 for d in domains["liberal"]}, **{d: 1 for d in domains["conservative"]}},
        ),
        Dimension.MODERACY: DomainCatalog(
            Dimension.MODERACY,
            {
                **{d: 1 for d in domains["moderate"]},
                **{d: -1 for d in domains["liberal"] + domains["conservative"]},
            },
        ),
    }

    t_rows = [truth[u] for u in users]
    seeds = {
        dim: sample_seeds(users, [getattr(t, dim.value) for t in t_rows], dim, spec.seed_frac, rng, block)
        for dim in (Dimension.SCIENCE, Dimension.MODERACY, Dimension.POLITICAL)
    }
    vectors = _make_vectors(spec, words, common_words, rng)
    return SynthCorpus(records, truth, catalogs, seeds, vectors, spec)


def spec_to_json(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["tweets_per_user"] = list(spec.tweets_per_user)
    return d
