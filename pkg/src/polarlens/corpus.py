"""Tweet corpus ingestion: parsing, normalization and per-user aggregation.

Input is line-delimited JSON, one tweet per line. The minimal schema is::

    {"id": "...", "user_id": "...", "created_at": "2020-02-01T10:00:00Z",
     "text": "...", "urls": [...], "hashtags": [...],
     "retweeted_user_id": "...", "user_location": "..."}

Hydrated platform payloads with different key names are adapted through
:class:`SchemaConfig`, which maps each canonical field to a (possibly dotted)
source key.
"""

from __future__ import annotations

import gc
import json
import logging
import re
import unicodedata
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, NamedTuple
from urllib.parse import urlsplit

import orjson

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (date(2020, 1, 21), date(2020, 5, 1))

_HASHTAG_RE = re.compile(r"#(\w+)")
_URL_RE = re.compile(r"https?://\S+", re.IGNORECASE)
_RT_RE = re.compile(r"^RT @(\w+)")
# plain http(s) URLs whose host urlsplit would return unchanged (modulo case)
_SPACE_RE = re.compile(r"\s")
_SIMPLE_HOST_RE = re.compile(r"https?://([A-Za-z0-9.-]+)(?:[/?#]\S*)?")
_LABEL_RE = re.compile(r"^[\w-]+$")
_TLD_RE = re.compile(r"^(?:[^\W\d_]{2,}|xn--[a-z0-9-]+)$")

# Multi-label public suffixes; anything else falls back to the last two labels.
PUBLIC_SUFFIXES = frozenset(
    {
        "co.uk", "org.uk", "ac.uk", "gov.uk", "ltd.uk", "me.uk", "net.uk", "nhs.uk",
        "com.au", "net.au", "org.au", "edu.au", "gov.au",
        "co.nz", "org.nz", "govt.nz",
        "co.jp", "ne.jp", "or.jp", "ac.jp", "go.jp",
        "co.in", "org.in", "gov.in", "nic.in",
        "com.br", "org.br", "gov.br",
        "com.cn", "org.cn", "gov.cn",
        "co.za", "org.za", "gov.za",
        "com.mx", "gob.mx", "com.ar", "com.tr", "com.sg", "com.hk",
        "co.kr", "or.kr", "co.il", "org.il",
        "gc.ca", "qc.ca", "on.ca",
        "blogspot.com", "github.io", "wordpress.com", "substack.com",
    }
)


class CorpusError(ValueError):
    """Raised for unrecoverable corpus configuration problems."""


class TweetRecord(NamedTuple):
    tweet_id: str
    user_id: str
    timestamp: datetime
    text: str
    hashtags: tuple[str, ...] = ()
    urls: tuple[str, ...] = ()
    retweeted_user_id: str | None = None
    state: str | None = None

    @property
    def domains(self) -> list[str]:
        """Registrable domains of the record's URLs (unparseable ones dropped)."""
        out = []
        for u in self.urls:
            d = extract_domain(u)
            if d is not None:
                out.append(d)
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.tweet_id,
            "user_id": self.user_id,
            "created_at": format_timestamp(self.timestamp),
            "text": self.text,
            "hashtags": list(self.hashtags),
            "urls": list(self.urls),
            "retweeted_user_id": self.retweeted_user_id,
            "state": self.state,
        }


@dataclass
class UserAggregate:
    user_id: str
    doc_text: str = ""
    hashtag_counts: Counter = field(default_factory=Counter)
    shared_domains: Counter = field(default_factory=Counter)
    state: str | None = None
    per_bucket_domains: dict[int, Counter] = field(default_factory=dict)
    per_bucket_tweets: dict[int, int] = field(default_factory=dict)
    n_tweets: int = 0

    @property
    def active_buckets(self) -> set[int]:
        return {b for b, n in self.per_bucket_tweets.items() if n > 0}

    def to_json(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "n_tweets": self.n_tweets,
            "state": self.state,
            "doc_text": self.doc_text,
            "hashtag_counts": dict(sorted(self.hashtag_counts.items())),
            "shared_domains": dict(sorted(self.shared_domains.items())),
            "per_bucket_domains": {
                str(b): dict(sorted(c.items())) for b, c in sorted(self.per_bucket_domains.items())
            },
            "per_bucket_tweets": {str(b): n for b, n in sorted(self.per_bucket_tweets.items())},
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "UserAggregate":
        return cls(
            user_id=obj["user_id"],
            doc_text=obj.get("doc_text", ""),
            hashtag_counts=Counter(obj.get("hashtag_counts", {})),
            shared_domains=Counter(obj.get("shared_domains", {})),
            state=obj.get("state"),
            per_bucket_domains={
                int(b): Counter(c) for b, c in obj.get("per_bucket_domains", {}).items()
            },
            per_bucket_tweets={int(b): n for b, n in obj.get("per_bucket_tweets", {}).items()},
            n_tweets=obj.get("n_tweets", 0),
        )


@dataclass(frozen=True)
class SchemaConfig:
    """Maps canonical field names to keys in the input objects.

    Dotted keys (``"user.id_str"``) reach into nested objects.
    """

    id: str = "id"
    user_id: str = "user_id"
    created_at: str = "created_at"
    text: str = "text"
    urls: str = "urls"
    hashtags: str = "hashtags"
    retweeted_user_id: str = "retweeted_user_id"
    user_location: str = "user_location"
    state: str = "state"

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "SchemaConfig":
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise CorpusError(f"unknown schema fields: {sorted(unknown)}")
        return cls(**mapping)


@dataclass
class ParseStats:
    parsed: int = 0
    malformed: int = 0
    out_of_window: int = 0

    @property
    def skipped(self) -> int:
        return self.malformed + self.out_of_window

    def merge(self, other: "ParseStats") -> None:
        self.parsed += other.parsed
        self.malformed += other.malformed
        self.out_of_window += other.out_of_window


# --------------------------------------------------------------------------
# Field-level normalization
# --------------------------------------------------------------------------


def parse_timestamp(value: Any) -> datetime | None:
    """Parse RFC3339 or the legacy ``Wed Jan 22 10:00:00 +0000 2020`` form to UTC."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if not isinstance(value, str) or not value:
        return None
    if len(value) == 20 and value[10] == "T" and value[19] == "Z":
        try:
            return datetime.fromisoformat(value[:19] + "+00:00")
        except ValueError:
            pass
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(s)
    except ValueError:
        try:
            ts = datetime.strptime(value.strip(), "%a %b %d %H:%M:%S %z %Y")
        except ValueError:
            return None
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is not timezone.utc:
        ts = ts.astimezone(timezone.utc)
    return ts.replace(tzinfo=None, microsecond=0).isoformat() + "Z"


@lru_cache(maxsize=1 << 16)
def normalize_hashtag(tag: str) -> str | None:
    tag = unicodedata.normalize("NFC", tag).strip().lstrip("#").lower()
    if not tag or _SPACE_RE.search(tag):
        return None
    return tag


def extract_hashtags(text: str) -> list[str]:
    return [h.lower() for h in _HASHTAG_RE.findall(unicodedata.normalize("NFC", text))]


def extract_urls(text: str) -> list[str]:
    return [u.rstrip(".,;:!?)]}'\"") for u in _URL_RE.findall(text)]


@lru_cache(maxsize=1 << 16)
def _registrable(host: str) -> str | None:
    host = host.rstrip(".")
    labels = host.split(".")
    if len(labels) < 2 or not all(lab and _LABEL_RE.match(lab) for lab in labels):
        return None
    if not _TLD_RE.match(labels[-1]):
        # covers bare IPv4 addresses and numeric junk
        return None
    if labels[0] == "www" and len(labels) > 2:
        labels = labels[1:]
    if len(labels) >= 3 and ".".join(labels[-2:]) in PUBLIC_SUFFIXES:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def extract_domain(url: str) -> str | None:
    """Return the lowercased registrable domain of ``url``.

    Scheme, credentials, port, path, query and a ``www.`` prefix are dropped.
    A bare hostname is accepted, so the function is idempotent.

    >>> extract_domain("https://www.cdc.gov/covid")
    'cdc.gov'
    >>> extract_domain("not a url") is None
    True
    """
    if not isinstance(url, str):
        return None
    # common case: plain http(s) URL with no whitespace anywhere
    m = _SIMPLE_HOST_RE.fullmatch(url)
    if m is not None:
        return _registrable(m.group(1).lower())
    s = url.strip()
    if not s or _SPACE_RE.search(s):
        return None
    if "://" not in s:
        s = "http://" + s
    try:
        host = urlsplit(s).hostname
    except ValueError:
        return None
    if not host:
        return None
    return _registrable(host)


# --------------------------------------------------------------------------
# US state gazetteer
# --------------------------------------------------------------------------

US_STATES: dict[str, str] = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas",
    "CA": "California", "CO": "Colorado", "CT": "Connecticut", "DE": "Delaware",
    "DC": "District of Columbia", "FL": "Florida", "GA": "Georgia", "HI": "Hawaii",
    "ID": "Idaho", "IL": "Illinois", "IN": "Indiana", "IA": "Iowa", "KS": "Kansas",
    "KY": "Kentucky", "LA": "Louisiana", "ME": "Maine", "MD": "Maryland",
    "MA": "Massachusetts", "MI": "Michigan", "MN": "Minnesota", "MS": "Mississippi",
    "MO": "Missouri", "MT": "Montana", "NE": "Nebraska", "NV": "Nevada",
    "NH": "New Hampshire", "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York",
    "NC": "North Carolina", "ND": "North Dakota", "OH": "Ohio", "OK": "Oklahoma",
    "OR": "Oregon", "PA": "Pennsylvania", "RI": "Rhode Island", "SC": "South Carolina",
    "SD": "South Dakota", "TN": "Tennessee", "TX": "Texas", "UT": "Utah",
    "VT": "Vermont", "VA": "Virginia", "WA": "Washington", "WV": "West Virginia",
    "WI": "Wisconsin", "WY": "Wyoming",
}


class Gazetteer:
    """Matches US state names (case-insensitive) and postal codes in free text.

    Two-letter codes only match in upper case: lowercase "in", "or", "me"
    are ordinary English words far more often than state references.
    """

    def __init__(self, names: Mapping[str, str] | None = None):
        names = dict(names or {v: k for k, v in US_STATES.items()})
        names.setdefault("Washington DC", "DC")
        names.setdefault("Washington D.C.", "DC")
        names.setdefault("Washington, DC", "DC")
        names.setdefault("Washington, D.C.", "DC")
        names.setdefault("D.C.", "DC")
        self._names = {k.lower(): v for k, v in names.items()}
        self._codes = set(self._names.values())
        alts = sorted(self._names, key=len, reverse=True)
        name_pat = "|".join(re.escape(a) for a in alts)
        self._name_re = re.compile(rf"(?<!\w)(?:{name_pat})(?!\w)", re.IGNORECASE)
        self._code_re = re.compile(r"(?<![\w.])([A-Z]{2})(?![\w])")
        self._cache: dict[str, str | None] = {}

    def match(self, text: str) -> str | None:
        if not text:
            return None
        try:
            return self._cache[text]
        except KeyError:
            pass
        out = self._match(text)
        if len(self._cache) < 1 << 18:
            self._cache[text] = out
        return out

    def _match(self, text: str) -> str | None:
        found: set[str] = set()
        remainder = []
        pos = 0
        for m in self._name_re.finditer(text):
            found.add(self._names[m.group(0).lower()])
            remainder.append(text[pos : m.start()])
            pos = m.end()
        remainder.append(text[pos:])
        for chunk in remainder:
            for m in self._code_re.finditer(chunk):
                if m.group(1) in self._codes:
                    found.add(m.group(1))
        return found.pop() if len(found) == 1 else None


_DEFAULT_GAZETTEER: Gazetteer | None = None


def default_gazetteer() -> Gazetteer:
    global _DEFAULT_GAZETTEER
    if _DEFAULT_GAZETTEER is None:
        _DEFAULT_GAZETTEER = Gazetteer()
    return _DEFAULT_GAZETTEER


def match_state(profile_location: str, gazetteer: Gazetteer | None = None) -> str | None:
    """Return the single US state referenced by a profile location, else None."""
    return (gazetteer or default_gazetteer()).match(profile_location)


# --------------------------------------------------------------------------
# Record parsing
# --------------------------------------------------------------------------


def _get(obj: Mapping[str, Any], key: str) -> Any:
    try:
        return obj[key]
    except KeyError:
        pass
    if "." not in key:
        return None
    cur: Any = obj
    for part in key.split("."):
        if not isinstance(cur, Mapping) or part not in cur:
            return None
        cur = cur[part]
    return cur


_STR_ONLY = {str}


def _entity_strings(value: Any, keys: tuple[str, ...]) -> list[str] | None:
    if value is None:
        return None
    if type(value) is list:
        if not value or {*map(type, value)} == _STR_ONLY:
            return value
    if isinstance(value, str):
        return [value]
    out = []
    for item in value:
        if type(item) is str:
            out.append(item)
        elif isinstance(item, Mapping):
            for k in keys:
                if item.get(k):
                    out.append(str(item[k]))
                    break
        elif item is not None:
            out.append(str(item))
    return out


_DEFAULT_SCHEMA = SchemaConfig()


@lru_cache(maxsize=64)
def _is_flat(schema: SchemaConfig) -> bool:
    return not any("." in getattr(schema, f) for f in schema.__dataclass_fields__)


@lru_cache(maxsize=64)
def _keys(schema: SchemaConfig) -> tuple[str, ...]:
    return (
        schema.user_id, schema.created_at, schema.text, schema.id, schema.hashtags,
        schema.urls, schema.retweeted_user_id, schema.state, schema.user_location,
    )


def parse_record(
    obj: Mapping[str, Any],
    schema: SchemaConfig | None = None,
    window: tuple[date, date] | None = DEFAULT_WINDOW,
    stats: ParseStats | None = None,
    gazetteer: Gazetteer | None = None,
) -> TweetRecord | None:
    """Normalize one decoded input object; ``None`` means skipped (and counted)."""
    schema = schema or _DEFAULT_SCHEMA
    stats = stats if stats is not None else ParseStats()
    if type(obj) is dict and (schema is _DEFAULT_SCHEMA or _is_flat(schema)):
        get = obj.get
    else:
        def get(key):
            return _get(obj, key)

    k_user, k_time, k_text, k_id, k_tags, k_urls, k_rt, k_state, k_loc = _keys(schema)
    user_id = get(k_user)
    ts = parse_timestamp(get(k_time))
    if user_id is None or user_id == "" or ts is None:
        stats.malformed += 1
        return None
    if window is not None and not (window[0] <= ts.date() <= window[1]):
        stats.out_of_window += 1
        return None

    text = get(k_text)
    if type(text) is not str:
        text = text if isinstance(text, str) else ""
    if not text.isascii():
        text = unicodedata.normalize("NFC", text)
    tweet_id = get(k_id)

    raw_tags = _entity_strings(get(k_tags), ("text", "tag"))
    if raw_tags is None:
        hashtags = extract_hashtags(text)
    else:
        hashtags = tuple(filter(None, map(normalize_hashtag, raw_tags)))

    urls = _entity_strings(get(k_urls), ("expanded_url", "unwound_url", "url"))
    if urls is None:
        urls = extract_urls(text)

    rt = get(k_rt)
    if rt is None:
        m = _RT_RE.match(text)
        rt = m.group(1) if m else None

    state = get(k_state)
    if not (isinstance(state, str) and state.upper() in US_STATES):
        loc = get(k_loc)
        state = (gazetteer or default_gazetteer()).match(loc) if isinstance(loc, str) else None
    else:
        state = state.upper()

    stats.parsed += 1
    return TweetRecord(
        tweet_id if type(tweet_id) is str else ("" if tweet_id is None else str(tweet_id)),
        user_id if type(user_id) is str else str(user_id),
        ts,
        text,
        tuple(hashtags),
        tuple(urls),
        None if rt is None or rt == "" else str(rt),
        state,
    )


def parse_tweet_line(
    line: str | bytes,
    schema: SchemaConfig | None = None,
    window: tuple[date, date] | None = DEFAULT_WINDOW,
    stats: ParseStats | None = None,
    gazetteer: Gazetteer | None = None,
) -> TweetRecord | None:
    """Parse one input line. Malformed lines are counted in ``stats``, never raised."""
    stats = stats if stats is not None else ParseStats()
    try:
        obj = loads_json(line)
    except (ValueError, TypeError):
        stats.malformed += 1
        return None
    if type(obj) is not dict and not isinstance(obj, Mapping):
        stats.malformed += 1
        return None
    return parse_record(obj, schema, window, stats, gazetteer)


def iter_records(
    lines: Iterable[str | bytes],
    schema: SchemaConfig | None = None,
    window: tuple[date, date] | None = DEFAULT_WINDOW,
    stats: ParseStats | None = None,
) -> Iterator[TweetRecord]:
    stats = stats if stats is not None else ParseStats()
    for line in lines:
        if not line.strip():
            continue
        rec = parse_tweet_line(line, schema, window, stats)
        if rec is not None:
            yield rec


def read_corpus(
    path: str | Path,
    schema: SchemaConfig | None = None,
    window: tuple[date, date] | None = DEFAULT_WINDOW,
    stats: ParseStats | None = None,
) -> Iterator[TweetRecord]:
    # bytes lines skip a decode step; the JSON parser validates UTF-8 itself
    with open(path, "rb") as fh:
        yield from iter_records(fh, schema, window, stats)


def record_from_json(obj: Mapping[str, Any]) -> TweetRecord:
    """Inverse of :meth:`TweetRecord.to_json` (no window filtering)."""
    ts = parse_timestamp(obj["created_at"])
    if ts is None:
        raise CorpusError(f"bad timestamp in normalized record {obj.get('id')!r}")
    return TweetRecord(
        tweet_id=obj["id"],
        user_id=obj["user_id"],
        timestamp=ts,
        text=obj.get("text", ""),
        hashtags=tuple(obj.get("hashtags", ())),
        urls=tuple(obj.get("urls", ())),
        retweeted_user_id=obj.get("retweeted_user_id"),
        state=obj.get("state"),
    )


@contextmanager
def paused_gc():
    """Suspend cyclic garbage collection while building large acyclic structures."""
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def loads_json(line: str | bytes) -> Any:
    """Decode one JSON document; orjson first, the stdlib for what it rejects (NaN, huge ints)."""
    try:
        return orjson.loads(line)
    except orjson.JSONDecodeError:
        return json.loads(line)


def dumps_json_line(obj: Any) -> bytes:
    """Compact, key-sorted UTF-8 JSON followed by a newline."""
    return orjson.dumps(obj, option=orjson.OPT_SORT_KEYS | orjson.OPT_APPEND_NEWLINE)


def write_records(path: str | Path, records: Iterable[TweetRecord]) -> int:
    """Write normalized records as JSONL, in the form :meth:`TweetRecord.to_json` gives."""
    n = 0
    opts = orjson.OPT_SORT_KEYS | orjson.OPT_APPEND_NEWLINE | orjson.OPT_UTC_Z | orjson.OPT_OMIT_MICROSECONDS
    with open(path, "wb") as fh:
        for rec in records:
            ts = rec.timestamp
            if ts.tzinfo is not timezone.utc:
                ts = ts.astimezone(timezone.utc)
            # orjson renders a UTC datetime exactly as format_timestamp does
            obj = {
                "id": rec.tweet_id,
                "user_id": rec.user_id,
                "created_at": ts,
                "text": rec.text,
                "hashtags": rec.hashtags,
                "urls": rec.urls,
                "retweeted_user_id": rec.retweeted_user_id,
                "state": rec.state,
            }
            fh.write(orjson.dumps(obj, option=opts))
            n += 1
    return n


def read_records(path: str | Path) -> Iterator[TweetRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield record_from_json(loads_json(line))


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


class _UserAcc:
    __slots__ = ("texts", "hashtags", "domains", "states", "bucket_domains", "bucket_tweets")

    # plain dicts of counts; Counter.__missing__ is slow on the hot path
    def __init__(self):
        self.texts: list[TweetRecord] = []
        self.hashtags: dict[str, int] = {}
        self.domains: dict[str, int] = {}
        self.states: dict[str, int] = {}
        self.bucket_domains: dict[int, dict[str, int]] = {}
        self.bucket_tweets: dict[int, int] = {}

    def merge(self, other: "_UserAcc") -> None:
        self.texts.extend(other.texts)
        _add_counts(self.hashtags, other.hashtags)
        _add_counts(self.domains, other.domains)
        _add_counts(self.states, other.states)
        for b, c in other.bucket_domains.items():
            _add_counts(self.bucket_domains.setdefault(b, {}), c)
        _add_counts(self.bucket_tweets, other.bucket_tweets)


def _add_counts(into: dict, other: Mapping) -> None:
    for k, v in other.items():
        into[k] = into.get(k, 0) + v


def _text_order(rec: TweetRecord) -> tuple[datetime, str, str]:
    return rec.timestamp, rec.tweet_id, rec.text


class UserAggregator:
    """Incremental, mergeable builder for :class:`UserAggregate` maps.

    Partial aggregators built on separate shards combine with :meth:`merge`;
    the result does not depend on record or shard order.
    """

    def __init__(self, bucket_spec=None):
        if bucket_spec is None:
            from .analysis import BiweeklySpec

            bucket_spec = BiweeklySpec.default()
        self.bucket_spec = bucket_spec
        self._users: dict[str, _UserAcc] = {}
        self._bucket_of_day: dict[date, int | None] = {}

    def add(self, rec: TweetRecord) -> None:
        acc = self._users.get(rec.user_id)
        if acc is None:
            acc = self._users[rec.user_id] = _UserAcc()
        ts = rec.timestamp
        acc.texts.append(rec)
        if rec.hashtags:
            tags = acc.hashtags
            for h in rec.hashtags:
                tags[h] = tags.get(h, 0) + 1
        day = ts.date() if ts.tzinfo is timezone.utc else ts.astimezone(timezone.utc).date()
        try:
            bucket = self._bucket_of_day[day]
        except KeyError:
            bucket = self._bucket_of_day[day] = self.bucket_spec.bucket_of(day)
        if bucket is not None:
            bt = acc.bucket_tweets
            bt[bucket] = bt.get(bucket, 0) + 1
        if rec.urls:
            doms = rec.domains
            if doms:
                shared = acc.domains
                for d in doms:
                    shared[d] = shared.get(d, 0) + 1
                if bucket is not None:
                    per = acc.bucket_domains.get(bucket)
                    if per is None:
                        per = acc.bucket_domains[bucket] = {}
                    for d in doms:
                        per[d] = per.get(d, 0) + 1
        if rec.state:
            st = acc.states
            st[rec.state] = st.get(rec.state, 0) + 1

    def update(self, records: Iterable[TweetRecord]) -> "UserAggregator":
        for rec in records:
            self.add(rec)
        return self

    def merge(self, other: "UserAggregator") -> "UserAggregator":
        for uid, acc in other._users.items():
            mine = self._users.get(uid)
            if mine is None:
                self._users[uid] = acc
            else:
                mine.merge(acc)
        return self

    def build(self) -> dict[str, UserAggregate]:
        out = {}
        for uid in sorted(self._users):
            acc = self._users[uid]
            texts = sorted(acc.texts, key=_text_order)
            state = None
            if acc.states:
                # most frequent state, ties broken alphabetically
                state = min(acc.states.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            out[uid] = UserAggregate(
                user_id=uid,
                doc_text="\n".join(r.text for r in texts),
                hashtag_counts=Counter(acc.hashtags),
                shared_domains=Counter(acc.domains),
                state=state,
                per_bucket_domains={b: Counter(c) for b, c in sorted(acc.bucket_domains.items())},
                per_bucket_tweets=dict(sorted(acc.bucket_tweets.items())),
                n_tweets=len(texts),
            )
        return out


def aggregate_users(records: Iterable[TweetRecord], bucket_spec=None) -> dict[str, UserAggregate]:
    """Collapse a record stream into one :class:`UserAggregate` per user."""
    return UserAggregator(bucket_spec).update(records).build()


def write_users(path: str | Path, aggs: Mapping[str, UserAggregate]) -> None:
    with open(path, "wb") as fh:
        for uid in sorted(aggs):
            fh.write(dumps_json_line(aggs[uid].to_json()))


def read_users(path: str | Path) -> dict[str, UserAggregate]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                agg = UserAggregate.from_json(loads_json(line))
                out[agg.user_id] = agg
    return out
