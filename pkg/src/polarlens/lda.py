"""LDA over per-user hashtag documents, fitted by collapsed Gibbs sampling."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numba
import numpy as np
from scipy.special import gammaln

from .corpus import UserAggregate

logger = logging.getLogger(__name__)


class LDAError(ValueError):
    pass


@dataclass
class HashtagDocCorpus:
    vocab: list[str]
    docs: list[np.ndarray]
    user_ids: list[str]
    n_dropped: int = 0

    @property
    def n_tokens(self) -> int:
        return int(sum(len(d) for d in self.docs))

    def word_counts(self) -> np.ndarray:
        if not self.docs:
            return np.zeros(len(self.vocab), dtype=np.int64)
        return np.bincount(np.concatenate(self.docs), minlength=len(self.vocab))


def build_hashtag_corpus(
    aggs: Mapping[str, UserAggregate], min_users: int = 10, max_frac: float = 0.75
) -> HashtagDocCorpus:
    """One document per user: their hashtag multiset restricted to the pruned vocabulary.

    Hashtags used by fewer than ``min_users`` users, or by more than
    ``max_frac`` of the users who use any hashtag, are pruned.
    """
    users = [u for u in sorted(aggs) if aggs[u].hashtag_counts]
    df: Counter = Counter()
    for u in users:
        df.update(h for h, c in aggs[u].hashtag_counts.items() if c > 0)
    n = len(users)
    vocab = sorted(h for h, c in df.items() if c >= min_users and c <= max_frac * n)
    if not vocab:
        raise LDAError("vocabulary is empty after pruning")
    pos = {h: i for i, h in enumerate(vocab)}
    docs, ids = [], []
    dropped = len(aggs) - n
    for u in users:
        toks = []
        for h, c in sorted(aggs[u].hashtag_counts.items()):
            i = pos.get(h)
            if i is not None and c > 0:
                toks.extend([i] * c)
        if toks:
            docs.append(np.asarray(toks, dtype=np.int64))
            ids.append(u)
        else:
            dropped += 1
    return HashtagDocCorpus(vocab, docs, ids, dropped)


# --------------------------------------------------------------------------
# Sampler kernels
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _gibbs_sweep(w, d, z, ndk, nkw, nk, alpha, beta, vbeta, u):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(w.shape[0]):
        wi = w[i]
        di = d[i]
        k = z[i]
        ndk[di, k] -= 1
        nkw[k, wi] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(K):
            total += (nkw[t, wi] + beta) / (nk[t] + vbeta) * (ndk[di, t] + alpha)
            p[t] = total
        r = u[i] * total
        k = 0
        while k < K - 1 and p[k] <= r:
            k += 1
        z[i] = k
        ndk[di, k] += 1
        nkw[k, wi] += 1
        nk[k] += 1


@numba.njit(cache=True)
def _infer_sweep(w, d, z, ndk, phi, alpha, u):
    K = phi.shape[0]
    p = np.empty(K)
    for i in range(w.shape[0]):
        wi = w[i]
        di = d[i]
        k = z[i]
        ndk[di, k] -= 1
        total = 0.0
        for t in range(K):
            total += phi[t, wi] * (ndk[di, t] + alpha)
            p[t] = total
        r = u[i] * total
        k = 0
        while k < K - 1 and p[k] <= r:
            k += 1
        z[i] = k
        ndk[di, k] += 1


def _flatten(docs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    if not docs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    w = np.concatenate([np.asarray(x, dtype=np.int64) for x in docs])
    d = np.repeat(np.arange(len(docs), dtype=np.int64), [len(x) for x in docs])
    return w, d


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass
class TopicModel:
    vocab: list[str]
    K: int
    alpha: float
    beta: float
    phi: np.ndarray
    log: dict = field(default_factory=dict)

    def top_words(self, n: int = 10) -> list[list[int]]:
        return [np.argsort(-row, kind="stable")[:n].tolist() for row in self.phi]

    def to_json(self) -> dict:
        return {
            "vocab": self.vocab,
            "K": self.K,
            "alpha": self.alpha,
            "beta": self.beta,
            "phi": self.phi.tolist(),
            "log": self.log,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TopicModel":
        return cls(obj["vocab"], int(obj["K"]), float(obj["alpha"]), float(obj["beta"]), np.asarray(obj["phi"], dtype=float), obj.get("log", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TopicModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _log_likelihood(nkw: np.ndarray, nk: np.ndarray, beta: float) -> float:
    K, V = nkw.shape
    return float(
        K * (gammaln(V * beta) - V * gammaln(beta))
        + gammaln(nkw + beta).sum()
        - gammaln(nk + V * beta).sum()
    )


def fit_lda(
    corpus: HashtagDocCorpus,
    K: int = 20,
    alpha: float | None = None,
    beta: float = 0.01,
    sweeps: int = 1000,
    burn_in: int = 200,
    rng_seed: int = 0,
    log_every: int = 50,
    on_sweep: Callable[[int, np.ndarray], None] | None = None,
) -> TopicModel:
    """Collapsed Gibbs sampling over token-topic assignments.

    ``alpha`` defaults to ``50 / K``. The topic-word matrix is estimated from
    the counts averaged over sweeps after ``burn_in`` (the last state if
    there are none). ``on_sweep(sweep, topic_word_counts)`` is called after
    every sweep with the live count matrix; do not modify it.
    """
    if K < 2:
        raise LDAError("K must be at least 2")
    if not corpus.docs or corpus.n_tokens == 0:
        raise LDAError("corpus is empty")
    alpha = 50.0 / K if alpha is None else float(alpha)
    V = len(corpus.vocab)
    w, d = _flatten(corpus.docs)
    rng = np.random.default_rng(rng_seed)
    z = rng.integers(0, K, size=len(w)).astype(np.int64)
    ndk = np.zeros((len(corpus.docs), K), dtype=np.int64)
    nkw = np.zeros((K, V), dtype=np.int64)
    np.add.at(ndk, (d, z), 1)
    np.add.at(nkw, (z, w), 1)
    nk = nkw.sum(axis=1)

    acc_kw = np.zeros((K, V))
    n_acc = 0
    trace = []
    for s in range(1, sweeps + 1):
        _gibbs_sweep(w, d, z, ndk, nkw, nk, alpha, beta, V * beta, rng.random(len(w)))
        if on_sweep is not None:
            on_sweep(s, nkw)
        if s > burn_in:
            acc_kw += nkw
            n_acc += 1
        if log_every and (s % log_every == 0 or s == sweeps):
            trace.append((s, _log_likelihood(nkw, nk, beta)))
    mean_kw = acc_kw / n_acc if n_acc else nkw.astype(float)
    phi = (mean_kw + beta) / (mean_kw.sum(axis=1, keepdims=True) + V * beta)
    log = {
        "sweeps": sweeps,
        "burn_in": burn_in,
        "samples": n_acc,
        "rng_seed": rng_seed,
        "n_docs": len(corpus.docs),
        "n_tokens": int(len(w)),
        "loglik": trace,
    }
    return TopicModel(list(corpus.vocab), K, alpha, beta, phi, log)


@dataclass(frozen=True)
class AffinityVector:
    user_id: str | None
    theta: np.ndarray
    empty: bool = False


def _doc_ids(model: TopicModel, doc, pos: dict[str, int]) -> np.ndarray:
    if isinstance(doc, Mapping):
        toks = [pos[h] for h, c in sorted(doc.items()) if h in pos for _ in range(int(c))]
    else:
        toks = [pos[h] for h in doc if h in pos]
    return np.asarray(toks, dtype=np.int64)


def infer_affinities(
    model: TopicModel,
    docs: Sequence[Iterable[str] | Mapping[str, int]],
    sweeps: int = 50,
    burn_in: int = 10,
    rng_seed: int = 0,
    user_ids: Sequence[str] | None = None,
) -> list[AffinityVector]:
    """Topic affinities for documents given as hashtag lists or count maps.

    Gibbs sampling with the topic-word matrix held fixed; theta is
    ``(n_k + alpha) / (N + K * alpha)`` averaged over post-burn-in sweeps.
    Out-of-vocabulary hashtags are dropped; an empty document gets the
    uniform vector and ``empty=True``.
    """
    pos = {h: i for i, h in enumerate(model.vocab)}
    ids = [_doc_ids(model, doc, pos) for doc in docs]
    K = model.K
    w, d = _flatten(ids)
    rng = np.random.default_rng(rng_seed)
    z = rng.integers(0, K, size=len(w)).astype(np.int64)
    ndk = np.zeros((len(ids), K), dtype=np.int64)
    np.add.at(ndk, (d, z), 1)
    phi = np.ascontiguousarray(model.phi, dtype=np.float64)
    acc = np.zeros((len(ids), K))
    n_acc = 0
    for s in range(1, sweeps + 1):
        _infer_sweep(w, d, z, ndk, phi, model.alpha, rng.random(len(w)))
        if s > burn_in:
            acc += ndk
            n_acc += 1
    mean = acc / n_acc if n_acc else ndk.astype(float)
    lengths = np.array([len(x) for x in ids], dtype=float)
    theta = (mean + model.alpha) / (lengths[:, None] + K * model.alpha)
    out = []
    for i, toks in enumerate(ids):
        uid = None if user_ids is None else user_ids[i]
        if len(toks) == 0:
            out.append(AffinityVector(uid, np.full(K, 1.0 / K), True))
        else:
            row = theta[i]
            out.append(AffinityVector(uid, row / row.sum()))
    return out


def infer_affinity(model: TopicModel, doc: Iterable[str] | Mapping[str, int], **kw) -> AffinityVector:
    return infer_affinities(model, [doc], **kw)[0]


def coherence(model: TopicModel, corpus: HashtagDocCorpus, top_n: int = 10) -> tuple[list[float], float]:
    """UMass coherence of each topic's top words and their mean.

    For top words ranked ``w_1..w_n`` a topic scores the mean over pairs
    ``i > j`` of ``ln((D(w_i, w_j) + 1) / D(w_j))``, with D counting
    documents that contain the word(s).
    """
    col = {h: i for i, h in enumerate(corpus.vocab)}
    remap = np.array([col.get(h, -1) for h in model.vocab])
    docsets: dict[int, set[int]] = {}
    for di, doc in enumerate(corpus.docs):
        for wi in set(doc.tolist()):
            docsets.setdefault(wi, set()).add(di)
    per_topic = []
    for top in model.top_words(top_n):
        sets = [docsets.get(int(remap[t]), set()) if remap[t] >= 0 else set() for t in top]
        scores = []
        for i in range(1, len(top)):
            for j in range(i):
                if not sets[j]:
                    continue
                scores.append(np.log((len(sets[i] & sets[j]) + 1) / len(sets[j])))
        per_topic.append(float(np.mean(scores)) if scores else 0.0)
    return per_topic, float(np.mean(per_topic))


def coherence_sweep(
    corpus: HashtagDocCorpus, ks: Iterable[int] = (5, 10, 15, 20, 25, 30), top_n: int = 10, **fit_kw
) -> dict[int, float]:
    """Mean coherence for each candidate topic count."""
    out = {}
    for k in ks:
        model = fit_lda(corpus, K=k, **fit_kw)
        out[k] = coherence(model, corpus, top_n)[1]
        logger.info("K=%d coherence=%.4f", k, out[k])
    return out
