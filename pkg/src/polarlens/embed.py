"""Dense per-user document embeddings from a pretrained word-vector file."""

from __future__ import annotations

import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import UserAggregate

logger = logging.getLogger(__name__)

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"[@＠]\w+")
_HASHTAG_RE = re.compile(r"[#＃]\w+")
_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


class EmbedError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    tokens: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (len(self.tokens), self.dim):
            raise EmbedError(f"matrix shape {self.matrix.shape} does not match {len(self.tokens)} x {self.dim}")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_dict(cls, vectors: Mapping[str, Iterable[float]]) -> "EmbeddingTable":
        toks = list(vectors)
        mat = np.asarray([list(vectors[t]) for t in toks], dtype=float)
        dim = mat.shape[1] if mat.ndim == 2 else 0
        return cls(dim, [t.lower() for t in toks], mat.reshape(len(toks), dim))

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> np.ndarray:
        return self.matrix[self.index[token]]

    def __contains__(self, token: str) -> bool:
        return token in self.index


def load_vectors(path: str | Path) -> EmbeddingTable:
    """Read the word2vec text format: ``<count> <dim>`` then ``token v1 .. v_dim``.

    Tokens are lowercased; a repeated token overwrites the earlier vector.
    """
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbedError(f"{path}:1: expected '<count> <dim>' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbedError(f"{path}:1: expected '<count> <dim>' header") from None
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise EmbedError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            try:
                vec = np.asarray(parts[1:], dtype=float)
            except ValueError:
                raise EmbedError(f"{path}:{lineno}: non-numeric vector entry") from None
            tok = unicodedata.normalize("NFC", parts[0]).lower()
            if tok in index:
                logger.warning("%s:%d: duplicate token %r, keeping the later vector", path, lineno, tok)
                rows[index[tok]] = vec
            else:
                index[tok] = len(tokens)
                tokens.append(tok)
                rows.append(vec)
    if len(tokens) != count:
        logger.warning("%s: header announces %d vectors, read %d distinct", path, count, len(tokens))
    mat = np.vstack(rows) if rows else np.zeros((0, dim))
    return EmbeddingTable(dim, tokens, mat)


def write_vectors(path: str | Path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for tok, row in zip(table.tokens, table.matrix):
            fh.write(tok + " " + " ".join(f"{v:.6g}" for v in row) + "\n")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("polarlens").joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return default_stopwords()
    text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def preprocess_text(doc_text: str, stopwords: Iterable[str] | None = None) -> list[str]:
    """Lowercase, strip URLs, mentions, hashtags and punctuation, drop stopwords."""
    stop = default_stopwords() if stopwords is None else stopwords
    text = unicodedata.normalize("NFC", doc_text).lower()
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _HASHTAG_RE.sub(" ", text)
    return [t for t in _TOKEN_RE.findall(text) if t not in stop]


@dataclass(frozen=True)
class DocEmbedding:
    user_id: str | None
    vector: np.ndarray
    n_tokens_matched: int


def embed_document(tokens: Iterable[str], table: EmbeddingTable, user_id: str | None = None) -> DocEmbedding | None:
    """Mean of the vectors of in-vocabulary tokens, counting repeats; None if nothing matches."""
    counts = Counter(t for t in tokens if t in table.index)
    if not counts:
        return None
    # fixed summation order keeps the result independent of token order
    items = sorted((table.index[t], c) for t, c in counts.items())
    rows = np.array([i for i, _ in items], dtype=np.int64)
    weights = np.array([c for _, c in items], dtype=float)
    n = int(weights.sum())
    vec = weights @ table.matrix[rows] / n
    return DocEmbedding(user_id, vec, n)


def embed_users(
    aggs: Mapping[str, UserAggregate], table: EmbeddingTable, stopwords: Iterable[str] | None = None
) -> tuple[list[DocEmbedding], int]:
    """Embeddings for every user with at least one matched token, and the count of users without."""
    stop = default_stopwords() if stopwords is None else frozenset(stopwords)
    out = []
    missing = 0
    for uid in sorted(aggs):
        e = embed_document(preprocess_text(aggs[uid].doc_text, stop), table, uid)
        if e is None:
            missing += 1
        else:
            out.append(e)
    return out, missing
