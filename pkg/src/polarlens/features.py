"""Per-user feature matrices aligned to a user index, and their CSV forms."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .bow import SparseFeatures
from .embed import DocEmbedding
from .lda import AffinityVector


@dataclass
class FeatureMatrix:
    kind: str
    user_ids: list[str]
    X: np.ndarray | sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def sparse(self) -> bool:
        return sp.issparse(self.X)

    @classmethod
    def from_sparse(cls, feats: Sequence[SparseFeatures], dim: int, kind: str = "bow") -> "FeatureMatrix":
        indptr = np.cumsum([0] + [len(f.indices) for f in feats])
        indices = np.array([i for f in feats for i in f.indices], dtype=np.int64)
        data = np.array([v for f in feats for v in f.values], dtype=float)
        X = sp.csr_matrix((data, indices, indptr), shape=(len(feats), dim))
        return cls(kind, [f.user_id for f in feats], X)

    @classmethod
    def from_affinities(cls, vecs: Sequence[AffinityVector], kind: str = "lda") -> "FeatureMatrix":
        return cls(kind, [v.user_id for v in vecs], np.vstack([v.theta for v in vecs]))

    @classmethod
    def from_embeddings(cls, embs: Sequence[DocEmbedding], kind: str = "embed") -> "FeatureMatrix":
        return cls(kind, [e.user_id for e in embs], np.vstack([e.vector for e in embs]))

    def rows_for(self, labels: Mapping[str, int]) -> tuple[np.ndarray | sp.csr_matrix, np.ndarray, list[str]]:
        """Rows of users present in ``labels``, with their labels, in matrix order."""
        keep = [i for i, u in enumerate(self.user_ids) if u in labels]
        users = [self.user_ids[i] for i in keep]
        y = np.array([labels[u] for u in users], dtype=int)
        return self.X[keep], y, users

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.sparse:
                w.writerow(["user_id", "index", "value"])
                X = self.X.tocsr()
                for r, u in enumerate(self.user_ids):
                    for c, v in zip(X.indices[X.indptr[r] : X.indptr[r + 1]], X.data[X.indptr[r] : X.indptr[r + 1]]):
                        w.writerow([u, int(c), repr(float(v))])
            else:
                w.writerow(["user_id"] + [f"f{i}" for i in range(self.dim)])
                for u, row in zip(self.user_ids, self.X):
                    w.writerow([u] + [repr(float(v)) for v in row])

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None, dim: int | None = None) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header == ["user_id", "index", "value"]:
                order: dict[str, int] = {}
                rows, cols, vals = [], [], []
                for u, c, v in reader:
                    r = order.setdefault(u, len(order))
                    rows.append(r)
                    cols.append(int(c))
                    vals.append(float(v))
                width = dim if dim is not None else (max(cols) + 1 if cols else 0)
                X = sp.csr_matrix((vals, (rows, cols)), shape=(len(order), width))
                return cls(kind or "bow", list(order), X)
            users, data = [], []
            for row in reader:
                users.append(row[0])
                data.append([float(v) for v in row[1:]])
            X = np.asarray(data, dtype=float).reshape(len(users), len(header) - 1)
            return cls(kind or "dense", users, X)
