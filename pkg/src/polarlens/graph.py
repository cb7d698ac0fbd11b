"""Retweet graph construction and seed-clamped label propagation."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .catalog import POLE_NAMES, Dimension, parse_pole
from .corpus import TweetRecord
from .model import Confusion, EvalReport, ModelError, stratified_folds

logger = logging.getLogger(__name__)

EDGE_MODES = ("undirected", "directed")


class GraphError(ValueError):
    pass


@dataclass
class RetweetGraph:
    """Weighted simple digraph; an edge src -> dst means src retweeted dst."""

    nodes: list[str]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    @cached_property
    def index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.nodes)}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def n_retweets(self) -> int:
        return int(self.weight.sum())

    @classmethod
    def from_edges(
        cls, edges: Mapping[tuple[str, str], int] | Iterable[tuple[str, str, int]], nodes: Iterable[str] = ()
    ) -> "RetweetGraph":
        """Build from ``{(src, dst): weight}`` or ``(src, dst, weight)`` triples.

        Self-loops are dropped and parallel edges summed.
        """
        items = edges.items() if isinstance(edges, Mapping) else (((s, d), w) for s, d, w in edges)
        weights: Counter = Counter()
        node_set = set(nodes)
        for (s, d), w in items:
            node_set.add(s)
            node_set.add(d)
            if s != d:
                weights[(s, d)] += w
        ordered = sorted(node_set)
        index = {u: i for i, u in enumerate(ordered)}
        keys = sorted(weights, key=lambda sd: (index[sd[0]], index[sd[1]]))
        src = np.fromiter((index[s] for s, _ in keys), dtype=np.int64, count=len(keys))
        dst = np.fromiter((index[d] for _, d in keys), dtype=np.int64, count=len(keys))
        w = np.fromiter((weights[k] for k in keys), dtype=np.float64, count=len(keys))
        return cls(ordered, src, dst, w)

    @classmethod
    def from_arrays(cls, n_nodes: int, src, dst, weight=None, names: list[str] | None = None) -> "RetweetGraph":
        """Build from integer edge arrays over nodes ``0..n_nodes-1``."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weight = np.ones(len(src)) if weight is None else np.asarray(weight, dtype=np.float64)
        keep = src != dst
        m = sp.coo_matrix((weight[keep], (src[keep], dst[keep])), shape=(n_nodes, n_nodes)).tocsr()
        m.sum_duplicates()
        coo = m.tocoo()
        order = np.lexsort((coo.col, coo.row))
        if names is None:
            width = len(str(max(n_nodes - 1, 0)))
            names = [f"n{i:0{width}d}" for i in range(n_nodes)]
        return cls(list(names), coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), coo.data[order])

    def matrix(self) -> sp.csr_matrix:
        n = self.n_nodes
        return sp.csr_matrix((self.weight, (self.src, self.dst)), shape=(n, n))

    def influence_matrix(self, treat_edges: str = "undirected") -> sp.csr_matrix:
        """Row v lists the nodes whose labels vote on v's label.

        ``directed`` lets labels flow from the retweeted account to the
        retweeter, so a node's voters are the accounts it retweets.
        """
        if treat_edges not in EDGE_MODES:
            raise GraphError(f"treat_edges must be one of {EDGE_MODES}")
        w = self.matrix()
        m = (w + w.T).tocsr() if treat_edges == "undirected" else w
        m.sort_indices()
        return m

    def stats(self) -> dict[str, int]:
        w = self.matrix()
        n_scc = 0
        if self.n_nodes:
            _, comp = connected_components(w, directed=True, connection="strong")
            n_scc = int(np.bincount(comp).max())
        indeg = np.bincount(self.dst, minlength=self.n_nodes)
        outdeg = np.bincount(self.src, minlength=self.n_nodes)
        return {
            "nodes": self.n_nodes,
            "edges": self.n_edges,
            "retweets": self.n_retweets,
            "max_in_degree": int(indeg.max()) if self.n_nodes else 0,
            "max_out_degree": int(outdeg.max()) if self.n_nodes else 0,
            "largest_scc": n_scc,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#nodes\t{self.n_nodes}\n")
            for u in self.nodes:
                fh.write(u + "\n")
            fh.write(f"#edges\t{self.n_edges}\n")
            for s, d, w in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()):
                fh.write(f"{s}\t{d}\t{w!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "RetweetGraph":
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().rstrip("\n").split("\t")
            if head[0] != "#nodes":
                raise GraphError(f"{path}: not a graph file")
            nodes = [fh.readline().rstrip("\n") for _ in range(int(head[1]))]
            head = fh.readline().rstrip("\n").split("\t")
            if head[0] != "#edges":
                raise GraphError(f"{path}: truncated graph file")
            m = int(head[1])
            if m:
                arr = np.loadtxt(fh, dtype=np.float64, ndmin=2, max_rows=m)
            else:
                arr = np.zeros((0, 3))
        return cls(nodes, arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2].copy())


def build_graph(records: Iterable[TweetRecord]) -> RetweetGraph:
    """Collapse retweets into a weighted digraph. Every author is a node."""
    counts: Counter = Counter()
    nodes = set()
    for rec in records:
        nodes.add(rec.user_id)
        if rec.retweeted_user_id:
            counts[(rec.user_id, rec.retweeted_user_id)] += 1
    return RetweetGraph.from_edges(counts, nodes)


# --------------------------------------------------------------------------
# Seeds
# --------------------------------------------------------------------------


@dataclass
class SeedSet:
    dimension: Dimension
    label_of: dict[str, int]
    missing: frozenset[str] = field(default_factory=frozenset)

    def counts(self) -> dict[int, int]:
        c = Counter(self.label_of.values())
        return {+1: c[+1], -1: c[-1]}

    def flag_missing(self, graph: RetweetGraph) -> "SeedSet":
        idx = graph.index
        self.missing = frozenset(u for u in self.label_of if u not in idx)
        if self.missing:
            logger.warning("%d %s seeds are not in the graph", len(self.missing), self.dimension.value)
        return self

    def subset(self, users: Iterable[str]) -> "SeedSet":
        return SeedSet(self.dimension, {u: self.label_of[u] for u in users})


def _normalize_handle(h: str) -> str:
    return h.strip().lstrip("@")


def load_seeds(path: str | Path, dimension: Dimension | str, graph: RetweetGraph | None = None) -> SeedSet:
    """Read a ``user_id<TAB>pole`` file; seeds absent from ``graph`` are kept but flagged."""
    dimension = Dimension(dimension)
    label_of: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise GraphError(f"{path}:{lineno}: expected user_id<TAB>pole")
            try:
                pole = parse_pole(parts[1], dimension)
            except ValueError as e:
                raise GraphError(f"{path}:{lineno}: {e}") from None
            user = _normalize_handle(parts[0])
            if label_of.get(user, pole) != pole:
                raise GraphError(f"{path}:{lineno}: seed {user!r} has conflicting poles")
            label_of[user] = pole
    seeds = SeedSet(dimension, label_of)
    c = seeds.counts()
    logger.info("%s seeds: %d %s, %d %s", dimension.value, c[+1], POLE_NAMES[dimension][+1], c[-1], POLE_NAMES[dimension][-1])
    if graph is not None:
        seeds.flag_missing(graph)
    return seeds


def write_seeds(path: str | Path, seeds: SeedSet) -> None:
    names = POLE_NAMES[seeds.dimension]
    with open(path, "w", encoding="utf-8") as fh:
        for u in sorted(seeds.label_of):
            fh.write(f"{u}\t{names[seeds.label_of[u]]}\n")


# --------------------------------------------------------------------------
# Label propagation
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _lpa_sweep(indptr, indices, data, labels, order, tie_u):
    changed = 0
    for j in range(order.shape[0]):
        v = order[j]
        pos = 0.0
        neg = 0.0
        for k in range(indptr[v], indptr[v + 1]):
            lab = labels[indices[k]]
            if lab == 1:
                pos += data[k]
            elif lab == -1:
                neg += data[k]
        cur = labels[v]
        if pos > neg:
            new = 1
        elif neg > pos:
            new = -1
        elif pos == 0.0:
            new = cur
        elif cur != 0:
            new = cur
        else:
            new = 1 if tie_u[j] < 0.5 else -1
        if new != cur:
            labels[v] = new
            changed += 1
    return changed


@dataclass
class LPAResult:
    labels: dict[str, int]
    changes: list[int]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.changes)


def _run_lpa(m: sp.csr_matrix, init: np.ndarray, clamped: np.ndarray, max_iter: int, rng_seed: int) -> tuple[np.ndarray, list[int], bool]:
    labels = init.astype(np.int8).copy()
    indptr = m.indptr.astype(np.int64)
    indices = m.indices.astype(np.int64)
    data = m.data.astype(np.float64)
    deg = np.diff(indptr)
    free = np.flatnonzero(~clamped & (deg > 0))
    rng = np.random.default_rng(rng_seed)
    changes: list[int] = []
    converged = False
    for _ in range(max_iter):
        order = rng.permutation(free)
        tie_u = rng.random(len(order))
        c = int(_lpa_sweep(indptr, indices, data, labels, order, tie_u))
        changes.append(c)
        if c == 0:
            converged = True
            break
    return labels, changes, converged


def propagate_labels(
    g: RetweetGraph,
    seeds: SeedSet,
    max_iter: int = 100,
    rng_seed: int = 0,
    treat_edges: str = "undirected",
) -> LPAResult:
    """Asynchronous label propagation with seed labels clamped.

    Non-seed nodes start unlabeled and, in a random order each sweep, adopt
    the label with the larger summed edge weight among labeled neighbors.
    On a tie a labeled node keeps its label and an unlabeled one picks at
    random. Nodes never reached stay out of the result.
    """
    idx = g.index
    present = {u: lab for u, lab in seeds.label_of.items() if u in idx}
    if not present:
        raise GraphError(f"no {seeds.dimension.value} seeds are present in the graph")
    poles = set(present.values())
    if poles != {-1, 1}:
        logger.warning("only pole(s) %s seeded for %s", sorted(poles), seeds.dimension.value)
    init = np.zeros(g.n_nodes, dtype=np.int8)
    clamped = np.zeros(g.n_nodes, dtype=bool)
    for u, lab in present.items():
        init[idx[u]] = lab
        clamped[idx[u]] = True
    labels, changes, converged = _run_lpa(g.influence_matrix(treat_edges), init, clamped, max_iter, rng_seed)
    out = {g.nodes[i]: int(labels[i]) for i in np.flatnonzero(labels)}
    return LPAResult(out, changes, converged)


def holdout_eval(
    g: RetweetGraph,
    seeds: SeedSet,
    folds: int = 5,
    rng_seed: int = 0,
    max_iter: int = 100,
    treat_edges: str = "undirected",
) -> EvalReport:
    """Stratified k-fold over seeds: hide one fold, propagate, score the hidden seeds.

    The positive class is the +1 pole. Held-out seeds left unlabeled count
    as misclassified. Seeds missing from the graph are excluded and noted.
    """
    idx = g.index
    users = sorted(u for u in seeds.label_of if u in idx)
    missing = len(seeds.label_of) - len(users)
    y = np.array([1 if seeds.label_of[u] == 1 else 0 for u in users])
    try:
        fold_of = stratified_folds(y, folds, rng_seed)
    except ModelError as e:
        raise GraphError(f"{seeds.dimension.value}: {e}") from None
    confusions = []
    for k in range(folds):
        train = [u for u, f in zip(users, fold_of) if f != k]
        test = [u for u, f in zip(users, fold_of) if f == k]
        res = propagate_labels(g, seeds.subset(train), max_iter, rng_seed + k, treat_edges)
        pred = []
        for u in test:
            lab = res.labels.get(u)
            pred.append(None if lab is None else int(lab == 1))
        truth = [int(seeds.label_of[u] == 1) for u in test]
        confusions.append(Confusion.from_labels(truth, pred))
    notes = [f"{missing} seeds absent from graph"] if missing else []
    return EvalReport.from_folds(confusions, notes)


def write_labels(path: str | Path, labels: Mapping[str, int], dimension: Dimension) -> None:
    names = POLE_NAMES[dimension]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "dim", "pole", "label"])
        for u in sorted(labels):
            w.writerow([u, dimension.value, labels[u], names[labels[u]]])
