"""Command-line pipeline: one subcommand per stage, artifacts under a work directory.

Every stage writes ``manifests/<stage>.json`` recording the sha256 of its
inputs and outputs, the configuration snapshot and library versions.
Outputs carry no timestamps, so rerunning a stage on identical inputs
reproduces identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    GROUPS,
    AnalysisError,
    BiweeklySpec,
    assign_groups,
    drift_table,
    group_activity_series,
    score_heatmap,
    state_fractions,
    top_group_hashtags,
)
from .bow import DEFAULT_SEEDS, HashtagVocab, cooccur_vocab, tfidf_features
from .catalog import (
    POLE_NAMES,
    Bin,
    CatalogError,
    Dimension,
    bin_scores,
    cross_dimension_table,
    domain_histogram,
    load_catalogs,
    read_scores,
    score_users,
    write_cutoffs,
    write_scores,
)
from .corpus import (
    DEFAULT_WINDOW,
    CorpusError,
    ParseStats,
    UserAggregator,
    paused_gc,
    read_corpus,
    read_records,
    read_users,
    write_records,
    write_users,
)
from .embed import EmbedError, embed_users, load_stopwords, load_vectors
from .features import FeatureMatrix
from .graph import EDGE_MODES, GraphError, RetweetGraph, build_graph, holdout_eval, load_seeds, propagate_labels, write_labels
from .lda import LDAError, build_hashtag_corpus, fit_lda, infer_affinities
from .model import FEATURE_KINDS, LogRegModel, ModelError, kfold_cv, predict, train_logreg
from .synth import SynthError, SynthSpec, generate, write_corpus, write_truth

logger = logging.getLogger("polarlens")

STANDARDIZED_KINDS = ("lda", "embed")
REPORT_FILES = ("scores.json", "drift.csv", "activity.csv", "states.csv", "hashtags.json", "evaluation.csv")


class ConfigError(ValueError):
    """Invalid configuration or a missing stage input (exit code 2)."""


VALIDATION_ERRORS = (ConfigError, CatalogError, CorpusError, EmbedError, GraphError, LDAError, ModelError, SynthError, AnalysisError)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    workdir: Path = Path(".")
    corpus: Path | None = None
    catalog_dir: Path | None = None
    seeds_dir: Path | None = None
    vectors: Path | None = None
    stopwords: Path | None = None
    window_start: date = DEFAULT_WINDOW[0]
    window_end: date = DEFAULT_WINDOW[1]
    min_domains: int = 3
    q: float = 0.30
    min_users: int = 10
    max_frac: float = 0.75
    k: int = 100
    K: int = 20
    folds: int = 5
    min_state_users: int = 50
    top_hashtags: int = 50
    heatmap_bins: int = 20
    lda_sweeps: int = 1000
    lda_burn_in: int = 200
    infer_sweeps: int = 50
    infer_burn_in: int = 10
    lr: float = 0.1
    l2: float = 1e-4
    epochs: int = 200
    lpa_mode: str = "undirected"
    max_iter: int = 100
    cooccur_unit: str = "tweet"
    classify_kind: str = "embed"
    rng_seed: int = 42
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        checks = [
            (0 < self.q <= 0.5, "q must be in (0, 0.5]"),
            (self.min_domains >= 1, "min_domains must be >= 1"),
            (self.min_users >= 1, "min_users must be >= 1"),
            (0 < self.max_frac <= 1, "max_frac must be in (0, 1]"),
            (self.k >= 1, "k must be >= 1"),
            (self.K >= 2, "K must be >= 2"),
            (self.folds >= 2, "folds must be >= 2"),
            (self.min_state_users >= 1, "min_state_users must be >= 1"),
            (self.top_hashtags >= 1, "top_hashtags must be >= 1"),
            (self.heatmap_bins >= 1, "heatmap_bins must be >= 1"),
            (self.lda_sweeps >= 1 and 0 <= self.lda_burn_in, "lda_sweeps must be >= 1 and lda_burn_in >= 0"),
            (self.infer_sweeps >= 1 and 0 <= self.infer_burn_in, "infer_sweeps must be >= 1"),
            (self.lr > 0 and self.l2 >= 0 and self.epochs >= 0, "need lr > 0, l2 >= 0, epochs >= 0"),
            (self.lpa_mode in EDGE_MODES, f"lpa_mode must be one of {EDGE_MODES}"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.cooccur_unit in ("tweet", "user"), "cooccur_unit must be tweet or user"),
            (self.classify_kind in FEATURE_KINDS, f"classify_kind must be one of {FEATURE_KINDS}"),
            (self.jobs >= 1, "jobs must be >= 1"),
            (self.window_start <= self.window_end, "window start is after window end"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("corpus", "catalog_dir", "seeds_dir", "vectors", "stopwords"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        return self

    def snapshot(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("workdir", "jobs"):
                continue
            v = getattr(self, f.name)
            out[f.name] = str(v) if isinstance(v, (Path, date)) else v
        return out

    @property
    def window(self) -> tuple[date, date]:
        return (self.window_start, self.window_end)


def _coerce(name: str, raw: Any) -> Any:
    f = PipelineConfig.__dataclass_fields__[name]
    if raw is None:
        return None
    kind = str(f.type)
    if "Path" in kind:
        return Path(raw)
    if "date" in kind:
        return raw if isinstance(raw, date) else date.fromisoformat(str(raw))
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return str(raw)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read ``key = value`` pairs from the ``[polarlens]`` section of an INI file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config file {path}")
    if not parser.has_section("polarlens"):
        raise ConfigError(f"{path}: missing [polarlens] section")
    out = {}
    base = Path(path).parent
    for key, value in parser.items("polarlens"):
        if key == "window":
            out.update(_parse_window(value))
            continue
        if key not in PipelineConfig.__dataclass_fields__:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            v = _coerce(key, value)
        except ValueError as e:
            raise ConfigError(f"{path}: bad value for {key}: {e}") from None
        if isinstance(v, Path) and not v.is_absolute():
            v = base / v
        out[key] = v
    return out


def _parse_window(text: str) -> dict[str, date]:
    try:
        a, b = text.split(":")
        return {"window_start": date.fromisoformat(a), "window_end": date.fromisoformat(b)}
    except ValueError:
        raise ConfigError(f"window must look like 2020-01-21:2020-05-01, got {text!r}") from None


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then the config file, then command-line flags."""
    values: dict[str, Any] = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in PipelineConfig.__dataclass_fields__:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = _coerce(name, v)
    if getattr(args, "window", None):
        values.update(_parse_window(args.window))
    return PipelineConfig(**values).validate()


# --------------------------------------------------------------------------
# Manifests and paths
# --------------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict[str, str]:
    import numba
    import scipy

    return {
        "polarlens": __version__,
        "python": ".".join(platform.python_version_tuple()[:2]),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _rel(path: Path, root: Path) -> str:
    try:
        return Path(path).resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return Path(path).name


def _files_under(paths: Iterable[Path]) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(x for x in p.rglob("*") if x.is_file()))
        elif p.exists():
            out.append(p)
    return out


def write_manifest(
    cfg: PipelineConfig,
    stage: str,
    inputs: Iterable[Path],
    outputs: Iterable[Path],
    extra: dict[str, Any] | None = None,
    path: Path | None = None,
) -> Path:
    root = cfg.workdir
    ins = {_rel(p, root): sha256_file(p) for p in _files_under(inputs)}
    outs = {_rel(p, root): sha256_file(p) for p in _files_under(outputs)}
    input_hash = hashlib.sha256(json.dumps(ins, sort_keys=True).encode()).hexdigest()
    doc = {
        "stage": stage,
        "inputs": ins,
        "input_hash": input_hash,
        "outputs": outs,
        "config": cfg.snapshot(),
        "versions": _versions(),
        "stats": extra or {},
    }
    path = path or (root / "manifests" / f"{stage}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class Paths:
    """Default artifact locations inside the work directory."""

    def __init__(self, workdir: Path):
        self.root = Path(workdir)

    def __getattr__(self, name: str) -> Path:
        names = {
            "tweets": "tweets.jsonl",
            "users": "users.jsonl",
            "scores": "scores.csv",
            "cutoffs": "scores.cutoffs.json",
            "graph": "graph.tsv",
            "lda_model": "lda_model.json",
            "feats_lda": "feats_lda.csv",
            "feats_embed": "feats_embed.csv",
            "analysis": "analysis",
            "report": "report",
            "groups": "groups.csv",
        }
        if name not in names:
            raise AttributeError(name)
        return self.root / names[name]

    def lpa_labels(self, dim: Dimension) -> Path:
        return self.root / f"labels_lpa_{dim.value}.csv"

    def lpa_eval(self, dim: Dimension) -> Path:
        return self.root / f"eval_lpa_{dim.value}.json"

    def feats(self, kind: str, dim: Dimension) -> Path:
        return self.root / (f"feats_bow_{dim.value}.csv" if kind == "bow" else f"feats_{kind}.csv")

    def vocab(self, dim: Dimension) -> Path:
        return self.root / f"vocab_bow_{dim.value}.json"

    def model(self, kind: str, dim: Dimension) -> Path:
        return self.root / f"model_{kind}_{dim.value}.json"

    def eval(self, kind: str, dim: Dimension) -> Path:
        return self.root / f"eval_{kind}_{dim.value}.json"

    def labels(self, kind: str, dim: Dimension) -> Path:
        return self.root / f"labels_{kind}_{dim.value}.csv"


def require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise ConfigError(f"missing {path}: run {producer} first")
    return Path(path)


def _need(value: Path | None, flag: str) -> Path:
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


def _dump_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map_jobs(cfg: PipelineConfig, fn: Callable, items: Sequence) -> list:
    if cfg.jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig, out: Path | None = None) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    corpus = _need(cfg.corpus, "--input")
    users_path = out or p.users
    stats = ParseStats()
    agg = UserAggregator(BiweeklySpec.default())
    records = []
    with paused_gc():
        for rec in read_corpus(corpus, window=cfg.window, stats=stats):
            agg.add(rec)
            records.append(rec)
        records.sort(key=lambda r: (r.timestamp, r.tweet_id, r.user_id))
        users = agg.build()
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        write_records(p.tweets, records)
        write_users(users_path, users)
    summary = {
        "parsed": stats.parsed,
        "malformed": stats.malformed,
        "out_of_window": stats.out_of_window,
        "users": len(users),
    }
    logger.info("ingest: %s", summary)
    write_manifest(cfg, "ingest", [corpus], [p.tweets, users_path], summary)
    return summary


def stage_score(cfg: PipelineConfig, users: Path | None = None, out: Path | None = None) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    users = require(users or p.users, "ingest")
    catalog_dir = _need(cfg.catalog_dir, "--catalog-dir")
    out = out or p.scores
    cutoffs_path = out.with_suffix(".cutoffs.json")
    with paused_gc():
        aggs = read_users(users)
    catalogs = load_catalogs(catalog_dir)
    all_scores = []
    cutoffs = {}
    summary = {}
    for dim in Dimension:
        scores = score_users(aggs, catalogs[dim], cfg.min_domains)
        eligible = [s for s in scores if s.n_domains >= cfg.min_domains]
        if not eligible:
            logger.warning("no users have %d+ %s domains", cfg.min_domains, dim.value)
            all_scores.extend(scores)
            continue
        binned, cut = bin_scores(scores, cfg.q, cfg.min_domains)
        cutoffs[dim] = cut
        all_scores.extend(binned)
        summary[dim.value] = {
            "scored": len(scores),
            "eligible": len(eligible),
            "pos": sum(s.bin == Bin.POS for s in binned),
            "neg": sum(s.bin == Bin.NEG for s in binned),
            "lo": cut[0],
            "hi": cut[1],
        }
    write_scores(out, all_scores)
    write_cutoffs(cutoffs_path, cutoffs, cfg.q, cfg.min_domains)
    logger.info("score: %s", summary)
    write_manifest(cfg, "score", [users, catalog_dir], [out, cutoffs_path], summary)
    return summary


def stage_graph(cfg: PipelineConfig, out: Path | None = None) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    tweets = require(p.tweets, "ingest")
    out = out or p.graph
    g = build_graph(read_records(tweets))
    g.save(out)
    st = g.stats()
    logger.info("graph: %s", st)
    write_manifest(cfg, "graph", [tweets], [out], st)
    return st


def _seed_path(cfg: PipelineConfig, dim: Dimension) -> Path:
    seeds_dir = _need(cfg.seeds_dir, "--seeds-dir")
    return require(Path(seeds_dir) / f"{dim.value}.tsv", f"seed curation for {dim.value}")


def stage_lpa(
    cfg: PipelineConfig,
    dims: Sequence[Dimension] = tuple(Dimension),
    graph: Path | None = None,
    seeds: Path | None = None,
    out: Path | None = None,
) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    gpath = require(graph or p.graph, "graph")
    g = RetweetGraph.load(gpath)

    def run(dim: Dimension) -> tuple[dict, list[Path], list[Path]]:
        spath = seeds if seeds is not None else _seed_path(cfg, dim)
        seedset = load_seeds(spath, dim, g)
        res = propagate_labels(g, seedset, cfg.max_iter, cfg.rng_seed, cfg.lpa_mode)
        lab_path = out if out is not None else p.lpa_labels(dim)
        write_labels(lab_path, res.labels, dim)
        counts = seedset.counts()
        info = {
            "seeds": {POLE_NAMES[dim][k]: v for k, v in counts.items()},
            "seeds_missing": len(seedset.missing),
            "labeled": len(res.labels),
            "iterations": res.iterations,
            "converged": res.converged,
            "changes": res.changes,
        }
        ev_path = p.lpa_eval(dim)
        try:
            rep = holdout_eval(g, seedset, cfg.folds, cfg.rng_seed, cfg.max_iter, cfg.lpa_mode)
            _dump_json(ev_path, rep.to_json())
            info["holdout_accuracy"] = rep.accuracy
        except GraphError as e:
            logger.warning("%s holdout skipped: %s", dim.value, e)
            _dump_json(ev_path, {"skipped": str(e)})
        return info, [spath], [lab_path, ev_path]

    results = _map_jobs(cfg, run, list(dims))
    summary = {d.value: r[0] for d, r in zip(dims, results)}
    ins = [gpath] + [x for r in results for x in r[1]]
    outs = [x for r in results for x in r[2]]
    write_manifest(cfg, "lpa", ins, outs, summary)
    return summary


def stage_features(cfg: PipelineConfig, kind: str, dims: Sequence[Dimension] = tuple(Dimension), out: Path | None = None) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    users = require(p.users, "ingest")
    aggs = read_users(users)
    ins: list[Path] = [users]
    outs: list[Path] = []
    summary: dict[str, Any] = {}
    if kind == "bow":
        tweets = require(p.tweets, "ingest")
        ins.append(tweets)
        records = list(read_records(tweets)) if cfg.cooccur_unit == "tweet" else None
        for dim in dims:
            pos, neg = DEFAULT_SEEDS[dim]
            vocab = cooccur_vocab(records, pos, neg, cfg.k, cfg.cooccur_unit, aggs, dim)
            feats, _, excluded = tfidf_features(aggs, vocab)
            fm = FeatureMatrix.from_sparse(feats, len(vocab.vocab), "bow")
            fpath = out if out is not None and len(dims) == 1 else p.feats("bow", dim)
            fm.save(fpath)
            vocab.save(p.vocab(dim))
            outs += [fpath, p.vocab(dim)]
            summary[dim.value] = {"vocab": len(vocab.vocab), "users": len(feats), "excluded": excluded}
    elif kind == "lda":
        corpus = build_hashtag_corpus(aggs, cfg.min_users, cfg.max_frac)
        model = fit_lda(corpus, cfg.K, sweeps=cfg.lda_sweeps, burn_in=cfg.lda_burn_in, rng_seed=cfg.rng_seed)
        docs = [{corpus.vocab[i]: int(c) for i, c in zip(*np.unique(d, return_counts=True))} for d in corpus.docs]
        vecs = infer_affinities(model, docs, cfg.infer_sweeps, cfg.infer_burn_in, cfg.rng_seed, corpus.user_ids)
        fm = FeatureMatrix.from_affinities(vecs, "lda")
        fpath = out or p.feats_lda
        fm.save(fpath)
        model.save(p.lda_model)
        outs += [fpath, p.lda_model]
        summary = {"vocab": len(corpus.vocab), "docs": len(corpus.docs), "dropped": corpus.n_dropped, "K": cfg.K}
    elif kind == "embed":
        vectors = _need(cfg.vectors, "--vectors")
        table = load_vectors(vectors)
        stop = load_stopwords(cfg.stopwords)
        embs, missing = embed_users(aggs, table, stop)
        if not embs:
            raise ConfigError("no user matched any token in the vector file")
        fm = FeatureMatrix.from_embeddings(embs, "embed")
        fpath = out or p.feats_embed
        fm.save(fpath)
        ins += [vectors] + ([cfg.stopwords] if cfg.stopwords else [])
        outs.append(fpath)
        summary = {"users": len(embs), "no_match": missing, "dim": table.dim}
    else:
        raise ConfigError(f"unknown feature kind {kind!r}")
    logger.info("features %s: %s", kind, summary)
    write_manifest(cfg, f"features-{kind}", ins, outs, summary)
    return summary


def _load_features(p: Paths, kind: str, dim: Dimension, path: Path | None = None) -> tuple[FeatureMatrix, Path]:
    fpath = require(path or p.feats(kind, dim), f"features {kind}")
    width = None
    if kind == "bow" and path is None:
        width = len(HashtagVocab.load(require(p.vocab(dim), "features bow")).vocab)
    return FeatureMatrix.load(fpath, kind, width), fpath


def _bin_labels(scores_path: Path, dim: Dimension) -> dict[str, int]:
    return {s.user_id: int(s.bin == Bin.POS) for s in read_scores(scores_path)[dim] if s.bin != Bin.UNBINNED}


def stage_train(
    cfg: PipelineConfig,
    kinds: Sequence[str] = FEATURE_KINDS,
    dims: Sequence[Dimension] = tuple(Dimension),
    features: Path | None = None,
    labels: Path | None = None,
    out: Path | None = None,
) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    scores = require(labels or p.scores, "score")
    jobs = [(k, d) for k in kinds for d in dims]

    def run(job):
        kind, dim = job
        fm, fpath = _load_features(p, kind, dim, features)
        y_map = _bin_labels(scores, dim)
        X, y, _ = fm.rows_for(y_map)
        params = dict(lr=cfg.lr, l2=cfg.l2, epochs=cfg.epochs, standardize=kind in STANDARDIZED_KINDS)
        ev_path = p.eval(kind, dim)
        mpath = out if out is not None and len(jobs) == 1 else p.model(kind, dim)
        counts = [int((y == 1).sum()), int((y == 0).sum())]
        if min(counts) < cfg.folds:
            msg = f"{kind}/{dim.value}: {counts[0]} positive and {counts[1]} negative labeled users, need {cfg.folds} of each"
            logger.warning("%s; skipped", msg)
            _dump_json(ev_path, {"skipped": msg})
            if mpath.exists():
                mpath.unlink()
            return {"skipped": msg}, [fpath], [ev_path]
        rep = kfold_cv(X, y, cfg.folds, cfg.rng_seed, **params)
        _dump_json(ev_path, rep.to_json())
        model = train_logreg(X, y, rng_seed=cfg.rng_seed, dimension=dim.value, feature_kind=kind, **params)
        model.metadata["features_sha256"] = sha256_file(fpath)
        model.save(mpath)
        return {"n": rep.n, "accuracy": rep.accuracy, "f1": rep.f1}, [fpath], [ev_path, mpath]

    results = _map_jobs(cfg, run, jobs)
    summary = {f"{k}/{d.value}": r[0] for (k, d), r in zip(jobs, results)}
    ins = [scores] + [x for r in results for x in r[1]]
    outs = [x for r in results for x in r[2]]
    write_manifest(cfg, "train", ins, outs, summary)
    return summary


def stage_classify(
    cfg: PipelineConfig,
    kinds: Sequence[str] = FEATURE_KINDS,
    dims: Sequence[Dimension] = tuple(Dimension),
    model_path: Path | None = None,
    features: Path | None = None,
    out: Path | None = None,
) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    summary = {}
    ins, outs = [], []
    if model_path is not None:
        model = LogRegModel.load(require(model_path, "train"))
        kind = model.feature_kind or "embed"
        dim = Dimension(model.dimension)
        jobs = [(kind, dim, model_path)]
    else:
        jobs = [(k, d, p.model(k, d)) for k in kinds for d in dims]
    for kind, dim, mpath in jobs:
        if not mpath.exists():
            if model_path is None and p.eval(kind, dim).exists():
                logger.warning("no %s/%s model (training was skipped)", kind, dim.value)
                continue
            require(mpath, "train")
        model = LogRegModel.load(mpath)
        fm, fpath = _load_features(p, kind, dim, features)
        prob, lab = predict(model, fm.X)
        lpath = out if out is not None and len(jobs) == 1 else p.labels(kind, dim)
        names = POLE_NAMES[dim]
        with open(lpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "dim", "pole", "label", "prob"])
            for u, pr, lb in sorted(zip(fm.user_ids, np.atleast_1d(prob).tolist(), np.atleast_1d(lab).tolist())):
                pole = 1 if lb == 1 else -1
                w.writerow([u, dim.value, pole, names[pole], repr(float(pr))])
        ins += [mpath, fpath]
        outs.append(lpath)
        summary[f"{kind}/{dim.value}"] = {"users": len(fm.user_ids), "pos": int(np.sum(lab))}
    write_manifest(cfg, "classify", ins, outs, summary)
    return summary


def read_label_file(path: Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["user_id"]: int(row["pole"]) for row in csv.DictReader(fh)}


def _fraction_rows(rows) -> list[list[Any]]:
    out = []
    for r in rows:
        out.append([r.key, r.n, r.flag or ""] + [repr(r.fractions[g]) if r.fractions else "" for g in GROUPS])
    return out


def _write_csv(path: Path, header: list[str], rows: Iterable[list[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def stage_analyze(cfg: PipelineConfig, kind: str | None = None) -> dict[str, Any]:
    p = Paths(cfg.workdir)
    kind = kind or cfg.classify_kind
    users = require(p.users, "ingest")
    scores_path = require(p.scores, "score")
    catalog_dir = _need(cfg.catalog_dir, "--catalog-dir")
    label_paths = {d: require(p.labels(kind, d), f"classify (for {kind} {d.value} labels)") for d in Dimension}

    aggs = read_users(users)
    catalogs = load_catalogs(catalog_dir)
    spec = BiweeklySpec.default()
    scores = read_scores(scores_path)
    labels = {d: read_label_file(path) for d, path in label_paths.items()}
    groups = assign_groups(labels)
    outdir = p.analysis

    _write_csv(p.groups, ["user_id", "group"], [[u, g.value] for u, g in sorted(groups.items())])

    table = cross_dimension_table(scores, cfg.min_domains)
    grids = score_heatmap(table, cfg.heatmap_bins)
    cut = json.loads(require(p.cutoffs, "score").read_text(encoding="utf-8"))["cutoffs"]
    score_doc = {
        "bins": cfg.heatmap_bins,
        "edges": np.linspace(-1.0, 1.0, cfg.heatmap_bins + 1).tolist(),
        "n_users_all_dims": len(table),
        "heatmaps": {f"{a.value}_{b.value}": grid.tolist() for (a, b), grid in grids.items()},
        "histograms": {
            d.value: domain_histogram([s for s in scores[d] if s.n_domains >= cfg.min_domains], cfg.heatmap_bins)
            for d in Dimension
        },
        "cutoffs": cut,
    }
    _dump_json(outdir / "scores.json", score_doc)

    drift = drift_table(aggs, catalogs, spec)
    drift_rows = []
    for dim in Dimension:
        if dim in drift:
            n, seq = drift[dim]
            drift_rows += [[dim.value, n, f"{t}-{t + 1}", repr(v)] for t, v in enumerate(seq, 1)]
    _write_csv(outdir / "drift.csv", ["dim", "n_users", "buckets", "delta_bar"], drift_rows)

    header = ["key", "n", "flag"] + [g.value for g in GROUPS]
    activity = group_activity_series(groups, aggs, spec)
    _write_csv(outdir / "activity.csv", ["bucket"] + header[1:], _fraction_rows(activity))
    states = state_fractions(groups, {u: a.state for u, a in aggs.items()}, cfg.min_state_users)
    _write_csv(outdir / "states.csv", ["state"] + header[1:], _fraction_rows(states))

    tags = top_group_hashtags(groups, aggs, cfg.top_hashtags)
    _dump_json(outdir / "hashtags.json", {g.value: [[h, c] for h, c in tags[g]] for g in GROUPS})

    summary = {
        "classified": len(groups),
        "groups": {g.value: sum(1 for x in groups.values() if x == g) for g in GROUPS},
        "cross_dimension_users": len(table),
        "drift_users": {d.value: drift[d][0] for d in drift},
        "states_reported": sum(1 for r in states if r.flag is None),
    }
    write_manifest(
        cfg,
        "analyze",
        [users, scores_path, catalog_dir, p.cutoffs] + list(label_paths.values()),
        [p.groups, outdir],
        summary,
    )
    return summary


def _eval_rows(p: Paths) -> tuple[list[list[Any]], list[str]]:
    rows, missing = [], []
    methods = [("lpa", p.lpa_eval)] + [(k, (lambda d, k=k: p.eval(k, d))) for k in FEATURE_KINDS]
    for method, path_of in methods:
        for dim in Dimension:
            path = path_of(dim)
            if not path.exists():
                missing.append(f"{method}/{dim.value}")
                rows.append([method, dim.value, "", "", "", "", "", "not run"])
                continue
            ev = json.loads(path.read_text(encoding="utf-8"))
            if "skipped" in ev:
                rows.append([method, dim.value, "", "", "", "", "", ev["skipped"]])
                continue
            rows.append(
                [method, dim.value, ev["n"], repr(ev["accuracy"]), repr(ev["precision"]), repr(ev["recall"]), repr(ev["f1"]), "; ".join(ev["notes"])]
            )
    return rows, missing


def stage_report(cfg: PipelineConfig, out: Path | None = None) -> dict[str, Any]:
    """Collect analysis outputs and evaluation tables into one directory."""
    p = Paths(cfg.workdir)
    analysis = p.analysis
    needed = [analysis / f for f in REPORT_FILES if f != "evaluation.csv"]
    missing = [str(x) for x in needed if not x.exists()]
    if missing:
        raise ConfigError("missing analysis outputs: " + ", ".join(missing) + "; run analyze first")
    outdir = out or p.report
    outdir.mkdir(parents=True, exist_ok=True)
    for src in needed:
        (outdir / src.name).write_bytes(src.read_bytes())
    rows, not_run = _eval_rows(p)
    _write_csv(outdir / "evaluation.csv", ["method", "dim", "n", "accuracy", "precision", "recall", "f1", "note"], rows)
    if not_run:
        logger.warning("evaluation rows without results: %s", ", ".join(not_run))
    manifests = sorted((cfg.workdir / "manifests").glob("*.json"))
    write_manifest(
        cfg, "report", needed + manifests, [outdir / f for f in REPORT_FILES], {"not_run": not_run}, path=outdir / "manifest.json"
    )
    return {"files": list(REPORT_FILES), "not_run": not_run}


def stage_synth(spec_path: Path | None, out: Path, truth: Path | None, bundle: Path | None, overrides: dict) -> dict[str, Any]:
    spec_obj = json.loads(Path(spec_path).read_text(encoding="utf-8")) if spec_path else {}
    spec_obj.update({k: v for k, v in overrides.items() if v is not None})
    spec = SynthSpec.from_json(spec_obj)
    sc = generate(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(out, sc.records)
    if truth is not None:
        write_truth(truth, sc.truth)
    sc.write_aux(bundle or out.parent)
    return {"records": len(sc.records), "users": len(sc.truth)}


def run_pipeline(cfg: PipelineConfig, kinds: Sequence[str] = FEATURE_KINDS) -> dict[str, Any]:
    """ingest -> score -> graph -> lpa -> features -> train -> classify -> analyze -> report."""
    out = {"ingest": stage_ingest(cfg), "score": stage_score(cfg), "graph": stage_graph(cfg)}
    if cfg.seeds_dir is not None:
        out["lpa"] = stage_lpa(cfg)
    kinds = [k for k in kinds if k != "embed" or cfg.vectors is not None]
    if not kinds:
        raise ConfigError("no feature kinds to build: embed needs --vectors")
    for k in kinds:
        out[f"features-{k}"] = stage_features(cfg, k)
    out["train"] = stage_train(cfg, kinds)
    out["classify"] = stage_classify(cfg, kinds)
    kind = cfg.classify_kind
    if kind not in kinds:
        kind = "bow" if "bow" in kinds else kinds[0]
        logger.warning("%s features were not built; analyzing %s labels instead", cfg.classify_kind, kind)
    out["analyze"] = stage_analyze(cfg, kind)
    out["report"] = stage_report(cfg)
    return out


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _dims(value: str | None) -> tuple[Dimension, ...]:
    if value is None or value == "all":
        return tuple(Dimension)
    try:
        return tuple(Dimension(v.strip()) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"unknown dimension in {value!r}") from None


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", type=Path, help="INI file with a [polarlens] section")
    sp.add_argument("--workdir", type=Path, help="artifact directory (default: .)")
    sp.add_argument("--catalog-dir", dest="catalog_dir", type=Path)
    sp.add_argument("--seeds-dir", dest="seeds_dir", type=Path)
    sp.add_argument("--vectors", type=Path)
    sp.add_argument("--stopwords", type=Path)
    sp.add_argument("--window", help="START:END dates, inclusive")
    sp.add_argument("--rng", dest="rng_seed", type=int)
    sp.add_argument("--jobs", type=int, help="worker cap for per-dimension work")
    sp.add_argument("--min-domains", dest="min_domains", type=int)
    sp.add_argument("--q", type=float)
    sp.add_argument("--folds", type=int)
    sp.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polarlens", description="Multi-dimensional polarization pipeline")
    ap.add_argument("--version", action="version", version=f"polarlens {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="parse the corpus into normalized tweets and per-user aggregates")
    _common(sp)
    sp.add_argument("--input", dest="corpus", type=Path)
    sp.add_argument("--out", type=Path, help="users file (default: <workdir>/users.jsonl)")

    sp = sub.add_parser("score", help="domain scores and 30%% bins per dimension")
    _common(sp)
    sp.add_argument("--users", type=Path)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("graph", help="build the retweet graph")
    _common(sp)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("lpa", help="seeded label propagation with held-out seed evaluation")
    _common(sp)
    sp.add_argument("--graph", type=Path)
    sp.add_argument("--seeds", type=Path, help="single seed TSV (requires --dim)")
    sp.add_argument("--dim")
    sp.add_argument("--mode", dest="lpa_mode", choices=EDGE_MODES)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("features", help="bow, lda or embed user features")
    _common(sp)
    sp.add_argument("kind", choices=FEATURE_KINDS)
    sp.add_argument("--dim")
    sp.add_argument("--k", dest="k", type=int, help="co-occurring hashtags per seed group (bow)")
    sp.add_argument("--topics", "--K", dest="K", type=int, help="topic count (lda)")
    sp.add_argument("--sweeps", dest="lda_sweeps", type=int)
    sp.add_argument("--burn-in", dest="lda_burn_in", type=int)
    sp.add_argument("--min-users", dest="min_users", type=int)
    sp.add_argument("--max-frac", dest="max_frac", type=float)
    sp.add_argument("--unit", dest="cooccur_unit", choices=("tweet", "user"))
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("train", help="fit logistic regression per feature kind and dimension")
    _common(sp)
    sp.add_argument("--kind", help="comma list of feature kinds (default: all present)")
    sp.add_argument("--dim")
    sp.add_argument("--features", type=Path)
    sp.add_argument("--labels", type=Path, help="scores.csv from the score stage")
    sp.add_argument("--lr", type=float)
    sp.add_argument("--l2", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("classify", help="apply trained models to every user with features")
    _common(sp)
    sp.add_argument("--kind")
    sp.add_argument("--dim")
    sp.add_argument("--model", type=Path)
    sp.add_argument("--features", type=Path)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("analyze", help="groups, drift, activity, states, hashtags, heatmaps")
    _common(sp)
    sp.add_argument("--kind", dest="classify_kind", choices=FEATURE_KINDS)
    sp.add_argument("--min-state-users", dest="min_state_users", type=int)

    sp = sub.add_parser("report", help="bundle analysis outputs and evaluation tables")
    _common(sp)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("run", help="run every stage in order")
    _common(sp)
    sp.add_argument("--input", dest="corpus", type=Path)
    sp.add_argument("--kind", help="feature kinds to build (default: all)")
    sp.add_argument("--classify-kind", dest="classify_kind", choices=FEATURE_KINDS)
    sp.add_argument("--sweeps", dest="lda_sweeps", type=int)
    sp.add_argument("--topics", dest="K", type=int)

    sp = sub.add_parser("synth", help="generate a synthetic corpus with planted labels")
    sp.add_argument("--spec", type=Path, help="JSON object of SynthSpec fields")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--truth", type=Path)
    sp.add_argument("--bundle", type=Path, help="directory for catalogs, seeds and vectors (default: next to --out)")
    sp.add_argument("--n-users", dest="n_users", type=int)
    sp.add_argument("--rng", dest="rng_seed", type=int)
    sp.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _kinds(value: str | None) -> tuple[str, ...]:
    if value is None:
        return FEATURE_KINDS
    kinds = tuple(v.strip() for v in value.split(","))
    bad = [k for k in kinds if k not in FEATURE_KINDS]
    if bad:
        raise ConfigError(f"unknown feature kind(s): {bad}")
    return kinds


def _present_kinds(cfg: PipelineConfig, requested: str | None) -> tuple[str, ...]:
    if requested is not None:
        return _kinds(requested)
    p = Paths(cfg.workdir)
    present = tuple(k for k in FEATURE_KINDS if any(p.feats(k, d).exists() for d in Dimension))
    if not present:
        raise ConfigError("no feature files found: run features first")
    return present


def dispatch(args: argparse.Namespace) -> dict[str, Any]:
    cmd = args.command
    if cmd == "synth":
        return stage_synth(args.spec, args.out, args.truth, args.bundle, {"n_users": args.n_users, "rng_seed": args.rng_seed})
    cfg = build_config(args)
    if cmd == "ingest":
        return stage_ingest(cfg, args.out)
    if cmd == "score":
        return stage_score(cfg, args.users, args.out)
    if cmd == "graph":
        return stage_graph(cfg, args.out)
    if cmd == "lpa":
        dims = _dims(args.dim)
        if args.seeds is not None and len(dims) != 1:
            raise ConfigError("--seeds needs a single --dim")
        return stage_lpa(cfg, dims, args.graph, args.seeds, args.out)
    if cmd == "features":
        return stage_features(cfg, args.kind, _dims(args.dim), args.out)
    if cmd == "train":
        require(args.labels or Paths(cfg.workdir).scores, "score")
        return stage_train(cfg, _present_kinds(cfg, args.kind), _dims(args.dim), args.features, args.labels, args.out)
    if cmd == "classify":
        return stage_classify(cfg, _present_kinds(cfg, args.kind), _dims(args.dim), args.model, args.features, args.out)
    if cmd == "analyze":
        return stage_analyze(cfg)
    if cmd == "report":
        return stage_report(cfg, args.out)
    if cmd == "run":
        return run_pipeline(cfg, _kinds(args.kind))
    raise ConfigError(f"unknown command {cmd}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        summary = dispatch(args)
    except VALIDATION_ERRORS as e:
        print(f"polarlens {args.command}: error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"polarlens {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        logger.debug("unhandled error", exc_info=True)
        print(f"polarlens {args.command}: runtime error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
