"""Binary logistic regression per polarization dimension, with k-fold evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("bow", "lda", "embed")


class ModelError(ValueError):
    pass


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int | None]) -> "Confusion":
        """Count outcomes for the positive class (1).

        A prediction of ``None`` (no label) is always counted as wrong.
        """
        tp = fp = tn = fn = 0
        for t, p in zip(y_true, y_pred):
            if p is None:
                p = 1 - t
            if t == 1:
                tp += p == 1
                fn += p != 1
            else:
                tn += p != 1
                fp += p == 1
        return cls(int(tp), int(fp), int(tn), int(fn))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False


def metrics(c: Confusion) -> Metrics:
    """Accuracy, precision, recall and F1 for the positive class.

    Precision or recall with a zero denominator are reported as 0 and flagged.
    """
    if min(c.tp, c.fp, c.tn, c.fn) < 0 or c.total == 0:
        raise ModelError(f"invalid confusion counts: {c}")
    acc = (c.tp + c.tn) / c.total
    p_undef = c.tp + c.fp == 0
    r_undef = c.tp + c.fn == 0
    p = 0.0 if p_undef else c.tp / (c.tp + c.fp)
    r = 0.0 if r_undef else c.tp / (c.tp + c.fn)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return Metrics(acc, p, r, f1, p_undef, r_undef)


@dataclass
class EvalReport:
    n: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: Confusion
    folds: list[Metrics] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_folds(cls, fold_confusions: Sequence[Confusion], notes: list[str] | None = None) -> "EvalReport":
        per = [metrics(c) for c in fold_confusions]
        total = Confusion()
        for c in fold_confusions:
            total = total + c
        return cls(
            n=total.total,
            accuracy=float(np.mean([m.accuracy for m in per])),
            precision=float(np.mean([m.precision for m in per])),
            recall=float(np.mean([m.recall for m in per])),
            f1=float(np.mean([m.f1 for m in per])),
            confusion=total,
            folds=per,
            notes=list(notes or []),
        )

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d


def stratified_folds(y: Sequence[int], folds: int, rng_seed: int = 0) -> np.ndarray:
    """Fold id per sample; each class is spread round-robin after shuffling.

    Per-class counts differ by at most one between folds, and so do fold sizes.
    """
    y = np.asarray(y)
    if folds < 2:
        raise ModelError("need at least 2 folds")
    rng = np.random.default_rng(rng_seed)
    out = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < folds:
            raise ModelError(f"class {cls.item()!r} has {len(idx)} samples, fewer than {folds} folds")
        idx = rng.permutation(idx)
        out[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    return out


# --------------------------------------------------------------------------
# Logistic regression
# --------------------------------------------------------------------------


def loss_and_grad(w: np.ndarray, b: float, X, y: np.ndarray, l2: float) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus ``l2/2 * |w|^2`` and its gradient (bias unpenalized)."""
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = (expit(z) - y) / len(y)
    gw = np.asarray(X.T @ r).ravel() + l2 * w
    return loss, gw, float(r.sum())


def lipschitz_constant(X, l2: float, iters: int = 100) -> float:
    """Upper bound on the gradient's Lipschitz constant, by power iteration.

    The Hessian of the mean log-loss is bounded by ``A^T A / (4n)`` where
    ``A`` is X with a column of ones appended for the bias.
    """
    n, d = X.shape
    v = np.ones(d + 1) / np.sqrt(d + 1)
    lam = 0.0
    for _ in range(iters):
        av = X @ v[:d] + v[d]
        u = np.empty(d + 1)
        u[:d] = np.asarray(X.T @ av).ravel()
        u[d] = av.sum()
        norm = np.linalg.norm(u)
        if norm == 0:
            break
        new = norm
        v = u / norm
        if abs(new - lam) <= 1e-9 * max(new, 1.0):
            lam = new
            break
        lam = new
    # power iteration approaches from below; pad for safety
    return 1.01 * lam / (4 * n) + l2


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    dimension: str | None = None
    feature_kind: str | None = None
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def transform(self, X):
        if X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.mean is None:
            return X
        if sp.issparse(X):
            X = X.toarray()
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(self.transform(X) @ self.weights + self.bias).ravel()

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_json(self) -> dict[str, Any]:
        return {
            "dimension": self.dimension,
            "feature_kind": self.feature_kind,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "mean": None if self.mean is None else self.mean.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "metadata": self.metadata,
            "loss_history": self.loss_history,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "LogRegModel":
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls(
            weights=np.asarray(obj["weights"], dtype=float),
            bias=float(obj["bias"]),
            dimension=obj.get("dimension"),
            feature_kind=obj.get("feature_kind"),
            mean=arr(obj.get("mean")),
            scale=arr(obj.get("scale")),
            metadata=obj.get("metadata", {}),
            loss_history=obj.get("loss_history", []),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LogRegModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _standardizer(X) -> tuple[np.ndarray, np.ndarray]:
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def train_logreg(
    X,
    y: Sequence[int],
    lr: float = 0.1,
    l2: float = 1e-4,
    epochs: int = 200,
    rng_seed: int = 0,
    standardize: bool = False,
    dimension: str | None = None,
    feature_kind: str | None = None,
) -> LogRegModel:
    """Fit by full-batch gradient descent from a zero start.

    ``y`` holds 1 for the positive pole and 0 for the negative pole. The loss
    before each update is recorded in ``loss_history`` (plus the final loss).
    """
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise ModelError("X and y disagree on sample count")
    if len(np.unique(y)) < 2:
        raise ModelError("training labels contain a single class")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ModelError("labels must be 0/1")

    mean = scale = None
    if standardize:
        mean, scale = _standardizer(X)
        Xt = ((X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)) - mean) / scale
    else:
        Xt = X if sp.issparse(X) else np.asarray(X, dtype=float)

    bound = 2.0 / lipschitz_constant(Xt, l2)
    if lr >= bound:
        logger.warning("learning rate %.4g exceeds the stability bound %.4g", lr, bound)

    w = np.zeros(Xt.shape[1])
    b = 0.0
    history = []
    for _ in range(epochs):
        loss, gw, gb = loss_and_grad(w, b, Xt, y, l2)
        history.append(loss)
        w -= lr * gw
        b -= lr * gb
    history.append(loss_and_grad(w, b, Xt, y, l2)[0])

    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise ModelError("training diverged; lower the learning rate")

    return LogRegModel(
        weights=w,
        bias=b,
        dimension=dimension,
        feature_kind=feature_kind,
        mean=mean,
        scale=scale,
        metadata={
            "lr": lr,
            "l2": l2,
            "epochs": epochs,
            "rng_seed": rng_seed,
            "n_train": int(len(y)),
            "stability_bound": bound,
        },
        loss_history=history,
    )


def predict(model: LogRegModel, x) -> tuple[np.ndarray | float, np.ndarray | int]:
    """Probability of the positive pole and the 0/1 label at threshold 0.5.

    A 1-D ``x`` is treated as a single sample and returns scalars.
    """
    single = not sp.issparse(x) and np.ndim(x) == 1
    X = np.atleast_2d(np.asarray(x, dtype=float)) if single else x
    p = model.predict_proba(X)
    labels = (p >= 0.5).astype(int)
    if single:
        return float(p[0]), int(labels[0])
    return p, labels


def kfold_cv(
    X,
    y: Sequence[int],
    folds: int = 5,
    rng_seed: int = 0,
    **train_params,
) -> EvalReport:
    """Stratified k-fold cross-validation; metrics are per-fold averages."""
    y = np.asarray(y, dtype=int)
    fold_of = stratified_folds(y, folds, rng_seed)
    if sp.issparse(X):
        X = sp.csr_matrix(X)
    confusions = []
    for k in range(folds):
        test = fold_of == k
        model = train_logreg(X[~test], y[~test], rng_seed=rng_seed, **train_params)
        _, pred = predict(model, X[test])
        confusions.append(Confusion.from_labels(y[test].tolist(), pred.tolist()))
    return EvalReport.from_folds(confusions)
