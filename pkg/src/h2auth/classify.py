"""Linear-SVM and kNN binary classifiers plus FAR/FRR/EER/ROC/AUC evaluation."""

from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    InsufficientData,
    KLargerThanDataset,
    NonFiniteFeature,
    SingleClassData,
    VersionMismatch,
)

MODEL_FILE_VERSION = 1

DEFAULT_SVM_C = 5.0
DEFAULT_SVM_EPOCHS = 200
DEFAULT_KNN_K = 13


class FeatureKind(enum.Enum):
    SIMILARITY = "similarity"
    LOUDSPEAKER_PRESENCE = "loudspeaker_presence"
    LOUDSPEAKER_CONTENT = "loudspeaker_content"


@dataclass(frozen=True)
class NormStats:
    """Per-feature standardization parameters fit on the training set.

    Features whose training variance is zero are dropped (kept == False)
    rather than divided by zero; the mask is part of the model.
    """

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "NormStats":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        kept = std > 0.0
        safe = np.where(kept, std, 1.0)
        return cls(mean, safe, kept)

    def transform(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.mean) / self.std
        return Z[..., self.kept]

    @property
    def raw_dim(self) -> int:
        return len(self.mean)


def _check_training_inputs(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature matrix contains NaN or inf")
    if np.unique(y).size != 2:
        raise SingleClassData("training needs both classes")
    return X, y


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    threshold: float
    feature_kind: FeatureKind
    norm_stats: NormStats
    training_meta: dict = field(default_factory=dict)


def train_linear_svm(X, y, c: float = DEFAULT_SVM_C,
                     epochs: int = DEFAULT_SVM_EPOCHS, seed: int = 0,
                     feature_kind: FeatureKind = FeatureKind.SIMILARITY,
                     ) -> LinearModel:
    """L2-regularized hinge loss minimized by subgradient descent.

    Full-batch updates with the 1/(lambda*t) step schedule; training is a
    pure function of its inputs, so results are bit-reproducible. The bias
    is carried as an appended constant feature. The decision threshold
    defaults to the EER point of the training scores.
    """
    X, y = _check_training_inputs(X, y)
    stats = NormStats.fit(X)
    Z = stats.transform(X)
    Z = np.hstack([Z, np.ones((len(Z), 1))])
    yy = np.where(y == 1, 1.0, -1.0)

    n, d = Z.shape
    lam = 1.0 / (c * n)
    w = np.zeros(d)
    for t in range(1, epochs + 1):
        margins = yy * (Z @ w)
        violators = margins < 1.0
        grad = lam * w
        if np.any(violators):
            grad -= (yy[violators, None] * Z[violators]).sum(axis=0) / n
        w -= grad / (lam * t)

    scores = Z @ w
    report = evaluate(scores, y)
    return LinearModel(
        weights=w[:-1],
        bias=float(w[-1]),
        threshold=float(report.eer_threshold),
        feature_kind=feature_kind,
        norm_stats=stats,
        training_meta={"c": c, "epochs": epochs, "seed": seed},
    )


def predict(model: LinearModel, x) -> tuple[float, bool]:
    """Decision score and boolean decision (score >= threshold)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.norm_stats.raw_dim,):
        raise DimensionMismatch(
            f"expected {model.norm_stats.raw_dim} features, got {x.shape}"
        )
    score = float(model.norm_stats.transform(x) @ model.weights + model.bias)
    return score, bool(score >= model.threshold)


def decision_scores(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return model.norm_stats.transform(X) @ model.weights + model.bias


@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray       # standardized training rows
    labels: np.ndarray
    k: int
    norm_stats: NormStats
    feature_kind: FeatureKind
    centroids: np.ndarray    # per-class centroid, rows ordered [class0, class1]


def train_knn(X, y, k: int = DEFAULT_KNN_K,
              feature_kind: FeatureKind = FeatureKind.SIMILARITY) -> KnnModel:
    X, y = _check_training_inputs(X, y)
    if k > len(X):
        raise KLargerThanDataset(f"k={k} exceeds {len(X)} training points")
    stats = NormStats.fit(X)
    Z = stats.transform(X)
    centroids = np.stack([Z[y == 0].mean(axis=0), Z[y == 1].mean(axis=0)])
    return KnnModel(Z, y, int(k), stats, feature_kind, centroids)


def predict_knn(model: KnnModel, x) -> tuple[float, bool]:
    """Majority vote of the k nearest neighbors; the score is the positive
    vote fraction. Even-vote ties go to the class with the closer centroid."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.norm_stats.raw_dim,):
        raise DimensionMismatch(
            f"expected {model.norm_stats.raw_dim} features, got {x.shape}"
        )
    z = model.norm_stats.transform(x)
    dist = np.linalg.norm(model.points - z, axis=1)
    order = np.lexsort((np.arange(len(dist)), dist))  # stable under ties
    votes = model.labels[order[:model.k]]
    positive = int(np.sum(votes == 1))
    if 2 * positive != model.k:
        return positive / model.k, positive * 2 > model.k
    gap = (np.linalg.norm(z - model.centroids[1])
           - np.linalg.norm(z - model.centroids[0]))
    return 0.5, bool(gap < 0)


@dataclass(frozen=True)
class EvalReport:
    """ROC sweep results. roc_points rows are (FAR, TPR, threshold), sorted
    by descending threshold (ascending FAR)."""

    roc_points: np.ndarray
    auc: float
    eer: float
    eer_threshold: float
    far_at_threshold: float
    frr_at_threshold: float
    flipped: bool

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "far_at_threshold": self.far_at_threshold,
            "frr_at_threshold": self.frr_at_threshold,
            "flipped": self.flipped,
            "roc_points": [[float(a), float(b), float(c)]
                           for a, b, c in self.roc_points],
        }


def _roc_sweep(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """(FAR, TPR, threshold) rows for thresholds at +inf and every distinct
    score, predicting positive when score >= threshold."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y == 0)
    last_of_group = np.flatnonzero(np.append(np.diff(s) != 0, True))
    n_pos = tps[-1]
    n_neg = fps[-1]
    far = fps[last_of_group] / n_neg
    tpr = tps[last_of_group] / n_pos
    rows = np.column_stack([far, tpr, s[last_of_group]])
    return np.vstack([[0.0, 0.0, np.inf], rows])


def _trapezoid(ys: np.ndarray, xs: np.ndarray) -> float:
    return float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))


def _interp_eer(roc: np.ndarray) -> tuple[float, float]:
    far = roc[:, 0]
    frr = 1.0 - roc[:, 1]
    diff = far - frr
    idx = int(np.argmax(diff >= 0.0))  # first point where FAR catches FRR
    if diff[idx] == 0.0 or idx == 0:
        return float((far[idx] + frr[idx]) / 2.0), float(roc[idx, 2])
    # linear interpolation between the straddling sweep points
    d0, d1 = diff[idx - 1], diff[idx]
    w = -d0 / (d1 - d0)
    eer = float((1 - w) * far[idx - 1] + w * far[idx])
    if np.isinf(roc[idx - 1, 2]):
        thr = float(roc[idx, 2])
    else:
        thr = float((1 - w) * roc[idx - 1, 2] + w * roc[idx, 2])
    return eer, thr


def evaluate(scores, labels, threshold: float | None = None) -> EvalReport:
    """ROC, AUC (trapezoid), interpolated EER, and FAR/FRR at a threshold.

    Score orientation is auto-detected: if the raw AUC lands below 0.5 the
    scores are flipped and the flip recorded, so EER always lies in
    [0, 0.5] and silent inversions cannot hide.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if scores.size != labels.size or scores.size == 0:
        raise ValueError("scores and labels must be equal-length, non-empty")
    if np.unique(labels).size != 2:
        raise SingleClassData("evaluation needs both classes")

    roc = _roc_sweep(scores, labels)
    auc = _trapezoid(roc[:, 1], roc[:, 0])
    flipped = auc < 0.5
    if flipped:
        scores = -scores
        if threshold is not None:
            threshold = -threshold
        roc = _roc_sweep(scores, labels)
        auc = _trapezoid(roc[:, 1], roc[:, 0])

    eer, eer_thr = _interp_eer(roc)
    thr = eer_thr if threshold is None else float(threshold)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    far = float(np.mean(neg >= thr))
    frr = float(np.mean(pos < thr))
    return EvalReport(roc, auc, eer, eer_thr, far, frr, flipped)


@dataclass(frozen=True)
class CrossValReport:
    fold_reports: tuple[EvalReport, ...]
    mean_eer: float
    std_eer: float
    mean_auc: float
    std_auc: float

    def to_dict(self) -> dict:
        return {
            "folds": len(self.fold_reports),
            "mean_eer": self.mean_eer,
            "std_eer": self.std_eer,
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "fold_eer": [r.eer for r in self.fold_reports],
            "fold_auc": [r.auc for r in self.fold_reports],
        }


def _stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        assignment[idx] = np.arange(len(idx)) % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def cross_validate(X, y, folds: int = 10, mode: str = "stratified",
                   groups=None, trainer=None, seed: int = 0,
                   **svm_kwargs) -> CrossValReport:
    """Per-fold train/evaluate; aggregates mean and std of EER and AUC.

    mode "stratified" uses seeded stratified k-fold; "leave_one_group_out"
    makes one fold per unique group label (e.g. per drone).
    """
    X, y = _check_training_inputs(X, y)
    if trainer is None:
        def trainer(Xt, yt):
            return train_linear_svm(Xt, yt, **svm_kwargs)

    if mode == "stratified":
        counts = np.bincount(y)
        if folds > counts[counts > 0].min():
            raise InsufficientData(
                f"{folds} folds exceed the smaller class ({counts.min()} rows)"
            )
        fold_idx = _stratified_folds(y, folds, seed)
    elif mode == "leave_one_group_out":
        if groups is None:
            raise ValueError("groups required for leave_one_group_out")
        groups = np.asarray(groups)
        fold_idx = [np.flatnonzero(groups == g) for g in np.unique(groups)]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    per_fold = all(np.unique(y[idx]).size == 2 for idx in fold_idx)
    reports = []
    pooled_scores = []
    pooled_labels = []
    for test_idx in fold_idx:
        mask = np.ones(len(y), dtype=bool)
        mask[test_idx] = False
        if np.unique(y[mask]).size != 2:
            raise InsufficientData("a training fold lost one class entirely")
        model = trainer(X[mask], y[mask])
        scores = decision_scores(model, X[test_idx])
        if per_fold:
            reports.append(evaluate(scores, y[test_idx]))
        else:
            # single-class test folds (e.g. leave-one-out) cannot be scored
            # alone; pool the out-of-fold scores into one evaluation
            pooled_scores.append(scores)
            pooled_labels.append(y[test_idx])

    if not per_fold:
        reports = [evaluate(np.concatenate(pooled_scores),
                            np.concatenate(pooled_labels))]
    eers = np.array([r.eer for r in reports])
    aucs = np.array([r.auc for r in reports])
    return CrossValReport(tuple(reports), float(eers.mean()), float(eers.std()),
                          float(aucs.mean()), float(aucs.std()))


def save_model(model: LinearModel, path) -> None:
    """Versioned JSON; floats round-trip exactly through repr."""
    payload = {
        "version": MODEL_FILE_VERSION,
        "feature_kind": model.feature_kind.value,
        "weights": list(map(float, model.weights)),
        "bias": model.bias,
        "threshold": model.threshold,
        "norm_stats": {
            "mean": list(map(float, model.norm_stats.mean)),
            "std": list(map(float, model.norm_stats.std)),
            "kept": list(map(bool, model.norm_stats.kept)),
        },
        "training_meta": model.training_meta,
    }
    tmp_fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(tmp_fd, "w") as fh:
            json.dump(payload, fh, indent=1)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_model(path) -> LinearModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise CorruptModel(f"{path}: missing version field")
    if payload["version"] != MODEL_FILE_VERSION:
        raise VersionMismatch(
            f"{path}: version {payload['version']}, expected {MODEL_FILE_VERSION}"
        )
    try:
        stats = NormStats(
            np.array(payload["norm_stats"]["mean"], dtype=np.float64),
            np.array(payload["norm_stats"]["std"], dtype=np.float64),
            np.array(payload["norm_stats"]["kept"], dtype=bool),
        )
        return LinearModel(
            weights=np.array(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            threshold=float(payload["threshold"]),
            feature_kind=FeatureKind(payload["feature_kind"]),
            norm_stats=stats,
            training_meta=dict(payload.get("training_meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
