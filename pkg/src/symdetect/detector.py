"""Per-device comparison scores, clustering and ROC analysis.

Two comparison schemes are provided:

* symmetric: column ``c`` of path ``a`` against column ``c`` of its
  partner ``b``, for every CP and column, ``C * P / 2`` comparisons;
* baseline: column ``c`` against column ``c + 1`` within each path,
  ``(C - 1) * P`` comparisons.

Ground-truth labels are read only by :func:`roc_curve` and the accuracy
fields of :class:`DetectionReport`.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DataError, ParameterError
from .fingerprint import AGED, DeviceFingerprint
from .pairing import SymmetryPairing
from .ulsif import UlsifConfig

FRESH_LABEL = "fresh"
RECYCLED_LABEL = "recycled"


class ComparisonCounter:
    """Thread-safe tally of column comparisons (one per uLSIF column score)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self.count += int(n)


@dataclass(frozen=True, eq=False)
class CpScoreVector:
    device_id: str
    scores: np.ndarray
    per_column: Optional[np.ndarray] = None
    n_comparisons: int = 0

    @property
    def max_score(self) -> float:
        return float(np.max(self.scores))


def _column_scores(F, G, config: UlsifConfig, backend=None) -> np.ndarray:
    res = kernels.score_columns(
        F, G, config.sigma_grid, config.lambda_grid, config.max_centers, config.symmetrize, backend
    )
    bad = (res.status == kernels.STATUS_F_CONSTANT) | (res.status == kernels.STATUS_FP_CONSTANT)
    if np.any(bad):
        k = int(np.nonzero(bad)[0][0])
        raise DataError(f"column block {k}: one sample is constant while the other varies")
    # two identical constant columns carry no evidence of asymmetry
    return np.where(res.status == kernels.STATUS_POOLED_CONSTANT, 0.0, res.scores)


def score_device_symmetric(
    device: DeviceFingerprint,
    pairing: SymmetryPairing,
    config: UlsifConfig | None = None,
    counter: ComparisonCounter | None = None,
    keep_columns: bool = True,
    backend: str | None = None,
) -> CpScoreVector:
    """Max column score of every CP; ``C * P / 2`` comparisons."""
    config = config or UlsifConfig()
    config.validate()
    if pairing.n_paths != device.n_paths:
        raise ParameterError(
            f"pairing covers {pairing.n_paths} paths but device {device.device_id} has {device.n_paths}"
        )
    stack = device.stack()  # (P, R, C)
    P, R, C = stack.shape
    a = np.array([p[0] - 1 for p in pairing.pairs])
    b = np.array([p[1] - 1 for p in pairing.pairs])
    # (R, n_pairs * C): pair-major column blocks
    F = np.transpose(stack[a], (1, 0, 2)).reshape(R, -1)
    G = np.transpose(stack[b], (1, 0, 2)).reshape(R, -1)
    cols = _column_scores(F, G, config, backend).reshape(len(a), C)
    if counter is not None:
        counter.add(cols.size)
    return CpScoreVector(device.device_id, cols.max(axis=1), cols if keep_columns else None, cols.size)


def score_device_baseline(
    device: DeviceFingerprint,
    config: UlsifConfig | None = None,
    counter: ComparisonCounter | None = None,
    keep_columns: bool = True,
    backend: str | None = None,
) -> CpScoreVector:
    """Max adjacent-column score of every path; ``(C - 1) * P`` comparisons."""
    config = config or UlsifConfig()
    config.validate()
    stack = device.stack()
    P, R, C = stack.shape
    F = np.transpose(stack[:, :, :-1], (1, 0, 2)).reshape(R, -1)
    G = np.transpose(stack[:, :, 1:], (1, 0, 2)).reshape(R, -1)
    cols = _column_scores(F, G, config, backend).reshape(P, C - 1)
    if counter is not None:
        counter.add(cols.size)
    return CpScoreVector(device.device_id, cols.max(axis=1), cols if keep_columns else None, cols.size)


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int


def _canonical_order(X: np.ndarray) -> np.ndarray:
    # lexicographic row order makes seeding independent of input order
    return np.lexsort(X.T[::-1]) if X.shape[1] else np.arange(X.shape[0])


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> KMeansResult:
    """Lloyd iterations from ``centers`` until assignments stop changing.

    Equidistant points join the lower-indexed centroid; an empty cluster
    keeps its previous centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.array(centers, dtype=np.float64)
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = X[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    d2 = ((X - centers[labels]) ** 2).sum(axis=1)
    return KMeansResult(labels, centers, float(d2.sum()), it)


CLASSIFY_N_INIT = 10


def _seed_centers(Xs, k, rng, init):
    n = Xs.shape[0]
    if init == "random":
        return list(rng.choice(n, size=k, replace=False))
    idx = [int(rng.integers(n))]
    d2 = ((Xs - Xs[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            j = int(rng.choice(n, p=d2 / total))
        else:
            j = next(i for i in range(n) if i not in idx)
        idx.append(j)
        d2 = np.minimum(d2, ((Xs - Xs[j]) ** 2).sum(axis=1))
    return idx


def kmeans_pp(
    vectors, k: int = 2, seed: int = 0, max_iter: int = 100, init: str = "k-means++", n_init: int = 1
) -> KMeansResult:
    """k-means with D^2 seeding (or uniform seeding with ``init="random"``).

    ``n_init`` seedings are drawn in sequence from one generator; the run
    with the lowest inertia wins (ties: earliest).
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    if init not in ("k-means++", "random"):
        raise ParameterError(f"unknown init {init!r}")
    if n_init < 1:
        raise ParameterError(f"n_init must be >= 1, got {n_init}")
    order = _canonical_order(X)
    Xs = X[order]
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        res = lloyd(Xs, Xs[_seed_centers(Xs, k, rng, init)], max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    labels = np.empty(n, dtype=np.int64)
    labels[order] = best.labels
    return KMeansResult(labels, best.centroids, best.inertia, best.n_iter)


def classify(score_vectors: Sequence[CpScoreVector], seed: int = 0, n_init: int = CLASSIFY_N_INIT) -> tuple:
    """Two-cluster k-means++ on CP score vectors (best of ``n_init`` runs).

    The cluster whose centroid has the larger mean is ``recycled``. If a
    cluster ends up empty, or both centroids have the same mean, every
    device is ``fresh``. Returns ``(labels, centroids)`` where ``labels``
    maps device id to label and ``centroids`` is ``[fresh, recycled]``.
    """
    if len(score_vectors) < 2:
        raise ParameterError("classify needs at least 2 devices")
    X = np.array([np.asarray(v.scores, dtype=np.float64) for v in score_vectors])
    res = kmeans_pp(X, 2, seed, n_init=n_init)
    counts = np.bincount(res.labels, minlength=2)
    means = res.centroids.mean(axis=1)
    ids = [v.device_id for v in score_vectors]
    if counts.min() == 0 or means[0] == means[1]:
        centroid = X.mean(axis=0)
        return {d: FRESH_LABEL for d in ids}, np.stack([centroid, centroid])
    hot = int(np.argmax(means))
    labels = {d: RECYCLED_LABEL if l == hot else FRESH_LABEL for d, l in zip(ids, res.labels)}
    return labels, np.stack([res.centroids[1 - hot], res.centroids[hot]])


@dataclass(frozen=True)
class RocCurve:
    fpr: tuple
    tpr: tuple
    thresholds: tuple
    auc: float

    @property
    def points(self) -> list:
        return list(zip(self.fpr, self.tpr))


def roc_curve(scores, positive) -> RocCurve:
    """ROC over every distinct score plus +/- infinity; trapezoid AUC.

    A device is called positive when ``score >= threshold``. Equal scores
    move together, so ties contribute a diagonal segment.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(positive, dtype=bool).reshape(-1)
    if s.size != y.size:
        raise ParameterError("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("roc_curve needs at least one positive and one negative")
    if not np.all(np.isfinite(s)):
        raise DataError("scores must be finite")
    thresholds = [np.inf] + sorted(set(s.tolist()), reverse=True) + [-np.inf]
    fpr, tpr = [], []
    for t in thresholds:
        hit = s >= t
        tpr.append(int((hit & y).sum()) / n_pos)
        fpr.append(int((hit & ~y).sum()) / n_neg)
    auc = float(np.sum(np.diff(fpr) * (np.array(tpr[1:]) + np.array(tpr[:-1])) / 2.0))
    return RocCurve(tuple(fpr), tuple(tpr), tuple(thresholds), auc)


def pairwise_auc(scores, positive) -> float:
    """P(positive > negative) + 0.5 P(tie) over all positive/negative pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positive, dtype=bool)
    pos, neg = s[y], s[~y]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def audit_comparisons(R: int, C: int, P: int) -> dict:
    """Comparison counts of the two schemes and their ratio."""
    if R < 2 or C < 2 or P < 2 or P % 2:
        raise ParameterError(f"need R >= 2, C >= 2 and even P >= 2, got R={R}, C={C}, P={P}")
    proposed = C * P // 2
    baseline = (C - 1) * P
    return {"proposed": proposed, "baseline": baseline, "ratio": proposed / baseline}


@dataclass(frozen=True)
class DetectionReport:
    labels: dict
    cluster_means: list
    device_scores: dict
    roc: Optional[RocCurve]
    auc: Optional[float]
    accuracy: Optional[float]
    recall: Optional[float]
    comparisons_proposed: int
    comparisons_baseline: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "labels": dict(sorted(self.labels.items())),
            "cluster_means": [list(map(float, c)) for c in self.cluster_means],
            "device_max_scores": dict(sorted(self.device_scores.items())),
            "roc": None
            if self.roc is None
            else [[float(f), float(t)] for f, t in zip(self.roc.fpr, self.roc.tpr)],
            "auc": self.auc,
            "accuracy": self.accuracy,
            "recall": self.recall,
            "comparisons_proposed": self.comparisons_proposed,
            "comparisons_baseline": self.comparisons_baseline,
        }
        d.update(self.extra)
        return d


def detect(
    vectors: Sequence[CpScoreVector],
    ground_truth: dict | None = None,
    seed: int = 0,
    comparisons_proposed: int = 0,
    comparisons_baseline: int = 0,
    extra: dict | None = None,
) -> DetectionReport:
    """Classify devices and, when labels are known, score the result.

    ``ground_truth`` maps device id to ``fresh``/``aged`` (or ``None``).
    Accuracy and aged recall need a label for every device; ROC needs
    both classes present.
    """
    labels, centroids = classify(vectors, seed)
    maxima = {v.device_id: v.max_score for v in vectors}
    roc = auc = acc = recall = None
    truth = ground_truth or {}
    known = [v.device_id for v in vectors if truth.get(v.device_id) is not None]
    if known and len(known) == len(vectors):
        aged = np.array([truth[d] == AGED for d in known])
        called = np.array([labels[d] == RECYCLED_LABEL for d in known])
        acc = float(np.mean(aged == called))
        recall = float(called[aged].mean()) if aged.any() else None
        if aged.any() and (~aged).any():
            roc = roc_curve([maxima[d] for d in known], aged)
            auc = roc.auc
    return DetectionReport(
        labels, list(centroids), maxima, roc, auc, acc, recall,
        int(comparisons_proposed), int(comparisons_baseline), dict(extra or {}),
    )
