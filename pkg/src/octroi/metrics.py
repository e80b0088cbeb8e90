"""Classifier evaluation statistics: AUROC, confusion metrics, bootstrap CIs.

AMD (label 1) is the positive class throughout; sensitivity is the AMD
recall. AUROC is the Mann-Whitney statistic computed via midranks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ScoreSet:
    """Per-image classifier probabilities with true labels and subject ids."""

    scores: np.ndarray
    labels: np.ndarray
    subject_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        subjects = tuple(str(s) for s in self.subject_ids)
        if not (len(scores) == len(labels) == len(subjects)):
            raise ValueError(
                f"scores ({len(scores)}), labels ({len(labels)}) and subject_ids "
                f"({len(subjects)}) must have equal length"
            )
        if len(scores) < 2:
            raise ValueError("a score set needs at least 2 entries")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("scores must be probabilities in [0, 1]")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 (control) or 1 (AMD)")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subject_ids", subjects)

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.labels == 0))

    def take(self, indices: np.ndarray) -> "ScoreSet":
        idx = np.asarray(indices)
        return ScoreSet(
            scores=self.scores[idx],
            labels=self.labels[idx],
            subject_ids=tuple(self.subject_ids[i] for i in idx),
        )

    def require_both_classes(self, context: str) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise ValueError(f"{context} requires both classes, got {self.n_pos} pos / {self.n_neg} neg")


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank of their run."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    run_start = np.r_[True, xs[1:] != xs[:-1]]
    run_id = np.cumsum(run_start) - 1
    counts = np.bincount(run_id)
    starts = np.cumsum(np.r_[0, counts[:-1]])
    mid = starts + (counts + 1) / 2.0
    out = np.empty(len(x), dtype=np.float64)
    out[order] = mid[run_id]
    return out


def auroc(score_set: ScoreSet) -> float:
    """Mann-Whitney AUROC: (concordant + 0.5*tied pairs) / (n_pos * n_neg)."""
    score_set.require_both_classes("AUROC")
    ranks = midranks(score_set.scores)
    m = score_set.n_pos
    n = score_set.n_neg
    pos_rank_sum = float(ranks[score_set.labels == 1].sum())
    return (pos_rank_sum - m * (m + 1) / 2.0) / (m * n)


def confusion_metrics(score_set: ScoreSet, threshold: float) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity) with predicted positive iff score >= threshold."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    pred = score_set.scores >= threshold
    truth = score_set.labels == 1
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    accuracy = (tp + tn) / len(score_set.scores)
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    specificity = tn / (tn + fp) if tn + fp else 0.0
    return accuracy, sensitivity, specificity


def roc_points(score_set: ScoreSet) -> np.ndarray:
    """(fpr, tpr) at every distinct score threshold, from (0,0) to (1,1).

    The trapezoidal area over these points equals the midrank AUROC.
    """
    score_set.require_both_classes("the ROC curve")
    order = np.argsort(-score_set.scores, kind="mergesort")
    scores = score_set.scores[order]
    truth = score_set.labels[order] == 1
    # indices where a run of tied scores ends
    last_of_run = np.r_[scores[1:] != scores[:-1], True]
    cum_tp = np.cumsum(truth)[last_of_run]
    cum_fp = np.cumsum(~truth)[last_of_run]
    tpr = cum_tp / score_set.n_pos
    fpr = cum_fp / score_set.n_neg
    return np.column_stack([np.r_[0.0, fpr], np.r_[0.0, tpr]])


def roc_thresholds(score_set: ScoreSet) -> np.ndarray:
    """Score thresholds matching ``roc_points`` rows; the (0,0) point gets +inf."""
    distinct = np.unique(score_set.scores)[::-1]
    return np.r_[np.inf, distinct]


def youden_threshold(score_set: ScoreSet) -> float:
    """Distinct score maximizing tpr - fpr (ties: the highest such threshold)."""
    pts = roc_points(score_set)
    thresholds = roc_thresholds(score_set)
    j = pts[:, 1] - pts[:, 0]
    best = int(np.argmax(j))  # argmax takes the first, i.e. highest threshold
    t = thresholds[best]
    return float(min(t, 1.0))


def _resample_indices(score_set: ScoreSet, rng: np.random.Generator) -> np.ndarray:
    """Stratified bootstrap indices: positives then negatives, counts preserved."""
    pos = np.flatnonzero(score_set.labels == 1)
    neg = np.flatnonzero(score_set.labels == 0)
    take_pos = pos[rng.integers(0, len(pos), len(pos))]
    take_neg = neg[rng.integers(0, len(neg), len(neg))]
    return np.r_[take_pos, take_neg]


def bootstrap_ci(
    score_set: ScoreSet,
    metric: Callable[[ScoreSet], float],
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    """Stratified-bootstrap percentile interval for a ScoreSet metric.

    Resample b draws its RNG from (seed, b); positives and negatives are
    resampled independently with replacement, preserving class counts.
    """
    if n_resamples < 100:
        raise ValueError(f"need at least 100 resamples, got {n_resamples}")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    score_set.require_both_classes("the stratified bootstrap")
    values = np.empty(n_resamples, dtype=np.float64)
    for b in range(n_resamples):
        rng = np.random.default_rng([seed, b])
        values[b] = metric(score_set.take(_resample_indices(score_set, rng)))
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0], method="linear")
    return float(lo), float(hi)


@dataclass(frozen=True)
class MetricInterval:
    point: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class MetricsReport:
    auroc: MetricInterval
    accuracy: MetricInterval
    sensitivity: MetricInterval
    specificity: MetricInterval
    threshold: float
    n_pos: int
    n_neg: int


def compute_report(
    score_set: ScoreSet,
    threshold: float = 0.5,
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> MetricsReport:
    """Point estimates plus joint stratified-bootstrap CIs for all four metrics.

    All metrics are evaluated on the same resamples. Intervals are widened,
    if needed, to contain the point estimate.
    """
    score_set.require_both_classes("the metrics report")
    point_auroc = auroc(score_set)
    point_acc, point_sens, point_spec = confusion_metrics(score_set, threshold)
    values = np.empty((n_resamples, 4), dtype=np.float64)
    for b in range(n_resamples):
        rng = np.random.default_rng([seed, b])
        resampled = score_set.take(_resample_indices(score_set, rng))
        acc, sens, spec = confusion_metrics(resampled, threshold)
        values[b] = (auroc(resampled), acc, sens, spec)
    los, his = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method="linear")

    def interval(point: float, k: int) -> MetricInterval:
        return MetricInterval(point, min(float(los[k]), point), max(float(his[k]), point))

    return MetricsReport(
        auroc=interval(point_auroc, 0),
        accuracy=interval(point_acc, 1),
        sensitivity=interval(point_sens, 2),
        specificity=interval(point_spec, 3),
        threshold=threshold,
        n_pos=score_set.n_pos,
        n_neg=score_set.n_neg,
    )


def save_scores(score_set: ScoreSet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label", "score"])
        for sid, label, score in zip(score_set.subject_ids, score_set.labels, score_set.scores):
            writer.writerow([sid, int(label), repr(float(score))])
    return path


def load_scores(path: str | Path) -> ScoreSet:
    path = Path(path)
    subjects: list[str] = []
    labels: list[int] = []
    scores: list[float] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "label", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: score files need columns {sorted(required)}")
        for row in reader:
            subjects.append(row["subject_id"])
            labels.append(int(row["label"]))
            scores.append(float(row["score"]))
    return ScoreSet(scores=np.array(scores), labels=np.array(labels), subject_ids=tuple(subjects))
