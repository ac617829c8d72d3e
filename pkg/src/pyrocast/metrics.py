"""Evaluation metrics over scored binary sets.

Conventions pinned for reproducibility: the decision rule is score >=
threshold (inclusive), and precision/recall/F1 are 0 when their denominator
is 0.  AUC uses the Mann-Whitney statistic with rank-averaged ties.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ContractError, DimensionError

REPORT_VERSION = 1


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape:
            raise DimensionError(
                f"scores ({self.scores.shape}) and labels "
                f"({self.labels.shape}) differ in length")

    def require_both_classes(self) -> None:
        if len(np.unique(self.labels)) < 2:
            raise ContractError("both classes must be present")


@dataclass
class MetricsReport:
    model: str
    accuracy: float
    auc: float
    precision: float
    recall: float
    f1: float
    threshold: float
    train_time_s: float
    trainable_params: int
    frozen_params: int
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["report_version"] = REPORT_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = {k: v for k, v in d.items() if k != "report_version"}
        return cls(**d)


def roc_auc(s: ScoredSet) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via rank averaging."""
    s.require_both_classes()
    order = np.argsort(s.scores, kind="mergesort")
    sorted_scores = s.scores[order]
    ranks = np.empty(len(sorted_scores))
    i = 0
    while i < len(sorted_scores):
        j = i
        while j < len(sorted_scores) and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0     # average 1-based rank
        i = j
    full = np.empty(len(ranks))
    full[order] = ranks
    n_pos = int(s.labels.sum())
    n_neg = len(s.labels) - n_pos
    rank_sum = full[s.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def confusion(s: ScoredSet, threshold: float) -> dict[str, int]:
    """Counts under the rule score >= threshold -> predict 1."""
    pred = s.scores >= threshold
    pos = s.labels == 1
    return {
        "tp": int(np.sum(pred & pos)),
        "fp": int(np.sum(pred & ~pos)),
        "tn": int(np.sum(~pred & ~pos)),
        "fn": int(np.sum(~pred & pos)),
    }


def precision_recall_f1(c: dict[str, int]) -> tuple[float, float, float]:
    tp, fp, fn = c["tp"], c["fp"], c["fn"]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def accuracy(c: dict[str, int]) -> float:
    n = c["tp"] + c["fp"] + c["tn"] + c["fn"]
    return (c["tp"] + c["tn"]) / n if n else 0.0


def optimal_threshold(s: ScoredSet) -> tuple[float, float]:
    """Sweep unique scores and their midpoints; maximize F1.

    Ties are broken toward the lower threshold.
    """
    s.require_both_classes()
    uniq = np.unique(s.scores)
    candidates = np.concatenate(
        [uniq, 0.5 * (uniq[:-1] + uniq[1:])]) if len(uniq) > 1 else uniq
    candidates = np.sort(candidates)
    # sweep via sorted cumulative counts: for threshold t, predictions are
    # score >= t, so tp/fp are counts of labels above the cut
    best_t, best_f1 = float(candidates[0]), -1.0
    n_pos = int(s.labels.sum())
    order = np.argsort(s.scores, kind="mergesort")
    sorted_scores = s.scores[order]
    sorted_labels = s.labels[order]
    pos_above = n_pos - np.concatenate([[0], np.cumsum(sorted_labels)])
    for t in candidates:
        i = np.searchsorted(sorted_scores, t, side="left")
        tp = int(pos_above[i])
        predicted_pos = len(sorted_scores) - i
        fp = predicted_pos - tp
        fn = n_pos - tp
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


def score_model(name: str, s: ScoredSet, threshold: float | None = None,
                train_time_s: float = 0.0, trainable_params: int = 0,
                frozen_params: int = 0) -> MetricsReport:
    """Full report; threshold defaults to the F1-optimal one."""
    if threshold is None:
        threshold, _ = optimal_threshold(s)
    c = confusion(s, threshold)
    precision, recall, f1 = precision_recall_f1(c)
    return MetricsReport(
        model=name,
        accuracy=accuracy(c),
        auc=roc_auc(s),
        precision=precision,
        recall=recall,
        f1=f1,
        threshold=threshold,
        train_time_s=train_time_s,
        trainable_params=trainable_params,
        frozen_params=frozen_params,
        **c,
    )


def roc_curve(s: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) polyline over descending unique score thresholds."""
    s.require_both_classes()
    uniq = np.unique(s.scores)[::-1]
    n_pos = int(s.labels.sum())
    n_neg = len(s.labels) - n_pos
    fpr = [0.0]
    tpr = [0.0]
    for t in uniq:
        c = confusion(s, t)
        fpr.append(c["fp"] / n_neg)
        tpr.append(c["tp"] / n_pos)
    return np.array(fpr), np.array(tpr)


def pr_curve(s: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) polyline over descending unique score thresholds."""
    s.require_both_classes()
    uniq = np.unique(s.scores)[::-1]
    rec, prec = [], []
    for t in uniq:
        c = confusion(s, t)
        p, r, _ = precision_recall_f1(c)
        rec.append(r)
        prec.append(p)
    return np.array(rec), np.array(prec)
