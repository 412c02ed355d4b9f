"""Scalar evaluation metrics: AUC, confusion-matrix rates, MAE, R².

AUC uses the Mann-Whitney rank statistic with mid-rank tie handling, so
it equals the probability that a random positive outranks a random
negative plus half the probability of a tie.  Confusion metrics apply a
caller-supplied threshold (score >= threshold counts as positive; 0.5
on probabilities corresponds to 0 on logits).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateClassesWarning,
    InvalidInput,
    ShapeMismatch,
    UndefinedMetric,
)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    values: dict
    n: int
    positives: int = 0
    threshold: float = None
    flags: tuple = ()
    subgroups: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GroupDelta:
    """Subgroup AUC and its gap to the overall AUC.

    ``delta`` is AUC_group - AUC_overall; ``delta_pct`` expresses the
    same gap as a percentage of the overall AUC.  Groups lacking both
    classes keep their row with None entries rather than vanishing.
    """

    group: str
    n: int
    auc: float
    delta: float
    delta_pct: float


@dataclass(frozen=True, eq=False)
class SubgroupAucReport:
    overall: float
    groups: tuple


def _check_binary(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels have shape {labels.shape}, expected ({n},)")
    lab = labels.astype(np.float64)
    if not np.all((lab == 0.0) | (lab == 1.0)):
        raise InvalidInput("labels must be 0/1")
    return lab.astype(np.int64)


def _midranks(values):
    # mergesort is stable, so equal values stay adjacent in sorted order
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0])
    sorted_vals = values[order]
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """Rank-based AUC of ``scores`` against binary ``labels``."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = scores.shape[0]
    if n == 0:
        raise InvalidInput("empty score vector")
    if not np.all(np.isfinite(scores)):
        raise InvalidInput("scores contain non-finite values")
    lab = _check_binary(labels, n)
    n_pos = int(lab.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both classes present")
    ranks = _midranks(scores)
    rank_sum = ranks[lab == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion_metrics(scores, labels, threshold=0.5):
    """Sensitivity, specificity, precision, F1, and accuracy at a threshold."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = scores.shape[0]
    if n == 0:
        raise InvalidInput("empty score vector")
    if not np.isfinite(threshold):
        raise InvalidInput("threshold must be finite")
    lab = _check_binary(labels, n)
    if lab.sum() == 0 or lab.sum() == n:
        raise UndefinedMetric("confusion metrics need both classes present")

    pred = scores >= threshold
    pos = lab == 1
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    tn = n - tp - fp - fn

    flags = []
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    if tp + fp == 0:
        precision = 0.0
        flags.append("NoPositivePredictions")
    else:
        precision = tp / (tp + fp)
    if precision + sensitivity == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
    accuracy = (tp + tn) / n

    return MetricsReport(
        values={
            "sensitivity": sensitivity,
            "specificity": specificity,
            "precision": precision,
            "f1": f1,
            "accuracy": accuracy,
            "tp": tp,
            "fp": fp,
            "tn": tn,
            "fn": fn,
        },
        n=n,
        positives=int(lab.sum()),
        threshold=float(threshold),
        flags=tuple(flags),
    )


def regression_metrics(predictions, targets):
    """MAE and R² of real-valued predictions, in target units."""
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if predictions.shape != targets.shape:
        raise ShapeMismatch(
            f"predictions {predictions.shape} vs targets {targets.shape}"
        )
    n = targets.shape[0]
    if n == 0:
        raise InvalidInput("empty input")
    if not (np.all(np.isfinite(predictions)) and np.all(np.isfinite(targets))):
        raise InvalidInput("non-finite values")

    err = predictions - targets
    mae = float(np.abs(err).mean())
    rss = float(err @ err)
    centered = targets - targets.mean()
    tss = float(centered @ centered)
    flags = []
    if tss == 0.0:
        # R² has no variance to explain; report 0 rather than a 0/0
        r2 = 0.0
        flags.append("ConstantTarget")
    else:
        r2 = 1.0 - rss / tss
    return MetricsReport(
        values={"mae": mae, "r_squared": r2},
        n=n,
        flags=tuple(flags),
    )


def subgroup_auc_delta(scores, labels, groups):
    """Per-group AUC gaps, absolute and as percent of the overall AUC."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = scores.shape[0]
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ShapeMismatch(f"groups have shape {groups.shape}, expected ({n},)")
    if np.issubdtype(groups.dtype, np.floating):
        raise InvalidInput("group labels must be categorical, not real-valued")
    lab = _check_binary(labels, n)
    overall = auc(scores, lab)

    out = []
    for g in np.unique(groups):
        mask = groups == g
        sub_lab = lab[mask]
        if sub_lab.sum() == 0 or sub_lab.sum() == sub_lab.shape[0]:
            warnings.warn(
                f"group {g!r} has a single class; AUC undefined",
                DegenerateClassesWarning,
            )
            out.append(GroupDelta(str(g), int(mask.sum()), None, None, None))
            continue
        a = auc(scores[mask], sub_lab)
        delta = a - overall
        out.append(
            GroupDelta(str(g), int(mask.sum()), a, delta, delta / overall * 100.0)
        )
    return SubgroupAucReport(overall=overall, groups=tuple(out))
