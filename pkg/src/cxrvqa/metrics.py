"""Evaluation: micro/macro AUC, top-answer selection, activated ROIs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    auc_micro: float
    auc_macro: float
    per_class_auc: dict[str, float] = field(default_factory=dict)
    excluded_classes: tuple[str, ...] = ()
    n_eval: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "auc_micro": self.auc_micro,
            "auc_macro": self.auc_macro,
            "per_class_auc": self.per_class_auc,
            "excluded_classes": list(self.excluded_classes),
            "n_eval": self.n_eval,
        }


def auc_binary(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties 1/2).

    Rank-based Mann-Whitney formulation; requires both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc_binary needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_micro(scores, labels) -> float:
    """Pool all (sample, class) pairs into one binary problem."""
    return auc_binary(np.asarray(scores).reshape(-1), np.asarray(labels).reshape(-1))


def auc_macro(scores, labels) -> float:
    """Unweighted mean of per-class AUC over evaluable classes."""
    report = evaluate_scores(scores, labels)
    return report.auc_macro


def evaluate_scores(scores, labels, class_names: list[str] | None = None) -> EvalReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise ValueError("expected matching (n_samples, n_classes) matrices")
    n, c = scores.shape
    names = class_names if class_names is not None else [str(i) for i in range(c)]
    per_class: dict[str, float] = {}
    excluded: list[str] = []
    for k in range(c):
        col = labels[:, k]
        if col.min() == col.max():
            excluded.append(names[k])
            continue
        per_class[names[k]] = auc_binary(scores[:, k], col)
    if not per_class:
        raise ValueError("no evaluable class (each needs a positive and a negative)")
    macro = float(np.mean(list(per_class.values())))
    micro = auc_micro(scores, labels)
    return EvalReport(
        auc_micro=micro,
        auc_macro=macro,
        per_class_auc=per_class,
        excluded_classes=tuple(excluded),
        n_eval={"samples": n, "classes": c, "evaluable_classes": len(per_class)},
    )


def top_answers(
    scores, labels: list[str], k: int = 4, threshold: float = 0.04
) -> list[tuple[str, float]]:
    """At most ``k`` answers scoring above ``threshold``, best first."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size != len(labels):
        raise ValueError("scores and labels must align")
    order = sorted(range(scores.size), key=lambda i: (-scores[i], i))
    out = [(labels[i], float(scores[i])) for i in order if scores[i] > threshold]
    return out[:k]


def activated_rois(
    attention: dict[str, list[np.ndarray]],
    k: int = 5,
    theta: float | None = None,
) -> dict[str, list[int]]:
    """Per modality: ROIs whose incoming attention mass clears the bar.

    The score of ROI j is the column mean of the final-layer attention
    matrix; indices with score >= theta (default 1.5/N) are returned
    best-first, capped at ``k``.
    """
    out: dict[str, list[int]] = {}
    for modality, layers in attention.items():
        if not layers:
            out[modality] = []
            continue
        matrix = np.asarray(layers[-1], dtype=np.float64)
        n = matrix.shape[0]
        bar = 1.5 / n if theta is None else theta
        col_mean = matrix.mean(axis=0)
        ranked = sorted(range(n), key=lambda j: (-col_mean[j], j))
        out[modality] = [j for j in ranked if col_mean[j] >= bar][:k]
    return out


def slice_by_qtype(
    qtypes: list[str], scores, labels, class_names: list[str] | None = None
) -> dict[str, EvalReport]:
    """Per-question-type evaluation (skips types with no evaluable class)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    out: dict[str, EvalReport] = {}
    for qtype in sorted(set(qtypes)):
        idx = [i for i, qt in enumerate(qtypes) if qt == qtype]
        try:
            out[qtype] = evaluate_scores(scores[idx], labels[idx], class_names)
        except ValueError:
            continue
    return out
