"""Confusion matrix, per-class F1 and support-weighted F1.

Conventions: confusion rows index the true class and columns the predicted
class; any F1 whose denominator is zero is reported as zero rather than NaN.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("cannot score an empty label set")
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(
            f"label arrays must be equal-length vectors, got {y_true.shape} and {y_pred.shape}"
        )
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{name} labels fall outside [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


def per_class_f1(conf: np.ndarray) -> np.ndarray:
    """F1 per class from a confusion matrix; 2*tp/(pred+true), zero-safe."""
    tp = np.diag(conf).astype(np.float64)
    pred = conf.sum(axis=0).astype(np.float64)
    true = conf.sum(axis=1).astype(np.float64)
    denom = pred + true
    return np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def weighted_f1(y_true, y_pred, n_classes: int) -> tuple[float, np.ndarray]:
    """Support-weighted mean of per-class F1; also returns the per-class F1s."""
    conf = confusion_matrix(y_true, y_pred, n_classes)
    f1 = per_class_f1(conf)
    support = conf.sum(axis=1)
    return float((f1 * support).sum() / support.sum()), f1


def weighted_f1_batch(y_true: np.ndarray, preds: np.ndarray, n_classes: int) -> np.ndarray:
    """Weighted F1 for many prediction vectors at once.

    preds has shape [k, n]; returns the k weighted-F1 scores. Used by the
    ensemble tuner, where scoring thousands of candidates one confusion
    matrix at a time would dominate the budget.
    """
    y_true = np.asarray(y_true)
    preds = np.asarray(preds)
    if preds.ndim != 2 or preds.shape[1] != y_true.shape[0]:
        raise ValueError(
            f"prediction block {preds.shape} incompatible with {y_true.shape[0]} labels"
        )
    support = np.bincount(y_true, minlength=n_classes).astype(np.float64)
    total = np.zeros(preds.shape[0], dtype=np.float64)
    for c in range(n_classes):
        is_true = y_true == c
        is_pred = preds == c
        tp = (is_pred & is_true).sum(axis=1).astype(np.float64)
        denom = is_pred.sum(axis=1) + support[c]
        f1_c = np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
        total += f1_c * support[c]
    return total / support.sum()


def report_csv(conf: np.ndarray, class_names: Sequence[str]) -> str:
    """Per-class precision/recall/F1 rows plus a trailing weighted row."""
    _check_names(conf, class_names)
    tp = np.diag(conf).astype(np.float64)
    pred = conf.sum(axis=0).astype(np.float64)
    true = conf.sum(axis=1).astype(np.float64)
    prec = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    rec = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    f1 = per_class_f1(conf)
    lines = ["label,support,precision,recall,f1"]
    for i, name in enumerate(class_names):
        lines.append(
            f"{name},{int(true[i])},{prec[i]:.6f},{rec[i]:.6f},{f1[i]:.6f}"
        )
    wf1 = (f1 * true).sum() / true.sum()
    lines.append(f"weighted,{int(true.sum())},,,{wf1:.6f}")
    return "\n".join(lines) + "\n"


def report_text(conf: np.ndarray, class_names: Sequence[str]) -> str:
    """Human-readable aligned table mirroring report_csv."""
    _check_names(conf, class_names)
    rows = [line.split(",") for line in report_csv(conf, class_names).splitlines()]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    out = []
    for r in rows:
        out.append(
            "  ".join(
                cell.ljust(w) if i == 0 else cell.rjust(w)
                for i, (cell, w) in enumerate(zip(r, widths))
            ).rstrip()
        )
    return "\n".join(out) + "\n"


def _check_names(conf: np.ndarray, class_names: Sequence[str]) -> None:
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {conf.shape}")
    if len(class_names) != conf.shape[0]:
        raise ValueError(
            f"{len(class_names)} class names for a {conf.shape[0]}-class matrix"
        )
