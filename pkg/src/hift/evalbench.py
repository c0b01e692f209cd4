"""One-pass-evaluation metrics: CLE, IoU, precision/success plots, AUC."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .heads import BBox, iou

PRECISION_THRESHOLDS = np.arange(51, dtype=float)  # 0..50 px
SUCCESS_THRESHOLDS = np.arange(21) / 20.0  # 0..1 step 0.05


@dataclass
class MetricCurve:
    thresholds: np.ndarray
    scores: np.ndarray


def cle(pred: BBox, gt: BBox) -> float:
    """Center location error in pixels."""
    return float(np.hypot(pred.cx - gt.cx, pred.cy - gt.cy))


def _check(preds, gts):
    if len(preds) != len(gts):
        raise ContractError(f"{len(preds)} predictions vs {len(gts)} ground-truth boxes")
    if not len(preds):
        raise ContractError("no frames to evaluate")


def precision_plot(preds, gts, thresholds=PRECISION_THRESHOLDS) -> MetricCurve:
    """Fraction of frames with CLE <= threshold."""
    _check(preds, gts)
    errs = np.array([cle(p, g) for p, g in zip(preds, gts)])
    scores = (errs[None, :] <= thresholds[:, None]).mean(axis=1)
    return MetricCurve(np.asarray(thresholds, dtype=float), scores)


def success_plot(preds, gts, thresholds=SUCCESS_THRESHOLDS) -> MetricCurve:
    """Fraction of frames with IoU strictly above threshold."""
    _check(preds, gts)
    overlaps = np.array([iou(p, g) for p, g in zip(preds, gts)])
    scores = (overlaps[None, :] > thresholds[:, None]).mean(axis=1)
    return MetricCurve(np.asarray(thresholds, dtype=float), scores)


def auc(curve: MetricCurve) -> float:
    return float(np.mean(curve.scores))


def precision_at_20(curve: MetricCurve) -> float:
    hit = np.flatnonzero(curve.thresholds == 20)
    if not len(hit):
        raise ContractError("precision curve has no 20 px threshold")
    return float(curve.scores[hit[0]])


def mean_curve(curves) -> MetricCurve:
    """Average per-sequence curves sharing a threshold grid."""
    curves = list(curves)
    if not curves:
        raise ContractError("no curves to average")
    return MetricCurve(curves[0].thresholds, np.mean([c.scores for c in curves], axis=0))


def curve_csv(curve: MetricCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "score"])
    for t, s in zip(curve.thresholds, curve.scores):
        w.writerow([f"{t:g}", repr(float(s))])
    return buf.getvalue()


def summary_csv(prec: MetricCurve, succ: MetricCurve) -> str:
    return f"precision@20,success_auc\n{precision_at_20(prec)!r},{auc(succ)!r}\n"


def evaluate(preds, gts):
    """Precision and success curves plus their two summary numbers."""
    prec = precision_plot(preds, gts)
    succ = success_plot(preds, gts)
    return {"precision": prec, "success": succ,
            "precision@20": precision_at_20(prec), "success_auc": auc(succ)}
