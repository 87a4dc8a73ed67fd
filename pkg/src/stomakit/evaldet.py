"""Detection scoring against rotated ground truth: matching, P/R/F1, AP, mAP.

Matching is greedy in descending score order. Each detection takes the
still-unmatched ground-truth box of its own class with the highest rotated IoU,
provided that IoU is at least the threshold. AP uses all-point interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .annot import Label, LabeledBox, LabeledImage
from .errors import AllClassesSkipped, NoGroundTruth
from .rotgeom import rotated_iou


@dataclass(frozen=True)
class MatchCounts:
    n_tp: int
    n_fp: int
    n_fn: int


@dataclass(frozen=True)
class PrCurve:
    """PR points in descending-score order, with the score at each point."""

    recall: np.ndarray
    precision: np.ndarray
    scores: np.ndarray
    n_gt: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def _score_order(dets: Sequence[LabeledBox]) -> list[int]:
    # stable sort: equal scores keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def match(gt: Sequence[LabeledBox], det: Sequence[LabeledBox], label, iou_threshold: float = 0.5):
    """Greedy one-to-one matching for a single image and class.

    Returns ``(MatchCounts, flags)`` where ``flags[i]`` is True if the i-th
    detection of ``label`` (in input order) is a true positive.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    label = Label.parse(label)
    g = [b.box for b in gt if b.label is label]
    d = [b for b in det if b.label is label]
    for b in d:
        if b.score is None:
            raise ValueError("detections must carry scores")

    taken = [False] * len(g)
    flags = [False] * len(d)
    for i in _score_order(d):
        best, best_iou = -1, -1.0
        for j, gb in enumerate(g):
            if taken[j]:
                continue
            iou = rotated_iou(d[i].box, gb)
            if iou >= iou_threshold and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
            flags[i] = True
    n_tp = sum(flags)
    return MatchCounts(n_tp, len(d) - n_tp, len(g) - n_tp), flags


def precision_recall_f1(c: MatchCounts) -> tuple[float, float, float]:
    """Precision, recall and F1; every 0/0 is reported as 0."""
    p = c.n_tp / (c.n_tp + c.n_fp) if c.n_tp + c.n_fp else 0.0
    r = c.n_tp / (c.n_tp + c.n_fn) if c.n_tp + c.n_fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _pair_images(gt_all: Sequence[LabeledImage], det_all: Sequence[LabeledImage]):
    gt_by_id = {im.image_id: im for im in gt_all}
    det_by_id = {im.image_id: im for im in det_all}
    for image_id in sorted(set(gt_by_id) | set(det_by_id)):
        g = gt_by_id.get(image_id)
        d = det_by_id.get(image_id)
        yield image_id, (g.boxes if g else ()), (d.boxes if d else ())


def pr_curve(gt_all: Sequence[LabeledImage], det_all: Sequence[LabeledImage], label,
             iou_threshold: float = 0.5) -> PrCurve:
    """Pooled precision/recall curve over all images for one class.

    Images are paired by ``image_id``; detections on images without ground
    truth are false positives.
    """
    label = Label.parse(label)
    n_gt = 0
    scores, hits = [], []
    for _, g, d in _pair_images(gt_all, det_all):
        counts, flags = match(g, d, label, iou_threshold)
        n_gt += counts.n_tp + counts.n_fn
        scores.extend(b.score for b in d if b.label is label)
        hits.extend(flags)
    scores = np.asarray(scores, dtype=float)
    hits = np.asarray(hits, dtype=bool)
    # stable, so the per-image greedy order is preserved among equal scores
    order = np.argsort(-scores, kind="stable")
    scores, hits = scores[order], hits[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_gt if n_gt else np.zeros(len(tp))
    precision = tp / np.maximum(tp + fp, 1)
    return PrCurve(recall, precision, scores, n_gt)


def ap_from_curve(curve: PrCurve) -> float:
    """All-point interpolated area under a PR curve."""
    if curve.n_gt == 0:
        raise NoGroundTruth("class absent from ground truth; AP undefined")
    if len(curve.recall) == 0:
        return 0.0
    r = np.concatenate(([0.0], curve.recall))
    p = np.concatenate(([0.0], curve.precision))
    # precision envelope: non-increasing in recall
    env = np.maximum.accumulate(p[::-1])[::-1]
    return float(np.sum((r[1:] - r[:-1]) * env[1:]))


def average_precision(gt_all: Sequence[LabeledImage], det_all: Sequence[LabeledImage], label,
                      iou_threshold: float = 0.5) -> float:
    return ap_from_curve(pr_curve(gt_all, det_all, label, iou_threshold))


def mean_ap(aps: Iterable[Optional[float]]) -> float:
    """Mean of the defined per-class APs (``None``/NaN entries are skipped)."""
    vals = [a for a in aps if a is not None and not math.isnan(a)]
    if not vals:
        raise AllClassesSkipped("no class has a defined AP")
    return math.fsum(vals) / len(vals)


@dataclass
class ClassMetrics:
    label: str
    n_gt: int
    n_det: int
    precision: float
    recall: float
    f1: float
    score_threshold: Optional[float]
    ap: Optional[float]

    @property
    def skipped(self) -> bool:
        return self.ap is None


@dataclass
class EvaluationReport:
    iou_threshold: float
    classes: list[ClassMetrics] = field(default_factory=list)
    map: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "classes": [vars(c).copy() for c in self.classes],
            "mAP": self.map,
        }


def best_f1_point(curve: PrCurve) -> tuple[float, float, float, Optional[float]]:
    """Operating point maximising F1 along the curve.

    Only points where the score strictly drops are candidate thresholds, so
    tied detections are kept or dropped together. Returns
    ``(precision, recall, f1, score_threshold)``.
    """
    if len(curve.scores) == 0:
        return 0.0, 0.0, 0.0, None
    s = curve.scores
    last_of_run = np.ones(len(s), dtype=bool)
    last_of_run[:-1] = s[1:] != s[:-1]
    best = (0.0, 0.0, 0.0, None)
    for k in np.flatnonzero(last_of_run):
        p, r = float(curve.precision[k]), float(curve.recall[k])
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        if f1 > best[2]:
            best = (p, r, f1, float(s[k]))
    return best


def evaluate(gt_all: Sequence[LabeledImage], det_all: Sequence[LabeledImage],
             iou_threshold: float = 0.5, labels: Sequence = tuple(Label)) -> EvaluationReport:
    """Per-class P/R/F1 (at the F1-maximising score) and AP, plus mAP."""
    report = EvaluationReport(iou_threshold)
    aps = []
    for label in labels:
        label = Label.parse(label)
        curve = pr_curve(gt_all, det_all, label, iou_threshold)
        p, r, f1, thr = best_f1_point(curve)
        try:
            ap = ap_from_curve(curve)
        except NoGroundTruth:
            ap = None
        aps.append(ap)
        report.classes.append(ClassMetrics(label.value, curve.n_gt, len(curve.scores), p, r, f1, thr, ap))
    try:
        report.map = mean_ap(aps)
    except AllClassesSkipped:
        report.map = None
    return report
