"""Pixel-level (IoU, nIoU), object-level (Pd, Fa) and curve metrics for small-object segmentation."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

MATCH_DISTANCE = 4.0
_EIGHT = np.ones((3, 3), dtype=int)


def _binary(mask, what: str) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != bool:
        if not np.all((m == 0) | (m == 1)):
            raise ValueError(f"{what} must be binary (0/1); threshold probabilities first")
        m = m.astype(bool)
    return m


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def union(self) -> int:
        return self.tp + self.fp + self.fn


def confusion(pred, gt) -> ConfusionCounts:
    p, g = _binary(pred, "pred"), _binary(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"pred shape {p.shape} != gt shape {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def iou_dataset(counts: Sequence[ConfusionCounts]) -> float:
    """Dataset IoU as a ratio of sums, ``sum(tp) / sum(tp + fp + fn)``."""
    if not counts:
        raise ValueError("iou_dataset needs at least one image")
    tp = sum(c.tp for c in counts)
    union = sum(c.union for c in counts)
    if union == 0:
        warnings.warn("no foreground in predictions or ground truth; IoU defined as 1.0")
        return 1.0
    return tp / union


def niou_dataset(counts: Sequence[ConfusionCounts]) -> float:
    """Mean of per-image IoUs; an image with an empty union counts as 1.0."""
    if not counts:
        raise ValueError("niou_dataset needs at least one image")
    return float(np.mean([c.tp / c.union if c.union else 1.0 for c in counts]))


@dataclass
class Component:
    pixels: np.ndarray  # (k, 2) integer (row, col)
    centroid: tuple[float, float]

    @property
    def area(self) -> int:
        return len(self.pixels)


def connected_components(mask) -> list[Component]:
    """8-connected foreground regions with unweighted centroid (row, col)."""
    m = _binary(mask, "mask")
    labels, count = ndimage.label(m, structure=_EIGHT)
    comps = []
    for lab in range(1, count + 1):
        pix = np.argwhere(labels == lab)
        comps.append(Component(pix, (float(pix[:, 0].mean()), float(pix[:, 1].mean()))))
    return comps


@dataclass
class MatchResult:
    pairs: list[tuple[int, int]]
    unmatched_pred: list[int]
    unmatched_gt: list[int]


def match_detections(pred: Sequence[Component], gt: Sequence[Component],
                     dist: float = MATCH_DISTANCE) -> MatchResult:
    """Greedy one-to-one matching by ascending centroid distance; admissible iff distance < ``dist``."""
    cand = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            d = float(np.hypot(p.centroid[0] - g.centroid[0], p.centroid[1] - g.centroid[1]))
            if d < dist:
                cand.append((d, i, j))
    cand.sort()
    used_p, used_g, pairs = set(), set(), []
    for _, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j))
    return MatchResult(
        pairs,
        [i for i in range(len(pred)) if i not in used_p],
        [j for j in range(len(gt)) if j not in used_g],
    )


@dataclass
class ImageDetection:
    n_gt: int
    n_matched: int
    false_alarm_pixels: int
    n_pixels: int


def detect_image(pred_mask, gt_mask, dist: float = MATCH_DISTANCE) -> ImageDetection:
    pred_c = connected_components(pred_mask)
    gt_c = connected_components(gt_mask)
    res = match_detections(pred_c, gt_c, dist)
    fa_pix = sum(pred_c[i].area for i in res.unmatched_pred)
    return ImageDetection(len(gt_c), len(res.pairs), fa_pix, int(np.asarray(pred_mask).size))


def pd_fa(images: Sequence[ImageDetection]) -> tuple[float, float]:
    """Return ``(pd, fa)``: Pd in percent, Fa in units of 1e-6.

    Pd averages ``matched / objects`` over images that contain objects; Fa
    averages ``false-alarm pixels / image pixels`` over all images.
    """
    if not images:
        raise ValueError("pd_fa needs at least one image")
    with_obj = [im for im in images if im.n_gt > 0]
    if not with_obj:
        raise ValueError("Pd is undefined: no ground-truth objects in the dataset")
    pd = 100.0 * float(np.mean([im.n_matched / im.n_gt for im in with_obj]))
    fa = 1e6 * float(np.mean([im.false_alarm_pixels / im.n_pixels for im in images]))
    return pd, fa


@dataclass
class RocPoint:
    threshold: float
    precision: float
    recall: float
    tpr: float
    fpr: float


def default_thresholds(count: int = 201) -> np.ndarray:
    return np.linspace(1.0, 0.0, count)


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    # points arrive in descending-threshold order, where x (recall or FPR) never decreases;
    # re-sorting would reorder ties at equal x and change the path
    if np.any(np.diff(x) < 0):
        raise ValueError("curve abscissa must be non-decreasing in threshold order")
    return float(np.trapezoid(y, x))


def curve_and_auc(prob_maps: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray],
                  thresholds: np.ndarray | None = None, auc_curve: str = "pr",
                  f_threshold: float = 0.5) -> tuple[list[RocPoint], dict]:
    """Sweep thresholds over pooled pixels (positive iff ``prob >= threshold``).

    Returns the curve points and a dict with ``pr_auc``, ``roc_auc``, ``auc``
    (whichever of the two ``auc_curve`` selects) and ``f_score`` (pixel F1 at
    ``f_threshold``).  The PR curve is anchored at (recall 0, precision 1) and
    the ROC curve at (0, 0) and (1, 1) before trapezoid integration.
    """
    if auc_curve not in ("pr", "roc"):
        raise ValueError(f"auc_curve must be 'pr' or 'roc', got {auc_curve!r}")
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) > 0):
        raise ValueError("thresholds must be in descending order")
    probs = np.concatenate([np.asarray(p, dtype=float).ravel() for p in prob_maps])
    gt = np.concatenate([_binary(g, "gt").ravel() for g in gt_masks])
    if probs.shape != gt.shape:
        raise ValueError("probability maps and masks differ in total size")
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    n_pos = int(gt.sum())
    n_neg = gt.size - n_pos
    if n_pos == 0:
        raise ValueError("ground truth has no positive pixels; recall is undefined")

    # cumulative counts via sorting: tp(t) = #positives with prob >= t
    pos_sorted = np.sort(probs[gt])
    neg_sorted = np.sort(probs[~gt])

    def counts(t):
        tp = n_pos - np.searchsorted(pos_sorted, t, side="left")
        fp = n_neg - np.searchsorted(neg_sorted, t, side="left")
        return tp, fp

    points = []
    for t in thresholds:
        tp, fp = counts(t)
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / n_pos
        fpr = fp / n_neg if n_neg else 0.0
        points.append(RocPoint(float(t), float(precision), float(recall), float(recall), float(fpr)))

    rec = np.array([0.0] + [p.recall for p in points])
    prec = np.array([1.0] + [p.precision for p in points])
    fpr = np.array([0.0] + [p.fpr for p in points] + [1.0])
    tpr = np.array([0.0] + [p.tpr for p in points] + [1.0])
    pr_auc = _trapezoid(rec, prec)
    roc_auc = _trapezoid(fpr, tpr)

    tp, fp = counts(f_threshold)
    fn = n_pos - tp
    f_score = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    summary = {
        "pr_auc": pr_auc,
        "roc_auc": roc_auc,
        "auc": pr_auc if auc_curve == "pr" else roc_auc,
        "auc_curve": auc_curve,
        "f_score": float(f_score),
    }
    return points, summary


@dataclass
class MetricReport:
    iou: float
    niou: float
    pd: float | None
    fa: float
    auc: float | None = None
    f_score: float | None = None
    pr_auc: float | None = None
    roc_auc: float | None = None
    auc_curve: str = "pr"
    n_images: int = 0
    per_image: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> dict:
        """Values in the units of the usual results table: IoU/nIoU/Pd in percent, Fa in 1e-6."""
        return {"IoU": 100 * self.iou, "nIoU": 100 * self.niou, "Pd": self.pd, "Fa": self.fa}


def evaluate(prob_maps: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray], *,
             threshold: float = 0.5, dist: float = MATCH_DISTANCE,
             thresholds: np.ndarray | None = None, auc_curve: str = "pr",
             ids: Sequence[str] | None = None, with_curve: bool = True
             ) -> tuple[MetricReport, list[RocPoint]]:
    """Full metric suite on 2-D probability maps and binary ground-truth masks."""
    if len(prob_maps) != len(gt_masks):
        raise ValueError("prob_maps and gt_masks differ in length")
    counts, dets, per_image = [], [], []
    for i, (p, g) in enumerate(zip(prob_maps, gt_masks)):
        pred = np.asarray(p) >= threshold
        g = _binary(g, "gt")
        c = confusion(pred, g)
        d = detect_image(pred, g, dist)
        counts.append(c)
        dets.append(d)
        per_image.append({
            "id": ids[i] if ids is not None else str(i),
            "tp": c.tp, "fp": c.fp, "fn": c.fn,
            "iou": c.tp / c.union if c.union else 1.0,
            "n_objects": d.n_gt, "n_detected": d.n_matched,
            "false_alarm_pixels": d.false_alarm_pixels,
        })
    if any(d.n_gt for d in dets):
        pd, fa = pd_fa(dets)
    else:
        pd, fa = None, 1e6 * float(np.mean([d.false_alarm_pixels / d.n_pixels for d in dets]))
    report = MetricReport(iou_dataset(counts), niou_dataset(counts), pd, fa,
                          auc_curve=auc_curve, n_images=len(counts), per_image=per_image)
    points: list[RocPoint] = []
    if with_curve and any(np.any(g) for g in gt_masks):
        points, summ = curve_and_auc(prob_maps, gt_masks, thresholds, auc_curve, threshold)
        report.auc, report.f_score = summ["auc"], summ["f_score"]
        report.pr_auc, report.roc_auc = summ["pr_auc"], summ["roc_auc"]
    return report, points


def write_report_json(report: MetricReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def write_curve_csv(points: Sequence[RocPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["threshold", "precision", "recall", "tpr", "fpr"])
        for p in points:
            wr.writerow([f"{p.threshold:.6f}", f"{p.precision:.8f}", f"{p.recall:.8f}",
                         f"{p.tpr:.8f}", f"{p.fpr:.8f}"])
