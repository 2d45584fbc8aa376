"""
Pixel and object metrics
========================

IoU pools counts over the whole set while nIoU averages per image.  Pd and
Fa work on 8-connected components: a predicted component detects an
object when the centroids are closer than 4 pixels.
"""
import numpy as np

from ucfnet.metrics import ConfusionCounts, curve_and_auc, evaluate, iou_dataset, niou_dataset

# ratio of sums versus mean of ratios
counts = [ConfusionCounts(tp=1, fp=0, fn=1, tn=0), ConfusionCounts(tp=3, fp=1, fn=0, tn=0)]
print("IoU", iou_dataset(counts), "nIoU", niou_dataset(counts))

# a scene with two targets: one found a little off-centre, one missed, plus a 5-pixel false alarm
gt = np.zeros((64, 64), bool)
gt[10:13, 10:13] = True
gt[40:42, 50:52] = True
prob = np.zeros((64, 64))
prob[11:14, 11:14] = 0.9
prob[30, 20:25] = 0.8
report, curve = evaluate([prob], [gt])
print({k: round(v, 3) if v is not None else None for k, v in report.table_row().items()})
print("PR-AUC", round(report.pr_auc, 3), "F1", round(report.f_score, 3), "curve points", len(curve))

# a perfect predictor has PR-AUC 1; flipping it drives F1 to 0
_, perfect = curve_and_auc([gt.astype(float)], [gt])
_, flipped = curve_and_auc([1.0 - gt], [gt])
print("perfect", perfect["pr_auc"], perfect["f_score"], "| flipped F1", flipped["f_score"])
