"""Mean IoU with void pixels and the frequent-class subset.

Run: python3 demos/04_evaluate.py
"""
import numpy as np

from foghorn.evaluation import ConfusionMatrix, accumulate, format_table, frequent_classes, mean_iou, report
from foghorn.scenes import CAR, ROAD, SIDEWALK, make_scene

cm = ConfusionMatrix()
rng = np.random.default_rng(1)
for seed in range(5):
    gt = make_scene(seed, (64, 128)).labels.copy()
    gt[:4] = 0  # a void band along the top edge
    pred = np.where(gt == 0, ROAD, gt)
    # a sloppy model: confuses the curb now and then and misses some cars
    pred[(gt == SIDEWALK) & (rng.random(gt.shape) < 0.3)] = ROAD
    pred[(gt == CAR) & (rng.random(gt.shape) < 0.5)] = ROAD
    cm = accumulate(cm, gt, pred)

overall, per_class = mean_iou(cm)
frequent, _ = mean_iou(cm, frequent_classes())
print(f"pixels counted: {cm.total}, mean IoU {overall:.1f}, frequent classes {frequent:.1f}")
print(format_table(report(cm)))
