"""Confusion-matrix accumulation and mean IoU with void handling."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

VOID = 0

CITYSCAPES_CLASSES = {
    1: "road",
    2: "sidewalk",
    3: "building",
    4: "wall",
    5: "fence",
    6: "pole",
    7: "traffic light",
    8: "traffic sign",
    9: "vegetation",
    10: "terrain",
    11: "sky",
    12: "person",
    13: "rider",
    14: "car",
    15: "truck",
    16: "bus",
    17: "train",
    18: "motorcycle",
    19: "bicycle",
}

# well-represented in the dense-fog test scenes
FREQUENT_CLASS_NAMES = (
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "sky",
    "car",
)


def frequent_classes(classes: dict[int, str] = CITYSCAPES_CLASSES) -> list[int]:
    by_name = {name: cid for cid, name in classes.items()}
    missing = [n for n in FREQUENT_CLASS_NAMES if n not in by_name]
    if missing:
        raise ValueError(f"class definition lacks frequent classes: {missing}")
    return sorted(by_name[n] for n in FREQUENT_CLASS_NAMES)


class ConfusionMatrix:
    """``counts[g, p]`` = pixels with ground truth ``g`` predicted as ``p``."""

    def __init__(self, classes: dict[int, str] = CITYSCAPES_CLASSES, void: int = VOID):
        if void in classes:
            raise ValueError(f"void id {void} is also a class id")
        self.classes = dict(sorted(classes.items()))
        self.class_ids = np.array(list(self.classes), dtype=np.int64)
        self.void = void
        self.counts = np.zeros((len(self.class_ids), len(self.class_ids)), dtype=np.int64)
        size = max(int(self.class_ids.max()), void) + 1
        self._index = np.full(size, -1, dtype=np.int64)
        self._index[self.class_ids] = np.arange(len(self.class_ids))

    def copy(self) -> "ConfusionMatrix":
        out = ConfusionMatrix(self.classes, self.void)
        out.counts = self.counts.copy()
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _positions(self, labels, what: str, allow_void: bool):
        labels = np.asarray(labels, dtype=np.int64).ravel()
        bad = (labels < 0) | (labels >= len(self._index))
        idx = np.where(bad, -1, self._index[np.clip(labels, 0, len(self._index) - 1)])
        invalid = idx < 0
        if allow_void:
            invalid &= labels != self.void
        if invalid.any():
            raise ValueError(f"{what} contains ids outside the class list: {sorted(set(labels[invalid].tolist()))[:10]}")
        return idx

    def update(self, gt, pred) -> "ConfusionMatrix":
        gt = np.asarray(gt)
        pred = np.asarray(pred)
        if gt.shape != pred.shape:
            raise ValueError(f"ground truth {gt.shape} and prediction {pred.shape} differ in shape")
        if np.any(pred == self.void):
            raise ValueError("prediction contains the void label")
        g = self._positions(gt, "ground truth", allow_void=True)
        p = self._positions(pred, "prediction", allow_void=False)
        keep = gt.ravel() != self.void
        n = len(self.class_ids)
        self.counts += np.bincount(g[keep] * n + p[keep], minlength=n * n).reshape(n, n)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes or self.void != other.void:
            raise ValueError("cannot add confusion matrices over different classes")
        out = self.copy()
        out.counts += other.counts
        return out


def accumulate(cm: ConfusionMatrix, gt, pred) -> ConfusionMatrix:
    """Return a new matrix with the non-void pixels of ``gt``/``pred`` added."""
    return cm.copy().update(gt, pred)


def mean_iou(cm: ConfusionMatrix, subset=None) -> tuple[float, dict[int, float]]:
    """Mean IoU in percent and per-class IoU (NaN where a class never occurs).

    Classes absent from both ground truth and prediction do not enter the mean.
    ``subset`` restricts the mean to the given class ids.
    """
    if cm.total == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan) * 100.0
    per_class = {int(c): float(v) for c, v in zip(cm.class_ids, iou)}
    ids = list(per_class) if subset is None else [int(c) for c in subset]
    unknown = [c for c in ids if c not in per_class]
    if unknown:
        raise ValueError(f"unknown class ids in subset: {unknown}")
    vals = [per_class[c] for c in ids if not np.isnan(per_class[c])]
    mean = float(np.mean(vals)) if vals else float("nan")
    return mean, per_class


def load_classes(path) -> dict[int, str]:
    """Class definition JSON: ``{"classes": {"1": "road", ...}, "void": 0}`` or a bare mapping."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    mapping = data.get("classes", data)
    return {int(k): str(v) for k, v in mapping.items()}


def load_void(path, default: int = VOID) -> int:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return int(data.get("void", default)) if "classes" in data else default


def report(cm: ConfusionMatrix) -> dict:
    mean_all, per_class = mean_iou(cm)
    report = {
        "mean_iou": mean_all,
        "per_class": {cm.classes[c]: (None if np.isnan(v) else v) for c, v in per_class.items()},
        "pixels": cm.total,
    }
    try:
        report["mean_iou_frequent"] = mean_iou(cm, frequent_classes(cm.classes))[0]
    except ValueError:
        pass
    return report


def format_table(result: dict) -> str:
    """Aligned text table with percentages to one decimal."""
    names = list(result["per_class"])
    width = max([len(n) for n in names] + [len("mean IoU (frequent)")])
    lines = []
    for name in names:
        v = result["per_class"][name]
        lines.append(f"{name:>{width}} : {'-' if v is None else f'{v:.1f}'}")
    lines.append("=" * (width + 9))
    lines.append(f"{'mean IoU':>{width}} : {result['mean_iou']:.1f}")
    if "mean_iou_frequent" in result:
        lines.append(f"{'mean IoU (frequent)':>{width}} : {result['mean_iou_frequent']:.1f}")
    return "\n".join(lines) + "\n"
