import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from foghorn.evaluation import (
    CITYSCAPES_CLASSES,
    ConfusionMatrix,
    accumulate,
    format_table,
    frequent_classes,
    load_classes,
    load_void,
    mean_iou,
    report,
)

ROAD, SKY, CAR = 1, 11, 14
THREE = {1: "a", 2: "b", 3: "c"}


def set_oracle(gt, pred, classes, void=0):
    """Per-class IoU from pixel index sets."""
    keep = gt != void
    ious = {}
    for c in classes:
        g = set(np.flatnonzero((gt == c) & keep))
        p = set(np.flatnonzero((pred == c) & keep))
        if g | p:
            ious[c] = 100.0 * len(g & p) / len(g | p)
    return float(np.mean(list(ious.values()))), ious


def test_hand_built_case():
    gt = np.array([[ROAD, ROAD], [SKY, 0]])
    pred = np.array([[ROAD, SKY], [SKY, CAR]])
    cm = accumulate(ConfusionMatrix(), gt, pred)
    idx = {c: i for i, c in enumerate(cm.class_ids)}
    assert cm.counts[idx[ROAD], idx[ROAD]] == 1
    assert cm.counts[idx[ROAD], idx[SKY]] == 1
    assert cm.counts[idx[SKY], idx[SKY]] == 1
    assert cm.total == 3


def test_identity_and_void():
    gt = np.arange(16).reshape(4, 4) % 4
    cm = accumulate(ConfusionMatrix(THREE), gt, np.where(gt == 0, 1, gt))
    assert np.trace(cm.counts) == 16 - (gt == 0).sum()
    empty = ConfusionMatrix(THREE)
    assert accumulate(empty, np.zeros((3, 3), int), np.ones((3, 3), int)).total == 0


def test_accumulate_does_not_mutate():
    cm = ConfusionMatrix(THREE)
    accumulate(cm, np.ones((2, 2), int), np.ones((2, 2), int))
    assert cm.total == 0


def test_errors():
    cm = ConfusionMatrix(THREE)
    with pytest.raises(ValueError, match="shape"):
        cm.update(np.ones((2, 2), int), np.ones((2, 3), int))
    with pytest.raises(ValueError, match="void"):
        cm.update(np.ones((2, 2), int), np.zeros((2, 2), int))
    with pytest.raises(ValueError):
        cm.update(np.full((2, 2), 7), np.ones((2, 2), int))
    with pytest.raises(ValueError):
        mean_iou(cm)
    with pytest.raises(ValueError):
        ConfusionMatrix({0: "x"}, void=0)


def test_perfect_and_disjoint():
    gt = np.array([[1, 2], [3, 1]])
    assert mean_iou(accumulate(ConfusionMatrix(THREE), gt, gt))[0] == 100.0
    # classes swapped pairwise: every pixel wrong
    gt2 = np.array([[1, 2], [2, 1]])
    assert mean_iou(accumulate(ConfusionMatrix(THREE), gt2, 3 - gt2))[0] == 0.0


def test_absent_classes_excluded():
    gt = np.array([[1, 1]])
    miou, per = mean_iou(accumulate(ConfusionMatrix(THREE), gt, gt))
    assert miou == 100.0 and np.isnan(per[2]) and np.isnan(per[3])


maps = arrays(np.int64, (8, 8), elements=st.integers(0, 3))
preds = arrays(np.int64, (8, 8), elements=st.integers(1, 3))


@given(maps, preds)
def test_matches_set_oracle(gt, pred):
    cm = accumulate(ConfusionMatrix(THREE), gt, pred)
    if cm.total == 0:
        return
    miou, per = mean_iou(cm)
    ref_mean, ref = set_oracle(gt, pred, THREE)
    assert abs(miou - ref_mean) <= 1e-12
    for c, v in ref.items():
        assert abs(per[c] - v) <= 1e-12


@given(maps, preds, st.integers(0, 2**31))
def test_pixel_order_irrelevant(gt, pred, seed):
    perm = np.random.default_rng(seed).permutation(64)
    a = accumulate(ConfusionMatrix(THREE), gt, pred)
    b = accumulate(ConfusionMatrix(THREE), gt.ravel()[perm], pred.ravel()[perm])
    assert np.array_equal(a.counts, b.counts)


@given(maps, preds, arrays(np.int64, (8, 8), elements=st.integers(1, 3)))
def test_void_pixels_are_inert(gt, pred, extra_pred):
    gt_void = np.concatenate([gt, np.zeros_like(gt)])
    pred_void = np.concatenate([pred, extra_pred])
    a = accumulate(ConfusionMatrix(THREE), gt, pred)
    b = accumulate(ConfusionMatrix(THREE), gt_void, pred_void)
    assert np.array_equal(a.counts, b.counts)


@given(arrays(np.int64, (6, 6), elements=st.integers(1, 19)), arrays(np.int64, (6, 6), elements=st.integers(1, 19)))
@settings(max_examples=50)
def test_bounds_and_subset(gt, pred):
    cm = accumulate(ConfusionMatrix(), gt, pred)
    miou, per = mean_iou(cm)
    assert 0 <= miou <= 100
    _, per_sub = mean_iou(cm, frequent_classes())
    for c in frequent_classes():
        assert per_sub[c] == per[c] or (np.isnan(per_sub[c]) and np.isnan(per[c]))


def test_matrix_sum_is_exact(rng):
    parts = [(rng.integers(0, 4, (5, 5)), rng.integers(1, 4, (5, 5))) for _ in range(6)]
    total = ConfusionMatrix(THREE)
    for g, p in parts:
        total = total + accumulate(ConfusionMatrix(THREE), g, p)
    whole = accumulate(ConfusionMatrix(THREE), np.stack([g for g, _ in parts]), np.stack([p for _, p in parts]))
    assert np.array_equal(total.counts, whole.counts)
    with pytest.raises(ValueError):
        total + ConfusionMatrix({1: "a"})


def test_frequent_classes():
    ids = frequent_classes()
    assert len(ids) == 11
    assert [CITYSCAPES_CLASSES[i] for i in ids][-2:] == ["sky", "car"]
    with pytest.raises(ValueError):
        frequent_classes(THREE)


def test_report_and_table(tmp_path):
    gt = np.array([[1, 2], [3, 11]])
    r = report(accumulate(ConfusionMatrix(), gt, gt))
    assert r["mean_iou"] == 100.0 and r["mean_iou_frequent"] == 100.0 and r["pixels"] == 4
    assert r["per_class"]["wall"] is None
    table = format_table(r)
    assert "mean IoU : 100.0" in table and "road : 100.0" in table
    assert "mean_iou_frequent" not in report(accumulate(ConfusionMatrix(THREE), gt % 3 + 1, gt % 3 + 1))


def test_class_definition_files(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"classes": {"1": "x", "2": "y"}, "void": 255}))
    (tmp_path / "bare.json").write_text(json.dumps({"1": "x"}))
    assert load_classes(tmp_path / "c.json") == {1: "x", 2: "y"}
    assert load_void(tmp_path / "c.json") == 255
    assert load_classes(tmp_path / "bare.json") == {1: "x"} and load_void(tmp_path / "bare.json") == 0
