"""Confusion matrix and IoU: toy examples and the brute-force oracle."""

import math

import numpy as np
import pytest

from rfcnet.errors import LabelOutOfRange
from rfcnet.metrics import ConfusionMatrix, default_class_names


def brute_force_iou(pred, label, n_classes):
    """Per-pixel counting with explicit Python loops (independent oracle)."""
    pred = np.asarray(pred).reshape(-1)
    label = np.asarray(label).reshape(-1)
    ious = []
    for c in range(n_classes):
        tp = fp = fn = 0
        for p, g in zip(pred.tolist(), label.tolist()):
            if p == c and g == c:
                tp += 1
            elif p == c and g != c:
                fp += 1
            elif p != c and g == c:
                fn += 1
        union = tp + fp + fn
        ious.append(math.nan if union == 0 else tp / union)
    return ious


def test_perfect_prediction_gives_mean_iou_1():
    label = np.random.default_rng(0).integers(0, 14, size=(4, 8, 8))
    cm = ConfusionMatrix()
    cm.update(label, label)
    assert cm.mean_iou() == 1.0


def test_2x2_toy_example():
    gt = np.array([[0, 0], [1, 1]])
    pred = np.array([[0, 1], [1, 1]])
    cm = ConfusionMatrix(n_classes=2)
    cm.update(pred, gt)
    iou = cm.per_class_iou()
    assert iou[0] == pytest.approx(1 / 2)
    assert iou[1] == pytest.approx(2 / 3)
    assert cm.mean_iou() == pytest.approx(7 / 12)


def test_matches_brute_force_on_100_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(100):
        label = rng.integers(0, 14, size=(8, 8))
        pred = rng.integers(0, 14, size=(8, 8))
        cm = ConfusionMatrix()
        cm.update(pred, label)
        fast = cm.per_class_iou()
        slow = brute_force_iou(pred, label, 14)
        for f, s in zip(fast, slow):
            if math.isnan(s):
                assert math.isnan(f)
            else:
                assert f == pytest.approx(s, abs=0)  # exact equality


def test_undefined_classes_excluded_from_mean():
    gt = np.zeros((4, 4), dtype=int)
    pred = np.zeros((4, 4), dtype=int)
    cm = ConfusionMatrix(n_classes=14)
    cm.update(pred, gt)
    iou = cm.per_class_iou()
    assert iou[0] == 1.0
    assert np.isnan(iou[1:]).all()
    assert cm.mean_iou() == 1.0


def test_total_counts_all_pixels():
    cm = ConfusionMatrix()
    rng = np.random.default_rng(1)
    cm.update(rng.integers(0, 14, (3, 8, 8)), rng.integers(0, 14, (3, 8, 8)))
    cm.update(rng.integers(0, 14, (2, 8, 8)), rng.integers(0, 14, (2, 8, 8)))
    assert cm.total == 5 * 64


def test_class_permutation_invariance():
    rng = np.random.default_rng(7)
    label = rng.integers(0, 14, size=(16, 16))
    pred = rng.integers(0, 14, size=(16, 16))
    cm = ConfusionMatrix()
    cm.update(pred, label)
    perm = rng.permutation(14)
    cm_p = ConfusionMatrix()
    cm_p.update(perm[pred], perm[label])
    assert cm_p.mean_iou() == pytest.approx(cm.mean_iou())


def test_out_of_range_labels_rejected():
    cm = ConfusionMatrix()
    with pytest.raises(LabelOutOfRange):
        cm.update(np.zeros((2, 2), int), np.full((2, 2), 14))
    with pytest.raises(LabelOutOfRange):
        cm.update(np.full((2, 2), -1), np.zeros((2, 2), int))


def test_class_names_cover_14_classes():
    names = default_class_names()
    assert len(names) == 14
    assert names[0] == "background"
    assert names[-1] == "dynamic_digit_9"
