import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flakeseg.metrics import ConfusionCounts, confusion, evaluate, evaluate_masks

from oracles import tallies


def test_four_by_four_example():
    truth = np.array([[0] * 4, [0] * 4, [1] * 4, [1] * 4], np.uint8)
    pred = truth.copy()
    pred[1, 2:] = 1   # 6 of 8 class-0 pixels right
    pred[3, :] = 0    # 4 of 8 class-1 pixels right
    c = confusion(pred, truth)
    assert (c.tp[0], c.fp[0], c.fn[0]) == (6, 4, 2)
    assert (c.tp[1], c.fp[1], c.fn[1]) == (4, 2, 4)
    r = evaluate(c)
    assert r.per_class_iou[:2] == pytest.approx([0.5, 0.4])
    assert r.miou == pytest.approx(0.45)
    assert r.pixel_accuracy == pytest.approx(10 / 16)


def test_complementary_prediction():
    truth = np.zeros((3, 3), np.uint8)
    truth[:, 1:] = 1
    pred = 1 - truth
    c = confusion(pred, truth)
    assert c.tp[:2].tolist() == [0, 0] and c.tn[:2].tolist() == [0, 0]
    r = evaluate(confusion(np.zeros((3, 3)), np.ones((3, 3))))
    assert r.miou == 0 and r.pixel_accuracy == 0


def test_perfect_prediction_fixed_point():
    m = np.random.default_rng(0).integers(0, 7, (9, 9))
    r = evaluate(confusion(m, m))
    for v in (r.pixel_accuracy, r.mean_accuracy, r.miou, r.precision, r.recall, r.f1):
        assert v == 1.0


def test_undefined_on_empty_counts():
    r = evaluate(ConfusionCounts())
    assert r.undefined and r.miou is None


def test_dims_mismatch():
    with pytest.raises(ValueError, match="dims"):
        confusion(np.zeros((3, 3)), np.zeros((3, 4)))


def test_absent_classes_skipped():
    truth = np.zeros((3, 3), np.uint8)
    truth[0, 0] = 4
    pred = truth.copy()
    r = evaluate(confusion(pred, truth))
    assert r.present_classes == [0, 4]
    assert r.per_class_iou[1] is None and r.miou == 1.0


@settings(max_examples=200, deadline=None)
@given(arrays(np.uint8, (5, 6), elements=st.integers(0, 6)), arrays(np.uint8, (5, 6), elements=st.integers(0, 6)))
def test_counts_match_tallies(pred, truth):
    c = confusion(pred, truth)
    tp, fp, fn, tn = tallies(pred, truth, 7)
    assert c.tp.tolist() == tp and c.fp.tolist() == fp and c.fn.tolist() == fn and c.tn.tolist() == tn


def test_pooled_counts_add_up():
    rng = np.random.default_rng(1)
    preds = [rng.integers(0, 7, (4, 4)) for _ in range(3)]
    truths = [rng.integers(0, 7, (4, 4)) for _ in range(3)]
    whole = evaluate(confusion(np.concatenate(preds), np.concatenate(truths)))
    assert evaluate_masks(preds, truths).to_dict() == whole.to_dict()


def test_printed_variants_kept():
    rng = np.random.default_rng(2)
    p, t = rng.integers(0, 3, (6, 6)), rng.integers(0, 3, (6, 6))
    r = evaluate(confusion(p, t))
    assert r.printed_f1 == pytest.approx(2 * r.precision / (r.precision + r.recall))
    assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))
    assert r.printed_pixel_accuracy >= r.pixel_accuracy
    assert "IoU" in r.table()
