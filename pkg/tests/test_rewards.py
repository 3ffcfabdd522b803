from fractions import Fraction
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathrl.parsing import BoundingBox, parse_response
from pathrl.rewards import (
    BoxFillSegmenter,
    ClosedAnswer,
    ClsLabel,
    DetBoxes,
    MalformedRecord,
    OpenAnswer,
    RewardConfig,
    SegMask,
    format_reward,
    reward_classification,
    reward_detection,
    reward_segmentation,
    reward_vqa,
    score,
)

from oracles import pixel_dice, raster

OK = "<think>reasoning</think><answer>{}</answer>"


def test_format_reward():
    assert format_reward(parse_response(OK.format("x"))) == 1
    assert format_reward(parse_response("<answer>x</answer>")) == 0
    assert format_reward(parse_response("<think>r</think><answer>x</answer><answer>y</answer>")) == 0


def test_classification_examples():
    out = reward_classification(parse_response(OK.format("(J)")), ClsLabel("J"))
    assert (out.r_task, out.r_format, out.total) == (1.0, 1, 2.0)
    out = reward_classification(parse_response(OK.format("(G)")), ClsLabel("J"))
    assert out.r_task == 0.0 and out.extracted == "G"
    out = reward_classification(parse_response("(J)"), ClsLabel("J"))
    assert (out.r_task, out.r_format, out.total) == (1.0, 0, 1.0)


def test_classification_full_text_option():
    options = {"A": "Tumor", "B": "Normal"}
    out = reward_classification(parse_response(OK.format("normal")), ClsLabel("B"), options)
    assert out.r_task == 1.0


GT2 = DetBoxes((BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)))


def test_detection_examples():
    assert reward_detection(parse_response(OK.format("[[0,0,10,10],[20,20,30,30]]")), GT2).r_task == 1.0
    out = reward_detection(parse_response(OK.format("")), GT2)
    assert out.r_task == 0.0 and out.n_boxes == 0
    out = reward_detection(parse_response(OK.format("[[0,0,10,10],[40,40,50,50],[20,20,30,30]]")), GT2)
    assert out.r_task == pytest.approx(5 / 6, abs=1e-15)


def test_box_fill_segmenter_centers():
    seg = BoxFillSegmenter()
    m = seg((8, 8), [BoundingBox(0, 0, 4, 2)])
    assert m.sum() == 8 and m[:2, :4].all()
    # a box covering no pixel center
    assert seg((8, 8), [BoundingBox(0.6, 0.6, 1.4, 1.4)]).sum() == 0
    # clipped at the image border
    assert seg((4, 4), [BoundingBox(2, 2, 100, 100)]).sum() == 4
    assert seg((4, 4), []).sum() == 0


def test_segmentation_examples():
    gt = raster((4, 4, 24, 14), 32)  # A = 200 pixels
    full = reward_segmentation(parse_response(OK.format("[[4,4,24,14]]")), SegMask(gt))
    assert full.r_task == 1.0
    half_pred = raster((4, 4, 14, 14), 32)
    expected = pixel_dice(half_pred, gt)
    assert expected == Fraction(2, 3)
    half = reward_segmentation(parse_response(OK.format("[[4,4,14,14]]")), SegMask(gt))
    assert half.r_task == float(expected)
    none = reward_segmentation(parse_response(OK.format("nothing")), SegMask(gt))
    assert none.r_task == 0.0


def test_segmenter_dims_checked():
    bad = lambda image, boxes: np.zeros((3, 3), bool)
    with pytest.raises(MalformedRecord):
        reward_segmentation(parse_response("x"), SegMask(np.zeros((4, 4), bool)), bad)


def test_vqa_examples():
    opts = {"A": "yes", "B": "no"}
    assert reward_vqa(parse_response(OK.format("(B)")), ClosedAnswer("B"), opts).r_task == 1.0
    ref = "dense lymphocytic infiltrate around tumor nests"
    assert reward_vqa(parse_response(OK.format(ref)), OpenAnswer(ref)).r_task == 1.0
    assert reward_vqa(parse_response(OK.format("nests tumor around infiltrate")), OpenAnswer(ref)).r_task == 0.0


@pytest.mark.parametrize("answer,gt,options,hit", [
    ("Yes.", "yes", None, True),
    ("no", "yes", None, False),
    ("(A) yes", "yes", {"A": "yes", "B": "no"}, True),
    ("B", "A", None, False),
    ("b) no", "B", None, True),
])
def test_closed_vqa_text_answers(answer, gt, options, hit):
    assert reward_vqa(parse_response(OK.format(answer)), ClosedAnswer(gt), options).r_task == float(hit)


def test_score_dispatch():
    out = score("cls", "<think>…</think><answer>(B)</answer>", ClsLabel("B"))
    assert out.total == 2.0
    out = score("det", "garbage text", DetBoxes((BoundingBox(0, 0, 5, 5),)))
    assert (out.r_task, out.r_format) == (0.0, 0)
    ref = "the stroma is fibrotic"
    assert score("vqa_open", OK.format(ref), OpenAnswer(ref)).total == 2.0


def test_score_variant_mismatch():
    with pytest.raises(MalformedRecord):
        score("det", "x", ClsLabel("A"))
    with pytest.raises(ValueError):
        score("nonsense", "x", ClsLabel("A"))


def test_lambda_validation():
    with pytest.raises(ValueError):
        RewardConfig(lam=-1)
    with pytest.raises(ValueError):
        RewardConfig(lam=float("inf"))


@given(st.floats(0, 10), st.floats(0, 10), st.booleans(), st.booleans())
def test_total_nondecreasing_in_lambda(l1, l2, formatted, correct):
    lo, hi = sorted((l1, l2))
    raw = OK.format("(A)" if correct else "(B)") if formatted else "(A)"
    a = score("cls", raw, ClsLabel("A"), RewardConfig(lam=lo))
    b = score("cls", raw, ClsLabel("A"), RewardConfig(lam=hi))
    assert b.total >= a.total
    assert a.total == a.r_task + lo * a.r_format


def test_deterministic_across_threads():
    gt = SegMask(raster((2, 2, 20, 20), 32))
    raw = OK.format("[[2,2,10,20],[15,3,30,9]]")
    expected = score("seg", raw, gt)
    results = []

    def work():
        for _ in range(50):
            results.append(score("seg", raw, gt))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results)
