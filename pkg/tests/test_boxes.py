import pytest
from hypothesis import given
from hypothesis import strategies as st

from classroom_bra.boxes import Box, Detection, iou, nms


@st.composite
def boxes(draw, max_coord=20.0):
    x1 = draw(st.floats(0, max_coord))
    y1 = draw(st.floats(0, max_coord))
    return Box(x1, y1, x1 + draw(st.floats(0, max_coord)), y1 + draw(st.floats(0, max_coord)))


def test_identical():
    b = Box(1, 2, 5, 7)
    assert iou(b, b) == 1.0


def test_disjoint():
    assert iou(Box(0, 0, 1, 1), Box(2, 2, 3, 3)) == 0.0


def test_touching_edges_do_not_overlap():
    assert iou(Box(0, 0, 1, 1), Box(1, 0, 2, 1)) == 0.0


def test_one_third():
    assert iou(Box(0, 0, 2, 2), Box(1, 0, 3, 2)) == 1 / 3


def test_degenerate_box():
    z = Box(1, 1, 1, 4)
    assert iou(z, z) == 0.0
    assert iou(z, Box(0, 0, 5, 5)) == 0.0


def test_invalid_corners():
    with pytest.raises(ValueError):
        Box(2, 0, 1, 1)


@given(boxes(), boxes())
def test_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes())
def test_self_iou(a):
    if a.area > 0:
        assert iou(a, a) == 1.0


class TestNms:
    def test_single(self):
        d = Detection(Box(0, 0, 1, 1), 0.3)
        assert nms([d], 0.5) == [d]

    def test_duplicate_suppressed(self):
        a = Detection(Box(0, 0, 4, 4), 0.8)
        b = Detection(Box(0, 0, 4, 4), 0.9)
        assert nms([a, b], 0.5) == [b]

    def test_disjoint_kept_sorted(self):
        a = Detection(Box(0, 0, 1, 1), 0.4)
        b = Detection(Box(5, 5, 6, 6), 0.7)
        assert nms([a, b], 0.5) == [b, a]

    def test_other_class_not_suppressed(self):
        a = Detection(Box(0, 0, 4, 4), 0.9, class_id=0)
        b = Detection(Box(0, 0, 4, 4), 0.8, class_id=1)
        assert nms([a, b], 0.5) == [a, b]

    def test_equal_scores_keep_input_order(self):
        a = Detection(Box(0, 0, 4, 4), 0.5)
        b = Detection(Box(0, 0, 4, 4), 0.5)
        out = nms([a, b], 0.5)
        assert len(out) == 1 and out[0] is a

    def test_threshold_is_strict(self):
        a = Detection(Box(0, 0, 2, 2), 0.9)
        b = Detection(Box(1, 0, 3, 2), 0.8)
        assert len(nms([a, b], 1 / 3)) == 2
        assert len(nms([a, b], 0.33)) == 1

    @given(st.lists(st.tuples(boxes(), st.floats(0, 1), st.integers(0, 1)), max_size=12),
           st.floats(0, 1))
    def test_subset_and_no_overlapping_survivors(self, raw, thr):
        dets = [Detection(b, s, c) for b, s, c in raw]
        out = nms(dets, thr)
        assert all(any(o is d for d in dets) for o in out)
        assert [o.score for o in out] == sorted((o.score for o in out), reverse=True)
        for i, a in enumerate(out):
            for b in out[i + 1:]:
                assert a.class_id != b.class_id or iou(a.box, b.box) <= thr
