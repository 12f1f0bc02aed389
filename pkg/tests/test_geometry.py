import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackletdp.geometry import (BBox, Detection, Frame, PixelBox, clamp_events, iou, iou_array, l1_matrix,
                                 linf_matrix, loc_score_boxes, spatial_distance)

unit = st.floats(0.0, 1.0, allow_nan=False)
boxes = st.builds(BBox, unit, unit, unit, unit)
shift = st.floats(-0.2, 0.2, allow_nan=False)
# at least a pixel wide on any frame of >= 100 px
sized = st.builds(BBox, unit, unit, st.floats(0.01, 1.0), st.floats(0.01, 1.0))


def iou_corners(a: BBox, b: BBox) -> float:
    # independent corner-form arithmetic; identical non-degenerate boxes are 1 by definition
    if a == b:
        return 1.0 if a.w > 0 and a.h > 0 else 0.0
    ax0, ay0, ax1, ay1 = a.x - a.w / 2, a.y - a.h / 2, a.x + a.w / 2, a.y + a.h / 2
    bx0, by0, bx1, by1 = b.x - b.w / 2, b.y - b.h / 2, b.x + b.w / 2, b.y + b.h / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def test_spatial_distance_examples():
    a = BBox(0.5, 0.5, 0.2, 0.2)
    assert spatial_distance(a, a) == 0.0
    assert spatial_distance(a, BBox(0.6, 0.5, 0.2, 0.3)) == pytest.approx(0.1)


def test_spatial_distance_matches_componentwise_max(rng):
    for _ in range(1000):
        a, b = BBox(*rng.random(4)), BBox(*rng.random(4))
        want = max(abs(a.x - b.x), abs(a.y - b.y), abs(a.w - b.w), abs(a.h - b.h))
        assert spatial_distance(a, b) == want


def test_loc_score_examples():
    a = BBox(0.2, 0.3, 0.1, 0.1)
    assert loc_score_boxes(a, a) == 0.0
    assert loc_score_boxes(a, BBox(0.3, 0.3, 0.1, 0.2)) == pytest.approx(-0.2)


def test_iou_examples():
    a = BBox(0.5, 0.5, 0.2, 0.2)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(0.1, 0.1, 0.1, 0.1)) == 0.0
    assert iou(a, BBox(0.6, 0.5, 0.2, 0.2)) == pytest.approx(1 / 3)


def test_degenerate_boxes_have_zero_iou():
    z = BBox(0.5, 0.5, 0.0, 0.2)
    assert iou(z, z) == 0.0
    assert iou(z, BBox(0.5, 0.5, 0.2, 0.2)) == 0.0


@given(boxes, boxes)
def test_distance_ordering_and_symmetry(a, b):
    d = spatial_distance(a, b)
    assert d == spatial_distance(b, a) and d >= 0
    assert loc_score_boxes(a, b) == loc_score_boxes(b, a)
    assert -loc_score_boxes(a, b) >= d


@given(boxes, boxes)
def test_iou_matches_corner_oracle(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou_corners(a, b), abs=1e-12)
    assert v == iou(b, a)


@given(st.floats(0.3, 0.7), st.floats(0.3, 0.7), st.floats(0.01, 0.3), st.floats(0.01, 0.3),
       st.floats(0.3, 0.7), st.floats(0.3, 0.7), st.floats(0.01, 0.3), st.floats(0.01, 0.3), shift, shift)
def test_translation_invariance(x1, y1, w1, h1, x2, y2, w2, h2, dx, dy):
    a, b = BBox(x1, y1, w1, h1), BBox(x2, y2, w2, h2)
    a2, b2 = BBox(x1 + dx, y1 + dy, w1, h1), BBox(x2 + dx, y2 + dy, w2, h2)
    assert spatial_distance(a2, b2) == pytest.approx(spatial_distance(a, b), abs=1e-12)
    assert loc_score_boxes(a2, b2) == pytest.approx(loc_score_boxes(a, b), abs=1e-12)


@given(sized, sized, st.integers(100, 4000), st.integers(100, 4000))
def test_iou_survives_pixel_round_trip(a, b, fw, fh):
    ra, rb = a.to_pixels(fw, fh).to_bbox(), b.to_pixels(fw, fh).to_bbox()
    assert iou(ra, rb) == pytest.approx(iou(a, b), abs=1e-6)


def test_clamping_counts_events():
    before = clamp_events()
    b = BBox(1.2, -0.1, 0.5, 0.5)
    assert (b.x, b.y) == (1.0, 0.0)
    assert clamp_events() == before + 1
    BBox(0.5, 0.5, 0.5, 0.5)
    assert clamp_events() == before + 1


def test_non_finite_box_rejected():
    with pytest.raises(ValueError):
        BBox(math.nan, 0.5, 0.1, 0.1)


def test_pixel_box_orders_corners():
    with pytest.raises(ValueError):
        PixelBox(10, 10, 5, 20, 100, 100)


def test_vectorized_helpers_match_scalars(rng):
    a, b = rng.random((7, 4)), rng.random((5, 4))
    linf, l1 = linf_matrix(a, b), l1_matrix(a, b)
    ious = iou_array(a[:5], b)
    for i in range(7):
        for j in range(5):
            ba, bb = BBox(*a[i]), BBox(*b[j])
            assert linf[i, j] == spatial_distance(ba, bb)
            assert -l1[i, j] == loc_score_boxes(ba, bb)
    for i in range(5):
        assert ious[i] == pytest.approx(iou(BBox(*a[i]), BBox(*b[i])), abs=1e-15)


def test_frame_round_trip_and_validation(rng):
    dets = [Detection(3, BBox(*rng.random(4)), float(rng.random()), rng.normal(size=4), 10 + i, i)
            for i in range(3)]
    f = Frame.from_detections(3, dets)
    assert len(f) == 3 and f.dim == 4
    back = f.detections()
    assert [d.det_id for d in back] == [10, 11, 12]
    assert np.array_equal(back[1].embedding, dets[1].embedding)
    with pytest.raises(ValueError):
        Frame.from_detections(3, dets + [dets[0]])  # duplicate det_id
    assert len(Frame.empty(5, 4)) == 0
