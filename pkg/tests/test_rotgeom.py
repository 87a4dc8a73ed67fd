import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import raster_iou
from stomakit.annot import RotatedBox
from stomakit.rotgeom import area, clip_convex, corners, rigid_transform, rotated_iou

SQ = math.sqrt(2)


def as_set(p, nd=9):
    return {(round(x, nd) + 0.0, round(y, nd) + 0.0) for x, y in p}


@pytest.mark.parametrize("box, expected", [
    ((0, 0, 4, 2, 0), {(2, 1), (-2, 1), (-2, -1), (2, -1)}),
    ((0, 0, 4, 2, math.pi / 2), {(1, 2), (-1, 2), (-1, -2), (1, -2)}),
    ((0, 0, 2 * SQ, 2 * SQ, math.pi / 4), {(0, 2), (-2, 0), (0, -2), (2, 0)}),
])
def test_corners(box, expected):
    p = corners(RotatedBox(*box))
    assert p.shape == (4, 2)
    assert as_set(p) == {(float(x), float(y)) for x, y in expected}


def test_corners_ccw_and_centroid():
    b = RotatedBox(3.5, -2.0, 7, 3, 1.1)
    p = corners(b)
    x, y = p[:, 0], p[:, 1]
    signed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert signed > 0
    assert np.allclose(p.mean(axis=0), [3.5, -2.0], atol=1e-9)


def square(x0, y0, s):
    return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], dtype=float)


def test_clip_self():
    p = corners(RotatedBox(1, 2, 5, 3, 0.4))
    q = clip_convex(p, p)
    assert area(q) == pytest.approx(15.0, abs=1e-9)
    assert as_set(q, 7) == as_set(p, 7)


def test_clip_disjoint():
    assert len(clip_convex(square(0, 0, 1), square(2, 2, 1))) == 0


def test_clip_overlap():
    q = clip_convex(square(0, 0, 2), square(1, 1, 2))
    assert area(q) == pytest.approx(1.0)
    assert as_set(q) == {(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)}


def test_area_cases():
    assert area(square(0, 0, 1)) == 1.0
    assert area(np.zeros((0, 2))) == 0.0
    assert area(np.array([[0, 0], [2, 0], [0, 2]], dtype=float)) == 2.0


def test_iou_examples():
    a = RotatedBox(0, 0, 4, 2, 0)
    assert rotated_iou(a, a) == 1.0
    assert rotated_iou(a, RotatedBox(1, 0, 4, 2, 0)) == pytest.approx(0.6, abs=1e-12)
    assert rotated_iou(a, RotatedBox(0, 0, 2, 4, math.pi / 2)) == pytest.approx(1.0, abs=1e-12)


def test_iou_touching_and_disjoint():
    a = RotatedBox(0, 0, 2, 2, 0)
    assert rotated_iou(a, RotatedBox(2, 0, 2, 2, 0)) == 0.0
    assert rotated_iou(a, RotatedBox(10, 10, 2, 2, 0.3)) == 0.0


def test_iou_contained():
    outer = RotatedBox(0, 0, 10, 10, 0.3)
    inner = RotatedBox(0.5, -0.5, 2, 1, 1.2)
    assert rotated_iou(outer, inner) == pytest.approx(2 / 100, abs=1e-12)


coord = st.floats(-20, 20)
size = st.floats(0.5, 15)
angle = st.floats(0, math.pi)
box = st.builds(RotatedBox, coord, coord, size, size, angle)


@given(box, box)
def test_iou_symmetric_bounded(a, b):
    ab, ba = rotated_iou(a, b), rotated_iou(b, a)
    assert ab == pytest.approx(ba, abs=1e-9)
    assert 0.0 <= ab <= 1.0


@given(box, box, st.floats(-math.pi, math.pi), coord, coord)
def test_iou_rigid_motion_invariant(a, b, rot, tx, ty):
    before = rotated_iou(a, b)
    after = rotated_iou(rigid_transform(a, rot, tx, ty), rigid_transform(b, rot, tx, ty))
    assert abs(before - after) < 1e-9


@given(box)
def test_area_of_corners(b):
    assert area(corners(b)) == pytest.approx(b.w * b.h, rel=1e-12, abs=1e-9)


@given(box)
def test_iou_self_is_one(b):
    assert rotated_iou(b, b) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(box, box)
def test_iou_matches_rasterisation(a, b):
    assert abs(rotated_iou(a, b) - raster_iou(a.as_tuple(), b.as_tuple(), n=400)) <= 2e-2
