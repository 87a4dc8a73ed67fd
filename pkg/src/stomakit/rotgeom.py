"""Exact geometry of rotated rectangles.

Polygons are ``(n, 2)`` float arrays of counter-clockwise vertices; the empty
polygon has shape ``(0, 2)``.
"""
from __future__ import annotations

import math

import numpy as np

from .annot import RotatedBox

# point-side tolerance (distance units) for the clipper
EPS = 1e-12

EMPTY = np.zeros((0, 2))


def corners(b: RotatedBox) -> np.ndarray:
    """Four CCW corners of ``b``, starting at the (+w/2, +h/2) local corner."""
    c, s = math.cos(b.angle), math.sin(b.angle)
    hw, hh = b.w / 2, b.h / 2
    local = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([b.cx, b.cy])


def signed_area(p: np.ndarray) -> float:
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area(p: np.ndarray) -> float:
    """Shoelace area; 0 for the empty polygon."""
    return abs(signed_area(p))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of a convex polygon by a convex CCW polygon.

    Collinear and duplicate vertices are kept; they do not affect the area.
    """
    out = [tuple(v) for v in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    n = len(clip)
    if len(out) < 3 or n < 3:
        return EMPTY.copy()

    for i in range(n):
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        elen = math.hypot(ex, ey)
        if elen == 0.0:
            continue
        inp, out = out, []
        if not inp:
            break
        # signed distance to the clip edge, positive on the inner (left) side
        dist = [(ex * (py - ay) - ey * (px - ax)) / elen for px, py in inp]
        m = len(inp)
        for j in range(m):
            cur, prev = inp[j], inp[j - 1]
            dc, dp = dist[j], dist[j - 1]
            cur_in, prev_in = dc >= -EPS, dp >= -EPS
            if cur_in:
                if not prev_in:
                    out.append(_cut(prev, cur, dp, dc))
                out.append(cur)
            elif prev_in:
                out.append(_cut(prev, cur, dp, dc))

    if len(out) < 3:
        return EMPTY.copy()
    return np.array(out)


def _cut(p, q, dp, dq):
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def intersection_area(a: RotatedBox, b: RotatedBox) -> float:
    # disjoint circumscribed circles: skip clipping
    ra = 0.5 * math.hypot(a.w, a.h)
    rb = 0.5 * math.hypot(b.w, b.h)
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb:
        return 0.0
    return area(clip_convex(corners(a), corners(b)))


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of two rotated rectangles, in ``[0, 1]``."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0 or inter <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def iou_matrix(a: list[RotatedBox], b: list[RotatedBox]) -> np.ndarray:
    out = np.zeros((len(a), len(b)))
    for i, bi in enumerate(a):
        for j, bj in enumerate(b):
            out[i, j] = rotated_iou(bi, bj)
    return out


def rigid_transform(b: RotatedBox, rotation: float, tx: float = 0.0, ty: float = 0.0) -> RotatedBox:
    """Rotate ``b`` about the origin by ``rotation`` radians, then translate."""
    c, s = math.cos(rotation), math.sin(rotation)
    return RotatedBox(c * b.cx - s * b.cy + tx, s * b.cx + c * b.cy + ty, b.w, b.h, b.angle + rotation)
