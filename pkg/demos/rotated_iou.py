"""
Overlap of rotated boxes
========================

Two rectangles, clipped against each other as convex polygons.
"""

import math

import numpy as np

from stomakit import RotatedBox, rotated_iou
from stomakit.rotgeom import clip_convex, corners, area

a = RotatedBox(0, 0, 4, 2, 0)
b = RotatedBox(1, 0, 4, 2, 0)
print("shifted by one unit:", rotated_iou(a, b))   # 6 / 10

# the same rectangle described with swapped sides and a quarter turn
c = RotatedBox(0, 0, 2, 4, math.pi / 2)
print("swapped description:", c, rotated_iou(a, c))

# the intersection polygon itself
d = RotatedBox(0.5, 0.3, 4, 2, math.pi / 6)
poly = clip_convex(corners(a), corners(d))
print("intersection vertices:\n", np.round(poly, 3))
print("intersection area:", area(poly), "IoU:", rotated_iou(a, d))

# IoU against a turning copy
for deg in (0, 15, 30, 45, 60, 90):
    print(f"{deg:3d} deg  IoU {rotated_iou(a, RotatedBox(0, 0, 4, 2, math.radians(deg))):.4f}")
