"""Rotated-box annotations: data types, RolabelImg XML, detection JSON, report CSV.

Angles are radians, counter-clockwise from the image x-axis. Every
:class:`RotatedBox` is stored in canonical form: ``w >= h`` (``w`` is the long
axis) and ``angle`` in ``[0, pi)``, or ``[0, pi/2)`` for squares. Two
parameterisations of the same rectangle therefore compare equal.
"""
from __future__ import annotations

import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import PurePath
from typing import Iterable, Optional, Sequence

from .errors import (
    CenterOutOfBounds,
    MalformedJson,
    MalformedXml,
    MissingField,
    NonPositiveExtent,
    ScoreOutOfRange,
    UnknownLabel,
)


class Label(str, Enum):
    STOMA = "stoma"
    APERTURE = "aperture"

    @classmethod
    def parse(cls, text) -> "Label":
        if isinstance(text, Label):
            return text
        key = str(text).strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise UnknownLabel(f"unknown label {text!r}; expected 'stoma' or 'aperture'")


def _canonical_angle(w: float, h: float, angle: float) -> tuple[float, float, float]:
    if h > w:
        w, h = h, w
        angle = angle + math.pi / 2
    period = math.pi / 2 if w == h else math.pi
    a = math.fmod(angle, period)
    if a < 0:
        a += period
    if a >= period:  # -tiny + period rounds up to period
        a = 0.0
    return w, h, a


@dataclass(frozen=True)
class RotatedBox:
    """Oriented rectangle in pixel coordinates, canonicalised on construction."""

    cx: float
    cy: float
    w: float
    h: float
    angle: float = 0.0

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h, self.angle)
        if not all(math.isfinite(float(v)) for v in vals):
            raise NonPositiveExtent(f"non-finite box parameters {vals}")
        if not (self.w > 0 and self.h > 0):
            raise NonPositiveExtent(f"box extents must be positive, got w={self.w}, h={self.h}")
        w, h, a = _canonical_angle(float(self.w), float(self.h), float(self.angle))
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "angle", a)

    @property
    def length(self) -> float:
        return self.w

    @property
    def width(self) -> float:
        return self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.angle)

    def contains(self, x: float, y: float, strict: bool = True) -> bool:
        """Point-in-rectangle test; ``strict`` excludes the boundary."""
        dx, dy = x - self.cx, y - self.cy
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        if strict:
            return abs(u) < self.w / 2 and abs(v) < self.h / 2
        return abs(u) <= self.w / 2 and abs(v) <= self.h / 2


def same_rect(a: RotatedBox, b: RotatedBox, tol: float = 1e-9) -> bool:
    """True if ``a`` and ``b`` describe the same rectangle within ``tol``."""
    if max(abs(a.cx - b.cx), abs(a.cy - b.cy), abs(a.w - b.w), abs(a.h - b.h)) > tol:
        return False
    period = math.pi / 2 if abs(a.w - a.h) <= tol else math.pi
    d = abs(a.angle - b.angle) % period
    return min(d, period - d) <= tol


@dataclass(frozen=True)
class LabeledBox:
    box: RotatedBox
    label: Label
    score: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "label", Label.parse(self.label))
        if self.score is not None:
            s = float(self.score)
            if not (0.0 <= s <= 1.0):
                raise ScoreOutOfRange(f"score {s} outside [0, 1]")
            object.__setattr__(self, "score", s)

    @property
    def is_detection(self) -> bool:
        return self.score is not None


@dataclass(frozen=True)
class LabeledImage:
    image_id: str
    width: int
    height: int
    boxes: tuple[LabeledBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not (self.width > 0 and self.height > 0):
            raise NonPositiveExtent(f"image size must be positive, got {self.width}x{self.height}")
        for lb in self.boxes:
            b = lb.box
            if not (0 <= b.cx <= self.width and 0 <= b.cy <= self.height):
                raise CenterOutOfBounds(
                    f"{self.image_id}: box center ({b.cx}, {b.cy}) outside "
                    f"[0,{self.width}]x[0,{self.height}]"
                )

    def of_label(self, label) -> list[LabeledBox]:
        label = Label.parse(label)
        return [b for b in self.boxes if b.label is label]


def _to_radians(angle: float, unit: str) -> float:
    if unit in ("rad", "radian", "radians"):
        return angle
    if unit in ("deg", "degree", "degrees"):
        return math.radians(angle)
    raise ValueError(f"angle unit must be 'rad' or 'deg', got {unit!r}")


def _from_radians(angle: float, unit: str) -> float:
    return angle if unit.startswith("rad") else math.degrees(angle)


# ---------------------------------------------------------------- XML


def _child_float(node: ET.Element, tag: str, where: str) -> float:
    child = node.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise MissingField(f"{where}: missing <{tag}>")
    try:
        return float(child.text)
    except ValueError:
        raise MalformedXml(f"{where}: <{tag}> is not a number: {child.text!r}") from None


def parse_rolabelimg(xml_text: str, image_id: Optional[str] = None, angle_unit: str = "rad") -> LabeledImage:
    """Parse one RolabelImg XML document.

    Objects carrying an axis-aligned ``bndbox`` instead of ``robndbox`` are
    read as rotated boxes with zero angle.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None

    if image_id is None:
        fn = root.findtext("filename")
        image_id = PurePath(fn.strip()).stem if fn and fn.strip() else ""
    size = root.find("size")
    if size is None:
        raise MissingField(f"{image_id}: missing <size>")
    width = _child_float(size, "width", image_id)
    height = _child_float(size, "height", image_id)

    boxes = []
    for k, obj in enumerate(root.iter("object")):
        where = f"{image_id} object {k}"
        name = obj.findtext("name")
        if name is None:
            raise MissingField(f"{where}: missing <name>")
        label = Label.parse(name)
        rb = obj.find("robndbox")
        if rb is not None:
            cx, cy, w, h = (_child_float(rb, t, where) for t in ("cx", "cy", "w", "h"))
            angle = _to_radians(_child_float(rb, "angle", where), angle_unit)
        else:
            bb = obj.find("bndbox")
            if bb is None:
                raise MissingField(f"{where}: missing <robndbox>")
            x0, y0, x1, y1 = (_child_float(bb, t, where) for t in ("xmin", "ymin", "xmax", "ymax"))
            cx, cy, w, h, angle = (x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, 0.0
        if not (w > 0 and h > 0):
            raise NonPositiveExtent(f"{where}: w={w}, h={h}")
        boxes.append(LabeledBox(RotatedBox(cx, cy, w, h, angle), label))

    return LabeledImage(image_id, _as_int(width), _as_int(height), tuple(boxes))


def _as_int(v: float):
    return int(v) if float(v).is_integer() else v


def write_rolabelimg(image: LabeledImage, filename: Optional[str] = None, angle_unit: str = "rad") -> str:
    """Serialise ground-truth boxes to RolabelImg XML (scores are not stored)."""
    root = ET.Element("annotation", verified="no")
    ET.SubElement(root, "folder").text = ""
    ET.SubElement(root, "filename").text = filename or image.image_id
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(image.width)
    ET.SubElement(size, "height").text = str(image.height)
    ET.SubElement(size, "depth").text = "1"
    ET.SubElement(root, "segmented").text = "0"
    for lb in image.boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "type").text = "robndbox"
        ET.SubElement(obj, "name").text = lb.label.value
        ET.SubElement(obj, "pose").text = "Unspecified"
        ET.SubElement(obj, "truncated").text = "0"
        ET.SubElement(obj, "difficult").text = "0"
        rb = ET.SubElement(obj, "robndbox")
        b = lb.box
        for tag, val in (("cx", b.cx), ("cy", b.cy), ("w", b.w), ("h", b.h),
                         ("angle", _from_radians(b.angle, angle_unit))):
            ET.SubElement(rb, tag).text = repr(float(val))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


# ---------------------------------------------------------------- JSON

_DET_KEYS = ("label", "score", "cx", "cy", "w", "h", "angle")


def parse_detections(json_text: str, angle_unit: str = "rad") -> list[LabeledImage]:
    """Parse the detection side format.

    Schema: ``[{"image_id", "width", "height", "detections": [{"label",
    "score", "cx", "cy", "w", "h", "angle"}, ...]}, ...]``.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from None
    if not isinstance(doc, list):
        raise MalformedJson("top level must be an array of images")

    out = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise MalformedJson(f"entry {i} is not an object")
        for key in ("image_id", "width", "height"):
            if key not in entry:
                raise MissingField(f"entry {i}: missing {key!r}")
        boxes = []
        for j, d in enumerate(entry.get("detections", [])):
            where = f"{entry['image_id']} detection {j}"
            if not isinstance(d, dict):
                raise MalformedJson(f"{where}: not an object")
            missing = [k for k in _DET_KEYS if k not in d]
            if missing:
                raise MissingField(f"{where}: missing {missing}")
            try:
                cx, cy, w, h, angle, score = (float(d[k]) for k in ("cx", "cy", "w", "h", "angle", "score"))
            except (TypeError, ValueError):
                raise MalformedJson(f"{where}: non-numeric field") from None
            if not (0.0 <= score <= 1.0):
                raise ScoreOutOfRange(f"{where}: score {score}")
            if not (w > 0 and h > 0):
                raise NonPositiveExtent(f"{where}: w={w}, h={h}")
            box = RotatedBox(cx, cy, w, h, _to_radians(angle, angle_unit))
            boxes.append(LabeledBox(box, Label.parse(d["label"]), score))
        out.append(LabeledImage(str(entry["image_id"]), entry["width"], entry["height"], tuple(boxes)))
    return out


def write_detections(images: Iterable[LabeledImage], angle_unit: str = "rad") -> str:
    """Serialise scored boxes to the detection JSON format (sorted by image_id)."""
    doc = []
    for im in sorted(images, key=lambda im: im.image_id):
        dets = []
        for lb in im.boxes:
            b = lb.box
            dets.append({
                "label": lb.label.value,
                "score": 1.0 if lb.score is None else lb.score,
                "cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h,
                "angle": _from_radians(b.angle, angle_unit),
            })
        doc.append({"image_id": im.image_id, "width": im.width, "height": im.height, "detections": dets})
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- CSV

# report "height" is the short axis and "width" the long axis: 20.00 / 24.60
# is the only reading compatible with an aspect ratio of ~0.82.
REPORT_COLUMNS: tuple[tuple[str, str], ...] = (
    ("stomata average height (um)", "stoma_wid_um"),
    ("stomata average width (um)", "stoma_len_um"),
    ("stomata aspect ratio", "stoma_aspect"),
    ("aperture average height (um)", "aperture_wid_um"),
    ("aperture average width (um)", "aperture_len_um"),
    ("aperture aspect ratio", "aperture_aspect"),
    ("stomata density (stomata per mm2)", "density_per_mm2"),
    ("conductance (mol m-2 s-1)", "gsmax_mol_m2_s"),
)

_ROUNDING = {"half_up": ROUND_HALF_UP, "half_even": ROUND_HALF_EVEN}


def format_2dp(value: float, rounding: str = "half_up") -> str:
    """Two-decimal formatting on the shortest decimal repr of ``value``.

    NaN (an undefined trait) is written as an empty field.
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    q = Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=_ROUNDING[rounding])
    if q == 0:
        q = abs(q)
    return f"{q:.2f}"


def write_report_csv(records: Sequence, rounding: str = "half_up") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([col for col, _ in REPORT_COLUMNS])
    for rec in records:
        writer.writerow([format_2dp(getattr(rec, attr), rounding) for _, attr in REPORT_COLUMNS])
    return buf.getvalue()


def read_report_csv(csv_text: str) -> list:
    """Inverse of :func:`write_report_csv`; fields absent from the CSV are NaN."""
    from .phenotype import PhenotypeRecord

    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingField("empty report") from None
    expected = [col for col, _ in REPORT_COLUMNS]
    if header != expected:
        raise MissingField(f"unexpected report header {header}")
    out = []
    for row in reader:
        if not row:
            continue
        values = {attr: (float(cell) if cell else math.nan) for (_, attr), cell in zip(REPORT_COLUMNS, row)}
        out.append(PhenotypeRecord(**values))
    return out
