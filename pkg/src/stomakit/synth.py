"""Synthetic stomatal scenes with exact ground truth, and pseudo-detections.

Each stoma is a filled rotated ellipse (dark guard cells around a lighter
pore). The tight rotated bounding box of an ellipse with semi-axes ``a, b`` is
exactly ``2a x 2b`` at the ellipse's angle, so the truth boxes carry the
generator's dimensions without rasterisation error.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .annot import Label, LabeledBox, LabeledImage, RotatedBox, write_detections, write_rolabelimg
from .errors import BadParams, PackingInfeasible

MAX_ATTEMPTS = 10_000

BACKGROUND = 0.55
GUARD_CELL = 0.25
PORE = 0.8


@dataclass(frozen=True)
class SceneParams:
    image_w: int = 512
    image_h: int = 512
    n_stomata: int = 8
    len_range_um: tuple[float, float] = (22.0, 28.0)
    wid_range_um: tuple[float, float] = (14.0, 20.0)
    aperture_scale_range: tuple[float, float] = (0.4, 0.7)
    min_separation_px: float = 0.0
    background_noise_sigma: float = 0.02
    seed: int = 0
    pixels_per_100um: float = 224.0

    def __post_init__(self):
        for name in ("len_range_um", "wid_range_um", "aperture_scale_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise BadParams(f"{name} must be positive and ordered, got {(lo, hi)}")
        lo, hi = self.aperture_scale_range
        if not hi < 1:
            raise BadParams("aperture scale must lie in (0, 1)")
        if self.image_w < 1 or self.image_h < 1 or self.n_stomata < 0:
            raise BadParams("image size must be positive and n_stomata non-negative")


@dataclass
class Scene:
    image: np.ndarray
    truth: LabeledImage
    # per stoma: (length_um, width_um, aperture_scale)
    stomata_um: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def mean_stoma_um(self) -> tuple[float, float]:
        if not self.stomata_um:
            return math.nan, math.nan
        a = np.array(self.stomata_um)
        return float(a[:, 0].mean()), float(a[:, 1].mean())

    @property
    def mean_aperture_um(self) -> tuple[float, float]:
        if not self.stomata_um:
            return math.nan, math.nan
        a = np.array(self.stomata_um)
        return float((a[:, 0] * a[:, 2]).mean()), float((a[:, 1] * a[:, 2]).mean())


def _background(rng: np.random.Generator, p: SceneParams) -> np.ndarray:
    texture = ndimage.gaussian_filter(rng.normal(size=(p.image_h, p.image_w)), 6.0, mode="wrap")
    sd = texture.std()
    if sd > 0:
        texture /= sd
    img = BACKGROUND + 0.05 * texture
    if p.background_noise_sigma > 0:
        img += rng.normal(0.0, p.background_noise_sigma, img.shape)
    return img


def _paint_ellipse(img: np.ndarray, cx, cy, a, b, angle, value):
    r = math.ceil(max(a, b)) + 1
    y0, y1 = max(0, int(cy - r)), min(img.shape[0], int(cy + r) + 1)
    x0, x1 = max(0, int(cx - r)), min(img.shape[1], int(cx + r) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    c, s = math.cos(angle), math.sin(angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    img[y0:y1, x0:x1][inside] = value


def generate_scene(p: SceneParams, image_id: str = "scene_000", stream: int = 0) -> Scene:
    """Render one scene; ``(p.seed, stream)`` fully determines the output."""
    rng = np.random.default_rng([p.seed, stream])
    px_per_um = p.pixels_per_100um / 100.0

    placed = []
    attempts = 0
    for _ in range(p.n_stomata):
        length = rng.uniform(*p.len_range_um)
        width = min(rng.uniform(*p.wid_range_um), length)
        scale = rng.uniform(*p.aperture_scale_range)
        angle = rng.uniform(0.0, math.pi)
        lp, wp = length * px_per_um, width * px_per_um
        radius = 0.5 * math.hypot(lp, wp)
        while True:
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise PackingInfeasible(
                    f"could not place {p.n_stomata} stomata in {p.image_w}x{p.image_h} "
                    f"within {MAX_ATTEMPTS} attempts"
                )
            cx = rng.uniform(radius, p.image_w - radius) if p.image_w > 2 * radius else None
            cy = rng.uniform(radius, p.image_h - radius) if p.image_h > 2 * radius else None
            if cx is None or cy is None:
                continue
            ok = all(
                math.hypot(cx - q[0], cy - q[1]) >= max(p.min_separation_px, radius + q[5])
                for q in placed
            )
            if ok:
                placed.append((cx, cy, lp, wp, angle, radius, length, width, scale))
                break

    img = _background(rng, p)
    boxes = []
    dims = []
    for cx, cy, lp, wp, angle, _, length, width, scale in placed:
        _paint_ellipse(img, cx, cy, lp / 2, wp / 2, angle, GUARD_CELL)
        _paint_ellipse(img, cx, cy, scale * lp / 2, scale * wp / 2, angle, PORE)
        boxes.append(LabeledBox(RotatedBox(cx, cy, lp, wp, angle), Label.STOMA))
        boxes.append(LabeledBox(RotatedBox(cx, cy, scale * lp, scale * wp, angle), Label.APERTURE))
        dims.append((length, width, scale))
    img = np.clip(img, 0.0, 1.0)
    return Scene(img, LabeledImage(image_id, p.image_w, p.image_h, tuple(boxes)), dims)


def generate_scenes(n: int, p: SceneParams, prefix: str = "scene") -> list[Scene]:
    return [generate_scene(p, f"{prefix}_{k:03d}", stream=k) for k in range(n)]


def perturb(truth: LabeledImage, jitter_px: float = 0.0, angle_jitter_rad: float = 0.0,
            fp_rate: float = 0.0, fn_rate: float = 0.0, seed: int = 0) -> LabeledImage:
    """Turn ground truth into scored pseudo-detections.

    Kept boxes are jittered and scored ``U(0.7, 1.0)``; each is dropped with
    probability ``fn_rate``; ``round(fp_rate * n)`` background boxes scored
    ``U(0.1, 0.6)`` are added. Zero jitter leaves geometry untouched.
    """
    if not (0 <= fp_rate < 1 and 0 <= fn_rate < 1):
        raise BadParams("fp_rate and fn_rate must lie in [0, 1)")
    if jitter_px < 0 or angle_jitter_rad < 0:
        raise BadParams("jitter must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for lb in truth.boxes:
        u_drop, dx, dy, da, score = rng.uniform(size=5)
        if u_drop < fn_rate:
            continue
        b = lb.box
        if jitter_px or angle_jitter_rad:
            b = RotatedBox(
                min(max(b.cx + jitter_px * (2 * dx - 1), 0.0), truth.width),
                min(max(b.cy + jitter_px * (2 * dy - 1), 0.0), truth.height),
                b.w, b.h, b.angle + angle_jitter_rad * (2 * da - 1),
            )
        out.append(LabeledBox(b, lb.label, 0.7 + 0.3 * score))

    n_fp = int(round(fp_rate * len(truth.boxes)))
    stomata = [lb.box for lb in truth.boxes if lb.label is Label.STOMA]
    for _ in range(n_fp):
        label = Label.STOMA if rng.uniform() < 0.5 else Label.APERTURE
        same = [lb.box for lb in truth.boxes if lb.label is label]
        tmpl = same[int(rng.integers(len(same)))] if same else RotatedBox(0, 0, 60, 30, 0)
        for _try in range(100):
            cx, cy = rng.uniform(0, truth.width), rng.uniform(0, truth.height)
            if not any(s.contains(cx, cy, strict=False) for s in stomata):
                break
        box = RotatedBox(cx, cy, tmpl.w, tmpl.h, rng.uniform(0, math.pi))
        out.append(LabeledBox(box, label, float(rng.uniform(0.1, 0.6))))
    return LabeledImage(truth.image_id, truth.width, truth.height, tuple(out))


def write_scene_set(out_dir, scenes: Sequence[Scene], detections: Optional[Sequence[LabeledImage]] = None,
                    params: Optional[SceneParams] = None, image_format: str = "pgm") -> Path:
    """Write images, RolabelImg XML truth, ``det.json`` and ``truth.json``.

    ``truth.json`` lists, per scene, the generator's mean stoma and aperture
    dimensions in micrometres.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .quality import save_gray

    summary = []
    for sc in scenes:
        iid = sc.truth.image_id
        save_gray(out / f"{iid}.{image_format}", sc.image)
        (out / f"{iid}.xml").write_text(write_rolabelimg(sc.truth, filename=f"{iid}.{image_format}"), encoding="utf-8")
        sl, sw = sc.mean_stoma_um
        al, aw = sc.mean_aperture_um
        summary.append({
            "image_id": iid, "n_stomata": len(sc.stomata_um),
            "stoma_len_um": sl, "stoma_wid_um": sw, "aperture_len_um": al, "aperture_wid_um": aw,
        })
    if detections is not None:
        (out / "det.json").write_text(write_detections(detections), encoding="utf-8")
    doc = {"scenes": summary}
    if params is not None:
        doc["params"] = asdict(params)
    (out / "truth.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out
