"""Physical phenotypes from rotated boxes.

Lengths are reported in micrometres, densities per mm^2 and conductance in
mol m^-2 s^-1. Length is the long box axis and width the short one.

Anatomical maximum conductance::

    gamma_max = pi * l**2 / 4
    G = f * D * gamma_max / (1.6 * v * (w + pi/2 * sqrt(gamma_max / pi)))

with SI units inside (D in m^-2, l and w in m).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .annot import Label, LabeledImage, RotatedBox
from .errors import BadParams, NoStomata, NonPositiveInput


@dataclass(frozen=True)
class Calibration:
    pixels_per_100um: float = 224.0

    def __post_init__(self):
        if not (math.isfinite(self.pixels_per_100um) and self.pixels_per_100um > 0):
            raise BadParams(f"pixels_per_100um must be positive, got {self.pixels_per_100um}")

    @property
    def um_per_px(self) -> float:
        return 100.0 / self.pixels_per_100um


GAMMA_LENGTHS = ("aperture", "stoma", "aperture-short", "stoma-short")
GUARD_WIDTH_RULES = ("derived", "aperture-length")


@dataclass(frozen=True)
class ConductanceParams:
    """Constants and symbol-mapping choices for the conductance model.

    ``gamma_length`` picks which mean axis feeds ``l`` of gamma_max:
    ``"aperture"`` (pore long axis, default), ``"stoma"`` (stoma long axis),
    or the ``-short`` variants. ``guard_width`` is ``"derived"`` (half the
    difference between stoma and aperture short axes), ``"aperture-length"``
    (mean aperture long axis), or a constant in micrometres.
    """

    f_diff: float = 2.49e-5
    v_molar: float = 0.0224
    gamma_length: str = "aperture"
    guard_width: Union[str, float] = "derived"
    pi: float = math.pi

    def __post_init__(self):
        if not (self.f_diff > 0 and self.v_molar > 0 and self.pi > 0):
            raise BadParams("f_diff, v_molar and pi must be positive")
        if self.gamma_length not in GAMMA_LENGTHS:
            raise BadParams(f"gamma_length must be one of {GAMMA_LENGTHS}")
        if isinstance(self.guard_width, str):
            if self.guard_width not in GUARD_WIDTH_RULES:
                raise BadParams(f"guard_width must be one of {GUARD_WIDTH_RULES} or a number")
        elif not self.guard_width > 0:
            raise BadParams("constant guard width must be positive")

    @classmethod
    def report_fit(cls) -> "ConductanceParams":
        """Mapping fitted to the reference report's conductance column (see interpretation_search)."""
        return cls(gamma_length="aperture-short", guard_width="aperture-length")


class BoxTraits(NamedTuple):
    length_um: float
    width_um: float
    aspect: float
    area_um2: float


def box_to_traits(b: RotatedBox, cal: Calibration = Calibration(), area_rule: str = "rectangle") -> BoxTraits:
    """Long/short axis in um, short/long aspect ratio and area.

    ``area_rule="rectangle"`` gives ``w * l``; ``"ellipse"`` gives the
    inscribed ellipse ``pi * w * l / 4``.
    """
    k = cal.um_per_px
    length = max(b.w, b.h) * k
    width = min(b.w, b.h) * k
    if area_rule == "rectangle":
        a = length * width
    elif area_rule == "ellipse":
        a = math.pi * length * width / 4
    else:
        raise BadParams(f"area_rule must be 'rectangle' or 'ellipse', got {area_rule!r}")
    return BoxTraits(length, width, width / length, a)


def image_area_mm2(image_w_px: float, image_h_px: float, cal: Calibration = Calibration()) -> float:
    mm_per_px = cal.um_per_px / 1000.0
    return (image_w_px * mm_per_px) * (image_h_px * mm_per_px)


def density(n_stomata: int, image_w_px: float, image_h_px: float, cal: Calibration = Calibration()) -> float:
    """Stomata per mm^2 of imaged leaf."""
    if not (image_w_px > 0 and image_h_px > 0):
        raise BadParams("image dimensions must be positive")
    return n_stomata / image_area_mm2(image_w_px, image_h_px, cal)


def gamma_max(l_stoma_um: float, pi: float = math.pi) -> float:
    """Maximum pore area in m^2 for a pore of length ``l_stoma_um``."""
    if not l_stoma_um > 0:
        raise NonPositiveInput(f"length must be positive, got {l_stoma_um}")
    l = l_stoma_um * 1e-6
    return pi * l * l / 4


def gsmax(density_per_mm2: float, l_stoma_um: float, guard_width_um: float,
          params: ConductanceParams = ConductanceParams()) -> float:
    """Anatomical maximum stomatal conductance (mol m^-2 s^-1)."""
    for name, v in (("density", density_per_mm2), ("length", l_stoma_um), ("guard width", guard_width_um)):
        if not (v > 0 and math.isfinite(v)):
            raise NonPositiveInput(f"{name} must be positive, got {v}")
    pi = params.pi
    g = gamma_max(l_stoma_um, pi)
    d_m2 = density_per_mm2 * 1e6
    w_m = guard_width_um * 1e-6
    return params.f_diff * d_m2 * g / (1.6 * params.v_molar * (w_m + pi / 2 * math.sqrt(g / pi)))


def opening_ratio(stomata: Sequence[RotatedBox], apertures: Sequence[RotatedBox]) -> float:
    """Fraction of stomata with at least one aperture centre strictly inside."""
    if len(stomata) == 0:
        raise NoStomata("opening ratio needs at least one stoma")
    n_open = sum(any(s.contains(a.cx, a.cy) for a in apertures) for s in stomata)
    return n_open / len(stomata)


@dataclass
class PhenotypeRecord:
    """One report row. Undefined traits (e.g. no apertures) are NaN."""

    stoma_len_um: float = math.nan
    stoma_wid_um: float = math.nan
    stoma_aspect: float = math.nan
    aperture_len_um: float = math.nan
    aperture_wid_um: float = math.nan
    aperture_aspect: float = math.nan
    density_per_mm2: float = math.nan
    gsmax_mol_m2_s: float = math.nan
    osn_tsn_ratio: float = math.nan
    image_id: str = ""
    n_stomata: int = 0
    n_apertures: int = 0
    stoma_area_um2: float = math.nan
    aperture_area_um2: float = math.nan


def _mean_traits(boxes, cal, area_rule):
    t = np.array([box_to_traits(b, cal, area_rule) for b in boxes])
    if len(t) == 0:
        return (math.nan,) * 4
    # fsum keeps the mean independent of box order
    return tuple(math.fsum(col) / len(col) for col in t.T)


def conductance_inputs(rec: PhenotypeRecord, params: ConductanceParams) -> tuple[float, float]:
    """``(l_um, guard_width_um)`` selected from a record by ``params``."""
    l = {
        "aperture": rec.aperture_len_um,
        "stoma": rec.stoma_len_um,
        "aperture-short": rec.aperture_wid_um,
        "stoma-short": rec.stoma_wid_um,
    }[params.gamma_length]
    if params.guard_width == "derived":
        w = (rec.stoma_wid_um - rec.aperture_wid_um) / 2
    elif params.guard_width == "aperture-length":
        w = rec.aperture_len_um
    else:
        w = float(params.guard_width)
    return l, w


def summarize(image: LabeledImage, cal: Calibration = Calibration(),
              params: ConductanceParams = ConductanceParams(), area_rule: str = "rectangle") -> PhenotypeRecord:
    """Mean traits per class, density, opening ratio and conductance for one image.

    Aspect ratios are means of the per-box ratios, not ratios of mean axes.
    Conductance is NaN when no aperture was detected.
    """
    stomata = [b.box for b in image.of_label(Label.STOMA)]
    apertures = [b.box for b in image.of_label(Label.APERTURE)]
    if not stomata:
        raise NoStomata(f"{image.image_id}: no stoma boxes")

    sl, sw, sa, sarea = _mean_traits(stomata, cal, area_rule)
    al, aw, aa, aarea = _mean_traits(apertures, cal, area_rule)
    rec = PhenotypeRecord(
        stoma_len_um=sl, stoma_wid_um=sw, stoma_aspect=sa,
        aperture_len_um=al, aperture_wid_um=aw, aperture_aspect=aa,
        density_per_mm2=density(len(stomata), image.width, image.height, cal),
        osn_tsn_ratio=opening_ratio(stomata, apertures),
        image_id=image.image_id, n_stomata=len(stomata), n_apertures=len(apertures),
        stoma_area_um2=sarea, aperture_area_um2=aarea,
    )
    if apertures:
        l, w = conductance_inputs(rec, params)
        rec.gsmax_mol_m2_s = gsmax(rec.density_per_mm2, l, w, params)
    return rec


def summarize_all(images: Sequence[LabeledImage], cal: Calibration = Calibration(),
                  params: ConductanceParams = ConductanceParams(), area_rule: str = "rectangle") -> list[PhenotypeRecord]:
    """Records for every image with at least one stoma, sorted by image_id."""
    out = []
    for im in sorted(images, key=lambda im: im.image_id):
        if im.of_label(Label.STOMA):
            out.append(summarize(im, cal, params, area_rule))
    return out


@dataclass(frozen=True)
class InterpretationFit:
    gamma_length: str
    guard_width: str
    pi: float
    max_abs_error: float
    rows_matched: int  # rows whose value agrees at 2 decimals
    n_rows: int


def interpretation_search(rows: Sequence[dict], pis: Sequence[float] = (math.pi, 3.142)) -> list[InterpretationFit]:
    """Rank conductance symbol mappings against reference report rows.

    Each row needs ``stoma_len_um``, ``stoma_wid_um``, ``aperture_len_um``,
    ``aperture_wid_um``, ``density_per_mm2`` and ``gsmax_mol_m2_s``. Candidate
    guard widths also include the stoma short axis and its half, the aperture
    short axis, and the full short-axis difference.
    """
    guard_rules = {
        "derived": lambda r: (r["stoma_wid_um"] - r["aperture_wid_um"]) / 2,
        "aperture-length": lambda r: r["aperture_len_um"],
        "stoma-short - aperture-short": lambda r: r["stoma_wid_um"] - r["aperture_wid_um"],
        "stoma-long - aperture-long": lambda r: r["stoma_len_um"] - r["aperture_len_um"],
        "stoma-short": lambda r: r["stoma_wid_um"],
        "stoma-short / 2": lambda r: r["stoma_wid_um"] / 2,
        "aperture-short": lambda r: r["aperture_wid_um"],
    }
    length_keys = {
        "aperture": "aperture_len_um", "stoma": "stoma_len_um",
        "aperture-short": "aperture_wid_um", "stoma-short": "stoma_wid_um",
    }
    fits = []
    for lname, lkey in length_keys.items():
        for gname, rule in guard_rules.items():
            for pi in pis:
                params = ConductanceParams(pi=pi)
                errs, hits = [], 0
                for r in rows:
                    w = rule(r)
                    if w <= 0:
                        errs.append(math.inf)
                        continue
                    g = gsmax(r["density_per_mm2"], r[lkey], w, params)
                    errs.append(abs(g - r["gsmax_mol_m2_s"]))
                    hits += round(g, 2) == round(r["gsmax_mol_m2_s"], 2)
                fits.append(InterpretationFit(lname, gname, pi, max(errs), hits, len(rows)))
    fits.sort(key=lambda f: (-f.rows_matched, f.max_abs_error))
    return fits
