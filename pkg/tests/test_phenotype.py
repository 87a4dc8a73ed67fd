import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import gsmax_hand, reference_report_rows
from stomakit.annot import Label, LabeledBox, LabeledImage, RotatedBox
from stomakit.errors import BadParams, NoStomata, NonPositiveInput
from stomakit.phenotype import (
    Calibration, ConductanceParams, box_to_traits, density, gamma_max, gsmax, interpretation_search,
    opening_ratio, summarize, summarize_all,
)
from stomakit.rotgeom import rigid_transform

CAL = Calibration(224)


def test_box_traits():
    t = box_to_traits(RotatedBox(0, 0, 224, 112, 0.7), CAL)
    assert t == pytest.approx((100.0, 50.0, 0.5, 5000.0))
    # axis order does not matter
    assert box_to_traits(RotatedBox(0, 0, 112, 224, 0.0), CAL) == pytest.approx(t)
    e = box_to_traits(RotatedBox(0, 0, 224, 112, 0), CAL, area_rule="ellipse")
    assert e.area_um2 == pytest.approx(math.pi * 1250)
    with pytest.raises(BadParams):
        box_to_traits(RotatedBox(0, 0, 2, 1), CAL, area_rule="hexagon")


def test_density_examples():
    assert density(10, 2240, 2240, CAL) == pytest.approx(10.0)
    assert density(141, 1000, 1000, Calibration(100 / math.sqrt(0.996))) == pytest.approx(141.57, abs=5e-3)
    assert round(density(78, 1920, 1440, CAL), 2) == 141.56
    assert round(density(80, 1920, 1440, CAL), 2) == 145.19
    assert round(density(81, 1920, 1440, CAL), 2) == 147.00
    assert round(density(79, 1920, 1440, CAL), 2) == 143.37
    assert density(0, 100, 100, CAL) == 0.0


def test_calibration_validation():
    with pytest.raises(BadParams):
        Calibration(0)
    with pytest.raises(BadParams):
        density(1, 0, 10, CAL)


def test_gamma_max():
    assert gamma_max(2.0) == pytest.approx(math.pi * 1e-12, rel=1e-12)
    assert gamma_max(11.74) == pytest.approx(1.082496e-10, rel=1e-6)
    assert gamma_max(10.0) == pytest.approx(7.854e-11, rel=1e-4)
    with pytest.raises(NonPositiveInput):
        gamma_max(0.0)


def test_gsmax_hand_case():
    g = gsmax(100, 10, 5)
    assert g == pytest.approx(gsmax_hand(100, 10, 5), abs=1e-12)
    assert g == pytest.approx(0.4245, abs=1e-3)


@pytest.mark.parametrize("args", [(0, 10, 5), (100, -1, 5), (100, 10, 0), (math.nan, 10, 5)])
def test_gsmax_rejects_non_positive(args):
    with pytest.raises(NonPositiveInput):
        gsmax(*args)


def test_gsmax_sweeps():
    ds = np.linspace(10, 500, 10)
    gs = [gsmax(d, 10, 5) for d in ds]
    # linear in D through the origin
    assert np.allclose(np.array(gs) / ds, gs[0] / ds[0], rtol=1e-12)
    ls = np.linspace(1, 40, 10)
    assert np.all(np.diff([gsmax(100, l, 5) for l in ls]) > 0)
    ws = np.linspace(0.5, 40, 10)
    assert np.all(np.diff([gsmax(100, 10, w) for w in ws]) < 0)
    # limits: w -> 0 leaves the pore-end correction; w -> inf drives G to 0
    assert gsmax(100, 10, 1e-9) == pytest.approx(gsmax_hand(100, 10, 0.0), rel=1e-6)
    assert gsmax(100, 10, 1e9) < 1e-6


@given(st.floats(1, 1000), st.floats(0.5, 50), st.floats(0.5, 50))
def test_gsmax_matches_folded_units(d, l, w):
    assert gsmax(d, l, w) == pytest.approx(gsmax_hand(d, l, w), rel=1e-12)


def test_opening_ratio():
    s = [RotatedBox(20, 20, 10, 6, 0.3), RotatedBox(60, 20, 10, 6, 0.0), RotatedBox(20, 60, 10, 6, 1.0)]
    assert opening_ratio(s, [RotatedBox(x.cx, x.cy, 3, 1, 0) for x in s]) == 1.0
    assert opening_ratio(s, []) == 0.0
    assert opening_ratio(s, [RotatedBox(20, 20, 3, 1), RotatedBox(61, 21, 3, 1)]) == pytest.approx(2 / 3)
    with pytest.raises(NoStomata):
        opening_ratio([], [])


@given(st.floats(-math.pi, math.pi), st.floats(-100, 100), st.floats(-100, 100))
def test_opening_ratio_rigid_invariant(rot, tx, ty):
    s = [RotatedBox(20, 20, 10, 6, 0.3), RotatedBox(60, 20, 10, 6, 0.0), RotatedBox(20, 60, 10, 6, 1.0)]
    a = [RotatedBox(21, 20.5, 3, 1, 0), RotatedBox(63, 22, 3, 1, 0), RotatedBox(40, 40, 3, 1, 0)]
    moved = lambda bs: [rigid_transform(b, rot, tx, ty) for b in bs]
    assert opening_ratio(moved(s), moved(a)) == opening_ratio(s, a) == 2 / 3


def leaf_image(rng, n=6, w=1920, h=1440, image_id="leaf"):
    boxes = []
    for i in range(n):
        cx, cy = 150 + 250 * (i % 6), 200 + 300 * (i // 6)
        ang = rng.uniform(0, math.pi)
        boxes.append(LabeledBox(RotatedBox(cx, cy, rng.uniform(50, 60), rng.uniform(40, 48), ang), Label.STOMA))
        if i % 2 == 0:
            boxes.append(LabeledBox(RotatedBox(cx, cy, rng.uniform(30, 38), rng.uniform(20, 28), ang), Label.APERTURE))
    return LabeledImage(image_id, w, h, tuple(boxes))


def test_summarize_fields():
    rng = np.random.default_rng(0)
    im = leaf_image(rng)
    rec = summarize(im, CAL)
    st_ = [b.box for b in im.of_label(Label.STOMA)]
    ap = [b.box for b in im.of_label(Label.APERTURE)]
    k = 100 / 224
    assert rec.n_stomata == 6 and rec.n_apertures == 3
    assert rec.stoma_len_um == pytest.approx(np.mean([b.length for b in st_]) * k)
    assert rec.aperture_wid_um == pytest.approx(np.mean([b.width for b in ap]) * k)
    assert rec.stoma_aspect == pytest.approx(np.mean([b.width / b.length for b in st_]))
    assert rec.osn_tsn_ratio == pytest.approx(0.5)
    assert rec.density_per_mm2 == pytest.approx(density(6, 1920, 1440, CAL))
    l, w = rec.aperture_len_um, (rec.stoma_wid_um - rec.aperture_wid_um) / 2
    assert rec.gsmax_mol_m2_s == pytest.approx(gsmax_hand(rec.density_per_mm2, l, w))


def test_summarize_without_apertures():
    im = LabeledImage("x", 100, 100, (LabeledBox(RotatedBox(50, 50, 20, 10, 0), Label.STOMA),))
    rec = summarize(im, CAL)
    assert math.isnan(rec.gsmax_mol_m2_s) and math.isnan(rec.aperture_len_um)
    assert rec.osn_tsn_ratio == 0.0


def test_summarize_requires_stomata():
    with pytest.raises(NoStomata):
        summarize(LabeledImage("x", 100, 100, ()), CAL)
    assert summarize_all([LabeledImage("x", 100, 100, ())], CAL) == []


@given(st.randoms(use_true_random=False))
def test_summarize_permutation_invariant(r):
    im = leaf_image(np.random.default_rng(1))
    boxes = list(im.boxes)
    r.shuffle(boxes)
    a, b = summarize(im, CAL), summarize(LabeledImage(im.image_id, im.width, im.height, tuple(boxes)), CAL)
    assert a == b


def test_unit_scaling_consistency():
    # doubling the resolution and all pixel geometry leaves physical traits unchanged
    im = leaf_image(np.random.default_rng(2))
    big = LabeledImage(im.image_id, im.width * 2, im.height * 2, tuple(
        LabeledBox(RotatedBox(b.box.cx * 2, b.box.cy * 2, b.box.w * 2, b.box.h * 2, b.box.angle), b.label)
        for b in im.boxes))
    a, b = summarize(im, CAL), summarize(big, Calibration(448))
    for attr in ("stoma_len_um", "stoma_wid_um", "aperture_len_um", "density_per_mm2", "gsmax_mol_m2_s"):
        assert getattr(a, attr) == pytest.approx(getattr(b, attr), rel=1e-12)


def test_conductance_params_validation():
    with pytest.raises(BadParams):
        ConductanceParams(gamma_length="nope")
    with pytest.raises(BadParams):
        ConductanceParams(guard_width=-1.0)
    assert ConductanceParams(guard_width=3.0).guard_width == 3.0


def test_interpretation_search_best_fit():
    rows = reference_report_rows()
    fits = interpretation_search(rows)
    best = fits[0]
    assert (best.gamma_length, best.guard_width) == ("aperture-short", "aperture-length")
    assert best.rows_matched == best.n_rows == 11
    assert best.max_abs_error < 5e-3
    preset = ConductanceParams.report_fit()
    assert (preset.gamma_length, preset.guard_width) == (best.gamma_length, best.guard_width)
    default = next(f for f in fits if (f.gamma_length, f.guard_width, f.pi) == ("aperture", "derived", math.pi))
    assert default.rows_matched == 0


def test_reference_row_derivable_columns():
    # 78 stomata with row 1's mean dimensions on a 1920 x 1440 image at 224 px / 100 um
    from stomakit.annot import write_report_csv

    k = 2.24
    boxes = []
    for i in range(78):
        cx, cy = 60 + 120 * (i % 13), 60 + 120 * (i // 13)
        boxes.append(LabeledBox(RotatedBox(cx, cy, 24.60 * k, 20.00 * k, 0.3), Label.STOMA))
        boxes.append(LabeledBox(RotatedBox(cx, cy, 15.92 * k, 11.74 * k, 0.3), Label.APERTURE))
    rec = summarize(LabeledImage("r1", 1920, 1440, tuple(boxes)), CAL, ConductanceParams.report_fit())
    cols = write_report_csv([rec]).splitlines()[1].split(",")
    reference = "20.00,24.60,0.82,11.74,15.92,0.74,141.56,0.42".split(",")
    assert cols[:2] == reference[:2] and cols[3:] == reference[3:]
    # stoma aspect: 20.00 / 24.60 = 0.813, which no 2-decimal rounding rule prints as 0.82
    assert cols[2] == "0.81"
