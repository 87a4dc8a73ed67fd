import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stomakit.errors import BadParams, DimensionMismatch, ImageTooSmall
from stomakit.quality import (
    QualityThresholds, add_noise, classify, degrade, frequency_tail_stats, gauss_blur, histogram_entropy,
    load_gray, motion_blur, motion_kernel, normalize_reports, pixel_l2, pixelate, radial_power_profile,
    restore_and_rescore, save_gray,
)


def noise_image(seed, shape=(64, 64)):
    return np.random.default_rng(seed).uniform(0, 1, shape)


def uniform_levels():
    # every 8-bit level exactly once
    return (np.arange(256).reshape(16, 16) / 255.0)


def test_entropy_constant_and_uniform():
    assert histogram_entropy(np.full((32, 32), 0.3)) == 0.0
    assert histogram_entropy(uniform_levels()) == 8.0
    two = np.zeros((8, 8))
    two[:, :4] = 1.0
    assert histogram_entropy(two) == 1.0


def test_radial_profile_bins():
    prof, counts = radial_power_profile(np.zeros((32, 48)))
    assert len(prof) == 16 and counts[0] == 1 and np.all(counts > 0)
    # a pure DC image puts all power in bin 0
    prof, _ = radial_power_profile(np.full((32, 32), 0.5))
    assert prof[0] == pytest.approx((0.5 * 32 * 32) ** 2)
    assert np.all(prof[1:] == 0)


def test_tail_stats_constant_image_is_zero():
    assert frequency_tail_stats(np.full((32, 32), 0.7)) == (0.0, 0.0)


def test_tail_stats_errors():
    with pytest.raises(ImageTooSmall):
        frequency_tail_stats(np.zeros((8, 64)))
    with pytest.raises(BadParams):
        frequency_tail_stats(np.zeros((32, 32)), tail_fraction=1.0)
    with pytest.raises(BadParams):
        frequency_tail_stats(np.full((32, 32), 2.0))
    with pytest.raises(DimensionMismatch):
        frequency_tail_stats(np.zeros((32, 32, 3)))


def test_fmean_decreases_with_blur():
    for seed in range(20):
        img = noise_image(seed)
        fm = [frequency_tail_stats(gauss_blur(img, s))[0] for s in (0.5, 1, 2, 4)]
        assert all(a > b for a, b in zip(fm, fm[1:])), (seed, fm)


def test_classify_thresholds():
    img = noise_image(0)
    fm, fs = frequency_tail_stats(img)
    assert classify(img, QualityThresholds(fm / 2, fs / 2)).verdict == "clear"
    blurred = gauss_blur(img, 3)
    assert classify(blurred, QualityThresholds(fm / 2, fs / 2)).blurry


def test_normalize_reports():
    reps = [classify(noise_image(s), QualityThresholds(0, 0)) for s in range(3)]
    reps.append(classify(gauss_blur(noise_image(9), 2), QualityThresholds(0, 0)))
    norm = normalize_reports(reps)
    cols = np.array([[r.f_mean, r.f_std, r.t_entropy] for r in norm])
    assert np.allclose(cols.min(axis=0), 0) and np.allclose(cols.max(axis=0), 1)
    assert normalize_reports([]) == []


def test_pixelate():
    a = np.arange(16, dtype=float).reshape(4, 4) / 15
    p = pixelate(a, 2)
    assert p[0, 0] == p[1, 1] == pytest.approx(np.mean(a[:2, :2]))
    assert np.array_equal(pixelate(a, 1), a)
    # partial edge tiles average what they cover
    q = pixelate(np.arange(9, dtype=float).reshape(3, 3) / 8, 2)
    assert q[2, 2] == 1.0 and q.shape == (3, 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 100))
def test_pixelate_preserves_mean_on_full_tiles(block, seed):
    a = noise_image(seed, (block * 5, block * 3))
    assert pixelate(a, block).mean() == pytest.approx(a.mean(), abs=1e-12)


def test_noise_seeded_and_clipped():
    a = noise_image(1)
    assert np.array_equal(add_noise(a, 0.1, seed=3), add_noise(a, 0.1, seed=3))
    n = add_noise(a, 0.5, seed=3)
    assert n.min() >= 0 and n.max() <= 1
    assert np.array_equal(add_noise(a, 0, seed=1), a)


def test_motion_kernel():
    k = motion_kernel(5, 0.0)
    assert k.shape == (5, 5) and k.sum() == pytest.approx(1.0)
    assert np.count_nonzero(k[2]) == 5 and np.count_nonzero(k) == 5
    v = motion_kernel(5, math.pi / 2)
    assert np.count_nonzero(v[:, 2]) == 5
    assert motion_kernel(4, 0.3).shape == (5, 5)
    with pytest.raises(BadParams):
        motion_kernel(0, 0)


def test_blurs_preserve_constant_image():
    c = np.full((20, 20), 0.4)
    assert np.allclose(motion_blur(c, 7, 0.5), 0.4)
    assert np.allclose(gauss_blur(c, 2.0), 0.4)


def test_degrade_dispatch():
    a = noise_image(2, (32, 32))
    assert np.array_equal(degrade(a, "gauss_blur", sigma=1.0), gauss_blur(a, 1.0))
    assert np.array_equal(degrade(a, "motion-blur", length=5, angle=0.2), motion_blur(a, 5, 0.2))
    assert np.array_equal(degrade(a, "pixelation", block=4), pixelate(a, 4))
    assert np.array_equal(degrade(a, "noise", sigma=0.1, seed=5), add_noise(a, 0.1, 5))
    with pytest.raises(BadParams):
        degrade(a, "jpeg")


def test_pixel_l2():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.5)
    assert pixel_l2(a, b) == 0.25
    with pytest.raises(DimensionMismatch):
        pixel_l2(a, np.zeros((4, 5)))


@pytest.mark.parametrize("suffix, bits", [(".png", 8), (".pgm", 8), (".png", 16)])
def test_save_load_round_trip(tmp_path, suffix, bits):
    a = noise_image(7, (20, 30))
    p = tmp_path / f"img{suffix}"
    save_gray(p, a, bits)
    back = load_gray(p)
    assert back.shape == a.shape
    assert np.max(np.abs(back - a)) <= 0.5 / (2 ** bits - 1) + 1e-12


def test_restore_command(tmp_path):
    script = tmp_path / "restore.py"
    script.write_text(
        "import sys\n"
        "from PIL import Image, ImageFilter\n"
        "Image.open(sys.argv[1]).filter(ImageFilter.SHARPEN).save(sys.argv[2])\n"
    )
    src = tmp_path / "in.png"
    save_gray(src, gauss_blur(noise_image(3), 1.0))
    out, rep = restore_and_rescore(src, f"{sys.executable} {script} {{input}} {{output}}", QualityThresholds(0, 0))
    assert out.exists() and rep.verdict == "clear"
    assert rep.f_mean > frequency_tail_stats(load_gray(src))[0]
