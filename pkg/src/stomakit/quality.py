"""Image-quality triage, synthetic degradations and restoration fidelity.

Images are 2-D float arrays with values in [0, 1]. Sharpness is summarised by
the high-frequency tail of the radially averaged power spectrum: blur removes
power from the tail, so ``f_mean`` and ``f_std`` drop.
"""
from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import BadParams, DimensionMismatch, ImageTooSmall

LUMA = (0.299, 0.587, 0.114)


def as_gray(img) -> np.ndarray:
    a = np.asarray(img, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D gray image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise BadParams("image contains non-finite values")
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise BadParams("image values must lie in [0, 1]")
    return a


def load_gray(path) -> np.ndarray:
    """Read PNG/PGM/TIFF etc. as a [0, 1] gray image.

    8- and 16-bit data are scaled linearly by their full range; colour is
    reduced with fixed luminance weights.
    """
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P", "CMYK", "LA"):
            rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
            return np.clip(rgb @ np.array(LUMA), 0.0, 1.0)
        arr = np.asarray(im)
    if arr.dtype == np.uint8:
        return arr.astype(float) / 255.0
    if arr.dtype in (np.uint16, np.int32, np.int16) or im.mode.startswith("I"):
        return np.clip(arr.astype(float) / 65535.0, 0.0, 1.0)
    if arr.dtype == bool:
        return arr.astype(float)
    return as_gray(arr.astype(float))


def save_gray(path, img, bits: int = 8) -> None:
    """Write a [0, 1] image as 8- or 16-bit PGM/PNG (format from the suffix)."""
    from PIL import Image

    a = as_gray(img)
    if bits == 8:
        Image.fromarray(np.round(a * 255).astype(np.uint8), mode="L").save(path)
    elif bits == 16:
        Image.fromarray(np.round(a * 65535).astype(np.uint16)).save(path)
    else:
        raise BadParams("bits must be 8 or 16")


# ------------------------------------------------------------ spectrum


def radial_power_profile(img) -> tuple[np.ndarray, np.ndarray]:
    """Radially averaged power spectrum.

    Bin ``k`` holds frequencies with integer radius ``floor(r) == k`` (in DFT
    index units from the zero frequency) for ``k < floor(min(h, w) / 2)``;
    corner frequencies beyond that radius are dropped. Returns
    ``(mean_power_per_bin, pixel_count_per_bin)``.
    """
    a = as_gray(img)
    h, w = a.shape
    nbins = min(h, w) // 2
    power = np.abs(np.fft.fftshift(np.fft.fft2(a))) ** 2
    ky = np.arange(h) - h // 2
    kx = np.arange(w) - w // 2
    r = np.floor(np.hypot(ky[:, None], kx[None, :])).astype(int)
    keep = r < nbins
    counts = np.bincount(r[keep], minlength=nbins)
    sums = np.bincount(r[keep], weights=power[keep], minlength=nbins)
    return sums / np.maximum(counts, 1), counts


def frequency_tail_stats(img, tail_fraction: float = 0.4) -> tuple[float, float]:
    """``(f_mean, f_std)`` of the highest-frequency ``tail_fraction`` of radial bins."""
    a = as_gray(img)
    if min(a.shape) < 16:
        raise ImageTooSmall(f"need at least 16x16 pixels, got {a.shape}")
    if not 0.0 < tail_fraction < 1.0:
        raise BadParams(f"tail_fraction must lie in (0, 1), got {tail_fraction}")
    profile, _ = radial_power_profile(a)
    n_tail = max(1, int(math.ceil(tail_fraction * len(profile))))
    tail = profile[-n_tail:]
    return float(tail.mean()), float(tail.std())


def histogram_entropy(img, bins: int = 256) -> float:
    """Shannon entropy (bits) of the intensity histogram over [0, 1]."""
    if bins < 2:
        raise BadParams("bins must be >= 2")
    a = as_gray(img)
    counts, _ = np.histogram(a, bins=bins, range=(0.0, 1.0))
    p = counts[counts > 0] / a.size
    return float(-np.sum(p * np.log2(p))) + 0.0


@dataclass(frozen=True)
class QualityThresholds:
    f_mean: float
    f_std: float


@dataclass(frozen=True)
class QualityReport:
    f_mean: float
    f_std: float
    t_entropy: float
    verdict: str  # "clear" or "blurry"

    @property
    def blurry(self) -> bool:
        return self.verdict == "blurry"


def classify(img, thresholds: QualityThresholds, tail_fraction: float = 0.4, bins: int = 256) -> QualityReport:
    """Blurry iff ``f_mean`` or ``f_std`` falls below its threshold."""
    fm, fs = frequency_tail_stats(img, tail_fraction)
    te = histogram_entropy(img, bins)
    blurry = fm < thresholds.f_mean or fs < thresholds.f_std
    return QualityReport(fm, fs, te, "blurry" if blurry else "clear")


def normalize_reports(reports: Sequence[QualityReport]) -> list[QualityReport]:
    """Min-max scale each metric to [0, 1] across a batch (verdicts unchanged)."""
    if not reports:
        return []
    cols = np.array([[r.f_mean, r.f_std, r.t_entropy] for r in reports])
    lo, hi = cols.min(axis=0), cols.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = (cols - lo) / span
    return [QualityReport(*map(float, row), r.verdict) for row, r in zip(scaled, reports)]


# ------------------------------------------------------------ degradations

DEGRADATIONS = ("pixelation", "noise", "motion_blur", "gauss_blur")


def pixelate(img, block: int) -> np.ndarray:
    """Average over ``block x block`` tiles and expand back (edge tiles may be partial)."""
    a = as_gray(img)
    if block < 1 or int(block) != block:
        raise BadParams("block must be a positive integer")
    block = int(block)
    if block == 1:
        return a.copy()
    h, w = a.shape
    ys = np.arange(0, h, block)
    xs = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(a, ys, axis=0), xs, axis=1)
    ny = np.diff(np.append(ys, h))
    nx = np.diff(np.append(xs, w))
    means = sums / np.outer(ny, nx)
    return np.repeat(np.repeat(means, ny, axis=0), nx, axis=1)


def add_noise(img, sigma: float, seed: Optional[int] = None) -> np.ndarray:
    a = as_gray(img)
    if not sigma >= 0:
        raise BadParams("noise sigma must be >= 0")
    if sigma == 0:
        return a.copy()
    rng = np.random.default_rng(seed)
    return np.clip(a + rng.normal(0.0, sigma, a.shape), 0.0, 1.0)


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Normalised line kernel of ``length`` pixels at ``angle`` radians (CCW from +x)."""
    if length < 1 or int(length) != length:
        raise BadParams("kernel length must be a positive integer")
    length = int(length)
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = size // 2
    half = (length - 1) / 2
    for t in np.linspace(-half, half, 4 * length + 1):
        x = int(round(c + t * math.cos(angle)))
        y = int(round(c - t * math.sin(angle)))  # rows grow downward
        k[y, x] += 1.0
    return k / k.sum()


def motion_blur(img, length: int, angle: float = 0.0) -> np.ndarray:
    a = as_gray(img)
    k = motion_kernel(length, angle)
    if k.shape == (1, 1):
        return a.copy()
    return np.clip(ndimage.convolve(a, k, mode="reflect"), 0.0, 1.0)


def gauss_blur(img, sigma: float) -> np.ndarray:
    a = as_gray(img)
    if not sigma >= 0:
        raise BadParams("gaussian sigma must be >= 0")
    if sigma == 0:
        return a.copy()
    return np.clip(ndimage.gaussian_filter(a, sigma, mode="reflect"), 0.0, 1.0)


def degrade(img, kind: str, *, block: int = 1, sigma: float = 0.0, length: int = 1,
            angle: float = 0.0, seed: Optional[int] = None) -> np.ndarray:
    """Apply one of the four degradations; only the parameters of ``kind`` are used."""
    kind = kind.replace("-", "_").lower()
    if kind in ("pixelation", "pixel"):
        return pixelate(img, block)
    if kind == "noise":
        return add_noise(img, sigma, seed)
    if kind in ("motion_blur", "motion"):
        return motion_blur(img, length, angle)
    if kind in ("gauss_blur", "gauss", "gaussian"):
        return gauss_blur(img, sigma)
    raise BadParams(f"unknown degradation {kind!r}; expected one of {DEGRADATIONS}")


def pixel_l2(a, b) -> float:
    """Mean squared pixel difference (the regression stage's L2 objective)."""
    a = as_gray(a)
    b = as_gray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def restore_and_rescore(path, restore_cmd: str, thresholds: QualityThresholds,
                        tail_fraction: float = 0.4, bins: int = 256) -> tuple[Path, QualityReport]:
    """Run an external restoration command and score its output.

    ``restore_cmd`` may use ``{input}`` and ``{output}`` placeholders; the
    output is written to a PNG in a temporary directory, which is returned
    together with its report. Raises ``subprocess.CalledProcessError`` on a
    failed command.
    """
    out_dir = Path(tempfile.mkdtemp(prefix="stomakit-restore-"))
    out = out_dir / (Path(path).stem + "_restored.png")
    argv = [tok.format(input=str(path), output=str(out)) for tok in shlex.split(restore_cmd)]
    subprocess.run(argv, check=True)
    return out, classify(load_gray(out), thresholds, tail_fraction, bins)
