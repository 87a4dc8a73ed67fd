"""Reference (training-free) feature fusion and feature filter operators.

Feature maps are float64 arrays of shape ``(C, H, W)``. Offsets and fusion
weights are explicit inputs here rather than outputs of learned predictors.

Filter pipeline::

    f_std  = group_normalize(f)              # alpha * (f - mu) / sqrt(var + eps) + beta
    w      = alpha / sum(alpha)              # per-channel information weights
    s      = sigmoid(w[c] * f_std)
    w1     = s if s <= threshold else 1
    w2     = s if s >= threshold else 0
    out    = w1 * f + reverse_channels(w2 * f)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import BadParams, DegenerateAlpha, ShapeMismatch, WeightOutOfRange


def _fmap(f, name="feature map") -> np.ndarray:
    a = np.asarray(f, dtype=np.float64)
    if a.ndim != 3 or min(a.shape) < 1:
        raise ShapeMismatch(f"{name} must have shape (C, H, W), got {a.shape}")
    return a


# ------------------------------------------------------------ fusion


def resample_with_offsets(src, offsets, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of ``src`` onto an ``out_h x out_w`` grid plus offsets.

    Target cell ``(y, x)`` reads ``src`` at ``(y*H/out_h + dy, x*W/out_w + dx)``
    where ``offsets[0]`` is dx and ``offsets[1]`` is dy. Coordinates outside
    the grid are clamped to the border.
    """
    src = _fmap(src, "src")
    off = np.asarray(offsets, dtype=np.float64)
    if off.shape != (2, out_h, out_w):
        raise ShapeMismatch(f"offsets must have shape (2, {out_h}, {out_w}), got {off.shape}")
    _, H, W = src.shape
    gy = np.arange(out_h, dtype=np.float64)[:, None] * (H / out_h)
    gx = np.arange(out_w, dtype=np.float64)[None, :] * (W / out_w)
    y = np.clip(gy + off[1], 0.0, H - 1)
    x = np.clip(gx + off[0], 0.0, W - 1)
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = y - y0
    wx = x - x0
    top = (1 - wx) * src[:, y0, x0] + wx * src[:, y0, x1]
    bot = (1 - wx) * src[:, y1, x0] + wx * src[:, y1, x1]
    return (1 - wy) * top + wy * bot


def weighted_fusion(aligned: Sequence, weights: Sequence, normalize: bool = False) -> np.ndarray:
    """Per-pixel weighted sum of aligned maps; each ``H x W`` weight is shared by all channels.

    With ``normalize=True`` the weights are divided by their per-pixel sum
    (pixels whose weights are all zero stay zero).
    """
    maps = [_fmap(a, "aligned map") for a in aligned]
    if not maps or len(maps) != len(weights):
        raise ShapeMismatch("need one weight map per aligned map")
    shape = maps[0].shape
    ws = [np.asarray(w, dtype=np.float64) for w in weights]
    for m, w in zip(maps, ws):
        if m.shape != shape:
            raise ShapeMismatch(f"aligned maps differ in shape: {m.shape} vs {shape}")
        if w.shape != shape[1:]:
            raise ShapeMismatch(f"weight map must be {shape[1:]}, got {w.shape}")
        if np.any(w < 0) or np.any(w > 1):
            raise WeightOutOfRange("fusion weights must lie in [0, 1]")
    if normalize:
        total = np.sum(ws, axis=0)
        safe = np.where(total > 0, total, 1.0)
        ws = [w / safe for w in ws]
    out = np.zeros(shape)
    for m, w in zip(maps, ws):
        out += w[None] * m
    return out


def weighted_fusion_backward(aligned: Sequence, weights: Sequence, grad_out) -> tuple[list, list]:
    """Gradients of ``sum(grad_out * weighted_fusion(aligned, weights))``."""
    g = _fmap(grad_out, "grad_out")
    grad_maps = [np.asarray(w, dtype=np.float64)[None] * g for w in weights]
    grad_w = [np.sum(g * _fmap(a), axis=0) for a in aligned]
    return grad_maps, grad_w


# ------------------------------------------------------------ filter


@dataclass(frozen=True)
class FilterParams:
    groups: int
    alpha: np.ndarray
    beta: np.ndarray
    threshold: float = 0.5
    eps: float = 1e-5

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        b = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if a.shape != b.shape:
            raise ShapeMismatch("alpha and beta must have one entry per channel")
        if self.groups < 1 or len(a) % self.groups:
            raise BadParams(f"{len(a)} channels not divisible into {self.groups} groups")
        if not np.any(a != 0):
            raise DegenerateAlpha("alpha must not be all zero")
        if not 0.0 <= self.threshold <= 1.0:
            raise BadParams("threshold must lie in [0, 1]")
        if not self.eps > 0:
            raise BadParams("eps must be positive")

    @property
    def channels(self) -> int:
        return len(self.alpha)


def _check_params(f: np.ndarray, p: FilterParams):
    if f.shape[0] != p.channels:
        raise ShapeMismatch(f"map has {f.shape[0]} channels, params have {p.channels}")


def _group_stats(f: np.ndarray, p: FilterParams):
    C, H, W = f.shape
    g = f.reshape(p.groups, -1)
    mu = g.mean(axis=1, keepdims=True)
    var = g.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + p.eps)
    xhat = ((g - mu) * inv).reshape(C, H, W)
    return xhat, inv


def group_normalize(f, p: FilterParams) -> np.ndarray:
    f = _fmap(f)
    _check_params(f, p)
    xhat, _ = _group_stats(f, p)
    return p.alpha[:, None, None] * xhat + p.beta[:, None, None]


def group_normalize_backward(f, p: FilterParams, grad_out):
    """Gradients of ``sum(grad_out * group_normalize(f, p))`` w.r.t. ``(f, alpha, beta)``."""
    f = _fmap(f)
    _check_params(f, p)
    g = _fmap(grad_out, "grad_out")
    C, H, W = f.shape
    xhat, inv = _group_stats(f, p)
    grad_alpha = np.sum(g * xhat, axis=(1, 2))
    grad_beta = np.sum(g, axis=(1, 2))
    dxhat = (g * p.alpha[:, None, None]).reshape(p.groups, -1)
    xh = xhat.reshape(p.groups, -1)
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True) - xh * (dxhat * xh).mean(axis=1, keepdims=True))
    return dx.reshape(C, H, W), grad_alpha, grad_beta


def information_weights(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    total = a.sum()
    if total == 0 or not np.any(a != 0):
        raise DegenerateAlpha("sum of alpha is zero")
    return a / total


def split_weights(w, f_std, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Informative (``w1``) and non-informative (``w2``) gates from ``sigmoid(w[c] * f_std)``."""
    f_std = _fmap(f_std, "f_std")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != f_std.shape[0]:
        raise ShapeMismatch(f"{w.shape[0]} weights for {f_std.shape[0]} channels")
    s = expit(w[:, None, None] * f_std)
    w1 = np.where(s <= threshold, s, 1.0)
    w2 = np.where(s >= threshold, s, 0.0)
    return w1, w2


def split_weights_backward(w, f_std, threshold, grad_w1, grad_w2):
    """Gradients of ``sum(grad_w1 * w1 + grad_w2 * w2)`` w.r.t. ``(f_std, w)``.

    The gates are piecewise smooth; at ``s == threshold`` the one-sided
    derivative of the sigmoid branch is used.
    """
    f_std = _fmap(f_std, "f_std")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    s = expit(w[:, None, None] * f_std)
    ds = s * (1 - s)
    dz = np.where(s <= threshold, grad_w1, 0.0) * ds + np.where(s >= threshold, grad_w2, 0.0) * ds
    return dz * w[:, None, None], np.sum(dz * f_std, axis=(1, 2))


def reconstruct(f, w1, w2, reversed: str = "channel") -> np.ndarray:
    """Recombine gated features.

    ``reversed="channel"``: ``w1*f + (w2*f)[::-1]`` (channel order reversed).
    ``reversed="complement"``: ``w1*f + (1 - w2)*f``.
    """
    f = _fmap(f)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if w1.shape != f.shape or w2.shape != f.shape:
        raise ShapeMismatch("gates must match the feature map shape")
    if reversed == "channel":
        return w1 * f + (w2 * f)[::-1]
    if reversed == "complement":
        return w1 * f + (1.0 - w2) * f
    raise BadParams(f"reversed must be 'channel' or 'complement', got {reversed!r}")


def filter_forward(f, p: FilterParams, reversed: str = "channel") -> np.ndarray:
    f = _fmap(f)
    f_std = group_normalize(f, p)
    w = information_weights(p.alpha)
    w1, w2 = split_weights(w, f_std, p.threshold)
    return reconstruct(f, w1, w2, reversed)


# ------------------------------------------------------------ verification


def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn`` at ``x`` (``x`` is restored)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = fn(x)
        x[i] = old - h
        fm = fn(x)
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))))


def random_filter_params(rng: np.random.Generator, channels: int, groups: int | None = None,
                         threshold: float = 0.5) -> FilterParams:
    if groups is None:
        groups = 2 if channels % 2 == 0 else 1
    alpha = rng.uniform(0.5, 1.5, channels)
    beta = rng.normal(0.0, 0.1, channels)
    return FilterParams(groups, alpha, beta, threshold)


def gradient_check(seed: int, shape=(4, 6, 6), h: float = 1e-5) -> dict:
    """Analytic vs central-difference gradients for the differentiable stages.

    Returns the max relative error per checked quantity. Elements whose gate
    value sits within ``1e-4`` of the threshold are excluded from the gate
    check, since the gates jump there.
    """
    rng = np.random.default_rng(seed)
    C, H, W = shape
    f = rng.normal(size=shape)
    p = random_filter_params(rng, C)
    g = rng.normal(size=shape)

    def gn_loss(x):
        return float(np.sum(g * group_normalize(x, p)))

    def gn_loss_alpha(a):
        return float(np.sum(g * group_normalize(f, FilterParams(p.groups, a, p.beta, p.threshold, p.eps))))

    def gn_loss_beta(b):
        return float(np.sum(g * group_normalize(f, FilterParams(p.groups, p.alpha, b, p.threshold, p.eps))))

    dx, da, db = group_normalize_backward(f, p, g)
    out = {
        "group_normalize/f": relative_error(dx, numerical_gradient(gn_loss, f.copy(), h)),
        "group_normalize/alpha": relative_error(da, numerical_gradient(gn_loss_alpha, p.alpha.copy(), h)),
        "group_normalize/beta": relative_error(db, numerical_gradient(gn_loss_beta, p.beta.copy(), h)),
    }

    f_std = group_normalize(f, p)
    w = information_weights(p.alpha)
    g1 = rng.normal(size=shape)
    g2 = rng.normal(size=shape)

    def gate_loss(x, wv=w):
        w1, w2 = split_weights(wv, x, p.threshold)
        return float(np.sum(g1 * w1 + g2 * w2))

    dfs, dw = split_weights_backward(w, f_std, p.threshold, g1, g2)
    s = expit(w[:, None, None] * f_std)
    smooth = np.abs(s - p.threshold) > 1e-4
    num_fs = numerical_gradient(gate_loss, f_std.copy(), h)
    out["split_weights/f_std"] = relative_error(dfs[smooth], num_fs[smooth])
    if np.all(smooth):
        num_w = numerical_gradient(lambda wv: gate_loss(f_std, wv), w.copy(), h)
        out["split_weights/w"] = relative_error(dw, num_w)

    maps = [rng.normal(size=shape) for _ in range(3)]
    weights = [rng.uniform(0.05, 0.95, (H, W)) for _ in range(3)]
    gm, gw = weighted_fusion_backward(maps, weights, g)
    errs = []
    for k in range(3):
        def loss_map(x, k=k):
            ms = list(maps)
            ms[k] = x
            return float(np.sum(g * weighted_fusion(ms, weights)))

        def loss_w(x, k=k):
            ws = list(weights)
            ws[k] = x
            return float(np.sum(g * weighted_fusion(maps, ws)))

        errs.append(relative_error(gm[k], numerical_gradient(loss_map, maps[k].copy(), h)))
        errs.append(relative_error(gw[k], numerical_gradient(loss_w, weights[k].copy(), h)))
    out["weighted_fusion"] = max(errs)
    return out


def _stats(a: np.ndarray) -> dict:
    return {"mean": float(a.mean()), "std": float(a.std()), "min": float(a.min()), "max": float(a.max())}


def fuse_demo(seed: int = 0, shape=(8, 16, 16), levels: int = 3, threshold: float = 0.5,
              reversed: str = "channel", normalize_weights: bool = False, max_offset: float = 0.5) -> dict:
    """Seeded end-to-end run: resample coarse levels, fuse, filter, gradient-check.

    Level 0 is the target-resolution map and is used unchanged; level ``k``
    has its spatial size halved ``k`` times (minimum 1) and is resampled back
    with random offsets in ``[-max_offset, max_offset]``.
    """
    C, H, W = shape
    rng = np.random.default_rng(seed)
    aligned, weights, stages = [], [], {}
    for k in range(levels):
        hk, wk = max(1, H >> k), max(1, W >> k)
        src = rng.normal(size=(C, hk, wk))
        if k == 0:
            a = src
        else:
            off = rng.uniform(-max_offset, max_offset, (2, H, W))
            a = resample_with_offsets(src, off, H, W)
        aligned.append(a)
        weights.append(rng.uniform(0.0, 1.0, (H, W)))
        stages[f"aligned[{k}]"] = _stats(a)
    fused = weighted_fusion(aligned, weights, normalize=normalize_weights)
    stages["fused"] = _stats(fused)

    p = random_filter_params(rng, C, threshold=threshold)
    f_std = group_normalize(fused, p)
    w = information_weights(p.alpha)
    w1, w2 = split_weights(w, f_std, p.threshold)
    out = reconstruct(fused, w1, w2, reversed)
    stages["f_std"] = _stats(f_std)
    stages["w1"] = _stats(w1)
    stages["w2"] = _stats(w2)
    stages["output"] = _stats(out)
    return {
        "seed": seed,
        "shape": [C, H, W],
        "groups": p.groups,
        "threshold": p.threshold,
        "reversed": reversed,
        "normalize_weights": normalize_weights,
        "informative_fraction": float(np.mean(w1 == 1.0)),
        "stages": stages,
        "gradient_check": gradient_check(seed),
    }
