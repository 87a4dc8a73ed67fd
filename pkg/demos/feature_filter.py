"""
Feature fusion and gating, checked by finite differences
========================================================
"""

import numpy as np

from stomakit.netops import (FilterParams, filter_forward, fuse_demo, gradient_check, group_normalize,
                             information_weights, split_weights)

rng = np.random.default_rng(0)
f = rng.normal(size=(4, 6, 6))
p = FilterParams(groups=2, alpha=np.array([1.0, 0.5, 2.0, 1.5]), beta=np.zeros(4), threshold=0.5)

f_std = group_normalize(f, p)
w = information_weights(p.alpha)
w1, w2 = split_weights(w, f_std, p.threshold)
print("information weights:", w)
print("share of informative elements (w1 == 1):", np.mean(w1 == 1))
print("w2 <= w1 everywhere:", bool(np.all(w2 <= w1)))
print("output shape:", filter_forward(f, p).shape)

# analytic gradients vs central differences
for seed in range(3):
    errs = gradient_check(seed)
    print(seed, {k: f"{v:.1e}" for k, v in errs.items()})

# the whole chain: resample coarse levels, fuse, filter
res = fuse_demo(seed=1, shape=(8, 16, 16), levels=3)
for name, st in res["stages"].items():
    print(f"{name:<12} mean {st['mean']:+.3f} std {st['std']:.3f}")
