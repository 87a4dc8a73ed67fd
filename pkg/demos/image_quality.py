"""
Sharpness triage from the power spectrum
========================================

Blur removes high-frequency power, so the spectral tail statistics drop.
"""

import numpy as np

from stomakit.quality import QualityThresholds, classify, degrade, frequency_tail_stats, histogram_entropy
from stomakit.synth import SceneParams, generate_scene

img = generate_scene(SceneParams(n_stomata=6, seed=2)).image
fm0, fs0 = frequency_tail_stats(img)
print(f"clean      fMean {fm0:10.4g} fSTD {fs0:10.4g} tEntropy {histogram_entropy(img):.3f}")

for kind, kw in [("gauss_blur", dict(sigma=1.0)), ("gauss_blur", dict(sigma=3.0)),
                 ("motion_blur", dict(length=9, angle=0.4)), ("pixelation", dict(block=4)),
                 ("noise", dict(sigma=0.05, seed=0))]:
    d = degrade(img, kind, **kw)
    fm, fs = frequency_tail_stats(d)
    print(f"{kind:<11}{str(kw):<28} fMean {fm:10.4g} fSTD {fs:10.4g} tEntropy {histogram_entropy(d):.3f}")

# thresholds at half the clean values split clear from blurry
thr = QualityThresholds(fm0 / 2, fs0 / 2)
for sigma in (0.5, 1, 2, 4):
    print("sigma", sigma, classify(degrade(img, "gauss", sigma=sigma), thr).verdict)

# entropy extremes
print("constant image entropy:", histogram_entropy(np.full((32, 32), 0.5)))
print("all 256 levels once:  ", histogram_entropy(np.arange(256).reshape(16, 16) / 255))
