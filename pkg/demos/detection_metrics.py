"""
Precision, recall and AP for rotated detections
===============================================

A synthetic leaf, pseudo-detections with jitter, false positives and misses,
then the per-class report at a few IoU thresholds.
"""

from stomakit.evaldet import evaluate, pr_curve
from stomakit.annot import Label
from stomakit.synth import SceneParams, generate_scenes, perturb

params = SceneParams(n_stomata=10, seed=3)
scenes = generate_scenes(4, params)
truth = [sc.truth for sc in scenes]

# perfect detections score 1.0 everywhere
exact = [perturb(t, seed=k) for k, t in enumerate(truth)]
print("exact detections, mAP:", evaluate(truth, exact).map)

# noisy detections
noisy = [perturb(t, jitter_px=3.0, angle_jitter_rad=0.05, fp_rate=0.15, fn_rate=0.1, seed=k)
         for k, t in enumerate(truth)]
for thr in (0.25, 0.5, 0.75):
    rep = evaluate(truth, noisy, thr)
    print(f"\nIoU >= {thr}")
    for c in rep.classes:
        print(f"  {c.label:<9} P {c.precision:.3f} R {c.recall:.3f} F1 {c.f1:.3f} AP {c.ap:.3f}")
    print(f"  mAP {rep.map:.3f}")

# the raw curve behind one AP value
curve = pr_curve(truth, noisy, Label.APERTURE, 0.5)
print("\nfirst points of the aperture PR curve (recall, precision):")
for r, p in curve.points[:8]:
    print(f"  {r:.3f} {p:.3f}")
