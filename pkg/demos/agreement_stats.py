"""
Agreement between manual and automatic measurements
====================================================
"""

import numpy as np

from stomakit.agreement import agree, ccc, compare_distributions, pearson, wilcoxon_rank_sum

# shift and scale errors cost concordance but not correlation
g = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
for name, d in [("identical", g), ("shifted", g + 1), ("scaled", 1.3 * g), ("noisy", g + [0.1, -0.2, 0.1, 0.0, -0.1])]:
    print(f"{name:<9} r {pearson(g, d):.3f}  CCC {ccc(g, d):.3f}")

# exact rank-sum test on small samples
print("exact p, [1,2,3] vs [10,11,12]:", wilcoxon_rank_sum([1, 2, 3], [10, 11, 12]))

# a plausible validation set: manual vs predicted aperture widths
rng = np.random.default_rng(7)
manual = rng.normal(11.8, 0.6, 34)
predicted = manual + rng.normal(0.05, 0.15, 34)
r = agree("aperture width", manual, predicted)
print(f"\n{r.trait}: n={r.n} CCC {r.ccc:.4f} accuracy {r.avg_accuracy:.4f} RMSE {r.rmse:.4f} "
      f"{r.test} p={r.p_value:.3f}")
print(compare_distributions(manual, predicted))
