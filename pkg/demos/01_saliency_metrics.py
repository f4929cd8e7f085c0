"""How the six saliency metrics react to a few hand-made predictions.

Run with ``python demos/01_saliency_metrics.py``. Everything is computed on
64x64 maps built here, so no dataset is needed.
"""
import numpy as np

from msafnet.metrics import METRIC_NAMES, all_metrics, extract_fixations
from msafnet.synth import gaussian_map

R = 64

# A ground-truth attention map with two blobs of unequal strength.
gt = gaussian_map(R, 20, 40, 5.0) + 0.6 * gaussian_map(R, 45, 18, 5.0)
gt /= gt.max()
fix = extract_fixations(gt)
print("fixations of the ground truth (col, row):", fix.points)

# Negatives for shuffled AUC come from other "videos": here a loose
# cloud around the centre, which is where real drivers look most.
rng = np.random.default_rng(0)
others = [extract_fixations(gaussian_map(R, *rng.normal(32, 6, 2), 5.0)) for _ in range(20)]

candidates = {
    "perfect": gt,
    "one blob only": gaussian_map(R, 20, 40, 5.0),
    "shifted by 6 px": np.roll(gt, 6, axis=1),
    "centre prior": gaussian_map(R, 32, 32, 12.0),
    "noise": rng.random((R, R)),
}

print()
print(f"{'prediction':<18}" + "".join(f"{m:>8}" for m in METRIC_NAMES))
for name, pred in candidates.items():
    vals = all_metrics(gt, pred, fix, others, seed=0, splits=50)
    print(f"{name:<18}" + "".join(f"{vals[m]:8.3f}" for m in METRIC_NAMES))

# KL is the only loss-like column (lower is better). The centre prior does
# reasonably on AUC-Judd but drops on shuffled AUC, since the negatives
# share its centre bias.
