"""Pose and tracking metrics on hand-checkable inputs.

Run:  python3 demos/demo_metrics.py
"""

import numpy as np
from scipy.spatial.transform import Rotation

from smpltrack import eval_tracking, mpjpe, pa_mpjpe, pck

rng = np.random.default_rng(11)

# --- pose metrics -----------------------------------------------------------
joints_gt = rng.normal(size=(3, 24)) * 0.3
noisy = joints_gt + rng.normal(size=(3, 24)) * 0.02
print(f"20 mm noise: MPJPE {mpjpe(noisy, joints_gt):.1f} mm, "
      f"PA-MPJPE {pa_mpjpe(noisy, joints_gt):.1f} mm")

# A similarity transform is invisible to the aligned metric, glaring to the raw one.
rot = Rotation.from_euler("y", 30, degrees=True).as_matrix()
transformed = 1.2 * rot @ joints_gt + np.array([[0.5], [0.0], [1.0]])
print(f"similarity-transformed copy: MPJPE {mpjpe(transformed, joints_gt):.1f} mm, "
      f"PA-MPJPE {pa_mpjpe(transformed, joints_gt):.2e} mm")

kp_gt = rng.uniform(0, 400, size=(2, 24))
kp = kp_gt + rng.normal(size=(2, 24)) * 6.0
for tau in (0.05, 0.1):
    print(f"PCK@{tau:g} (norm 200 px): {pck(kp, kp_gt, np.ones(24), tau, 200.0):.3f}")

# --- tracking metrics -------------------------------------------------------
def box(x):
    return np.array([x, 0.0, 10.0, 20.0])

# Two ground-truth tracks over ten frames; one predicted id flips mid-way.
gt = {f: [(1, box(0)), (2, box(50))] for f in range(1, 11)}
pred = {f: [(1 if f <= 5 else 3, box(0)), (2, box(50))] for f in range(1, 11)}
m = eval_tracking(pred, gt)
print("\nid-flip scenario (2 tracks x 10 frames, one switch at frame 6):")
print(f"  IDs={m.id_switches}  MOTA={m.mota:.2f}  IDF1={m.idf1:.2f}  HOTA={m.hota:.3f}")
print(f"  by hand: MOTA = 1 - 1/20 = 0.95, IDF1 = 2*15/(2*15+5+5) = 0.75")

perfect = eval_tracking(gt, gt)
print(f"perfect tracker: IDs={perfect.id_switches}  MOTA={perfect.mota}  "
      f"IDF1={perfect.idf1}  HOTA={perfect.hota}")
empty = eval_tracking({}, gt)
print(f"empty predictions: FN={empty.false_negatives}  MOTA={empty.mota}  IDF1={empty.idf1}")
