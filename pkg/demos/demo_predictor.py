"""Masked-token prediction over a track history.

Unobserved and future slots enter the encoder as a mask token plus the
positional encoding, so their outputs depend only on what was actually
observed.  The deterministic baseline needs no weights at all.

Run:  python3 demos/demo_predictor.py
"""

import numpy as np

from smpltrack import (PredictorWeights, TrackHistory, TrackSlot, baseline_predict,
                       impute, predict)
from smpltrack.rotation import identity_rot6d

rng = np.random.default_rng(5)


def observed_slot(frame, z):
    pose6d = identity_rot6d(24) + rng.normal(size=(24, 6)) * 0.05
    return TrackSlot(frame, pose6d, np.array([0.1 * frame, 0.0, z]), observed=True)


history = TrackHistory([
    observed_slot(0, 5.0),
    observed_slot(1, 5.1),
    TrackSlot(2, identity_rot6d(24), np.zeros(3), observed=False),  # missing detection
    observed_slot(3, 5.3),
])
print("history frames:", [s.frame for s in history.slots],
      "observed:", [s.observed for s in history.slots])

weights = PredictorWeights.random(seed=0)
print(f"encoder: d_model={weights.d_model}, {weights.n_layers} layers, "
      f"{weights.n_heads} heads (random init; structure demo, not a trained model)")

# Future prediction: query mask tokens at frames 4 and 5.
pred = predict(history, weights, horizon=2)
print("predicted frames:", [int(f) for f in pred.frames])
print("predicted locations:\n", np.round(pred.locations, 3))
gram = np.einsum("hkab,hkcb->hkac", pred.poses, pred.poses)
print("decoded rotations orthonormal:", bool(np.max(np.abs(gram - np.eye(3))) < 1e-9))

# Amodal completion: fill the missing interior slot.
filled = impute(history, weights)
print("imputed frames:", [int(f) for f in filled.frames])

# Masking semantics: whatever payload sits in an unobserved slot is ignored.
garbage = TrackSlot(2, rng.normal(size=(24, 6)) + identity_rot6d(24),
                    rng.normal(size=3) * 100, observed=False)
tampered = TrackHistory([history.slots[0], history.slots[1], garbage, history.slots[3]])
same = np.array_equal(impute(history, weights).locations,
                      impute(tampered, weights).locations)
print("imputation unchanged under masked-payload tampering:", same)

# The baseline holds the last pose and extrapolates location linearly.
base = baseline_predict(history, horizon=2)
print("baseline locations:\n", np.round(base.locations, 3))
