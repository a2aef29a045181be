"""The loss suite and its verified gradients.

Run:  python3 demos/demo_objectives.py
"""

import numpy as np
from scipy.spatial.transform import Rotation

from smpltrack import (ConstantFactorScorer, GaussianFactorScorer, Intrinsics,
                       PoseParams, ShapeParams, forward, loss_adv_generator,
                       loss_kp2d, loss_kp3d, loss_smpl, make_mini_model, project)
from smpltrack.objectives import loss_kp2d_gradient
from smpltrack.rotation import identity_rot6d

model = make_mini_model(0)
intrinsics = Intrinsics(1000.0, 500.0, 500.0)
rng = np.random.default_rng(3)

pose = PoseParams.from_rot6d(identity_rot6d(24) + rng.normal(size=(24, 6)) * 0.2)
beta = rng.normal(size=10) * 0.5
pose_gt = PoseParams.from_rot6d(identity_rot6d(24) + rng.normal(size=(24, 6)) * 0.2)
beta_gt = rng.normal(size=10) * 0.5

print("parameter loss (squared error over rotations and shape):")
print(f"  vs itself: {loss_smpl(pose, beta, pose, beta):.1f}")
print(f"  vs another draw: {loss_smpl(pose, beta, pose_gt, beta_gt):.3f}")

joints = forward(model, pose, ShapeParams(beta)).joints
joints_gt = forward(model, pose_gt, ShapeParams(beta_gt)).joints
print(f"3D keypoint loss (root-aligned mean L1): {loss_kp3d(joints, joints_gt):.4f} m")
print(f"  invariant to a shared offset: "
      f"{loss_kp3d(joints + 2.0, joints_gt + 2.0):.4f} m")

cam_t = np.array([0.0, 0.0, 5.0])
projected = project(joints + cam_t[:, None], intrinsics)
target = project(joints_gt + cam_t[:, None], intrinsics)
conf = np.ones(24)
print(f"2D keypoint loss (conf-weighted mean L1): {loss_kp2d(projected, target, conf):.2f} px")

# The adversarial prior factorizes into 23 per-part scorers, one whole-pose
# scorer and one shape scorer; the generator loss pulls all scores to 1.
print("adversarial generator loss:")
print(f"  all scorers at 1.0: {loss_adv_generator(pose.body_pose, beta, ConstantFactorScorer(1.0))}")
print(f"  all scorers at 0.0: {loss_adv_generator(pose.body_pose, beta, ConstantFactorScorer(0.0))}")
corpus = Rotation.from_rotvec(rng.normal(size=(50 * 23, 3)) * 0.25).as_matrix().reshape(50, 23, 3, 3)
scorer = GaussianFactorScorer.fit(corpus, rng.normal(size=(50, 10)) * 0.5)
print(f"  Gaussian scorer fit on a 50-pose corpus: "
      f"{loss_adv_generator(pose.body_pose, beta, scorer):.3f}")

# Every loss ships an analytic gradient; spot-check one against central
# finite differences.
pose6d = pose.to_rot6d()
grad = loss_kp2d_gradient(model, pose6d, beta, cam_t, intrinsics, target, conf)
step = 1e-5
probe = (3, 2)  # joint 3, encoding component 2
pose_plus, pose_minus = pose6d.copy(), pose6d.copy()
pose_plus[probe] += step
pose_minus[probe] -= step


def value(p6d):
    j = forward(model, PoseParams.from_rot6d(p6d), ShapeParams(beta)).joints
    return loss_kp2d(project(j + cam_t[:, None], intrinsics), target, conf)


fd = (value(pose_plus) - value(pose_minus)) / (2 * step)
print(f"gradient check at pose block {probe}: analytic {grad.pose6d[probe]:+.6f}, "
      f"finite difference {fd:+.6f}")
