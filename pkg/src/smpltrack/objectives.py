"""Training-objective suite: parameter, 3D keypoint, 2D keypoint and
adversarial-prior losses, with analytic gradients w.r.t. (pose in 6D form,
shape, camera translation).

The adversarial prior is factorized into 25 scorers: one per non-root
joint rotation, one for the whole body pose, one for the shape vector.
Scorers are pluggable; the reference implementation maps a per-factor
Gaussian energy through exp(-energy), so no adversarial training is
needed to obtain scores in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .body_model import BodyModel, PoseParams
from .camera import Intrinsics, project, project_jacobian
from .errors import DimensionMismatch
from .jacobian import decode_pose6d_with_jacobian, joints_with_jacobian

N_BODY_JOINTS = 23
N_FACTORS = 25  # 23 per-part + whole-body-pose + shape


def _as_rotations(pose) -> np.ndarray:
    if isinstance(pose, PoseParams):
        return pose.rotations
    return np.asarray(pose, dtype=float)


def loss_smpl(pose, shape, pose_gt, shape_gt) -> float:
    """Squared error over all rotation-matrix entries plus shape coefficients."""
    theta = _as_rotations(pose)
    theta_gt = _as_rotations(pose_gt)
    beta = np.asarray(shape, dtype=float)
    beta_gt = np.asarray(shape_gt, dtype=float)
    if theta.shape != theta_gt.shape or beta.shape != beta_gt.shape:
        raise DimensionMismatch("prediction and annotation shapes disagree")
    return float(np.sum((theta - theta_gt) ** 2) + np.sum((beta - beta_gt) ** 2))


def loss_kp3d(joints, joints_gt) -> float:
    """Mean per-joint L1 norm after root-aligning both sets to joint 0."""
    x = np.asarray(joints, dtype=float)
    x_gt = np.asarray(joints_gt, dtype=float)
    if x.shape != x_gt.shape or x.ndim != 2 or x.shape[0] != 3:
        raise DimensionMismatch("joints must both be (3, k)")
    xa = x - x[:, :1]
    ga = x_gt - x_gt[:, :1]
    return float(np.mean(np.sum(np.abs(xa - ga), axis=0)))


def loss_kp2d(projected, keypoints_gt, conf) -> float:
    """Confidence-weighted mean per-keypoint L1 pixel error."""
    x = np.asarray(projected, dtype=float)
    x_gt = np.asarray(keypoints_gt, dtype=float)
    c = np.asarray(conf, dtype=float)
    if x.shape != x_gt.shape or x.ndim != 2 or x.shape[0] != 2 or c.shape != (x.shape[1],):
        raise DimensionMismatch("projected / keypoints_gt / conf shapes disagree")
    if c.min() < 0 or c.max() > 1:
        raise ValueError("confidences must lie in [0, 1]")
    return float(np.mean(c * np.sum(np.abs(x - x_gt), axis=0)))


class FactorScorer:
    """Family of 25 per-factor scoring functions.

    part_scorers: 23 callables, each mapping one (3, 3) joint rotation to a
    score; pose_scorer maps the whole (23, 3, 3) body pose; shape_scorer
    maps the shape vector.
    """

    def __init__(self, part_scorers: Sequence[Callable[[np.ndarray], float]],
                 pose_scorer: Callable[[np.ndarray], float],
                 shape_scorer: Callable[[np.ndarray], float]):
        if len(part_scorers) != N_BODY_JOINTS:
            raise DimensionMismatch(f"expected {N_BODY_JOINTS} part scorers, got {len(part_scorers)}")
        self.part_scorers = tuple(part_scorers)
        self.pose_scorer = pose_scorer
        self.shape_scorer = shape_scorer

    def scores(self, body_pose: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """All 25 factor scores for (23, 3, 3) body pose and shape vector."""
        body_pose = np.asarray(body_pose, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if body_pose.shape != (N_BODY_JOINTS, 3, 3):
            raise DimensionMismatch(f"body_pose must be (23, 3, 3), got {body_pose.shape}")
        out = np.empty(N_FACTORS)
        for i, scorer in enumerate(self.part_scorers):
            out[i] = scorer(body_pose[i])
        out[23] = self.pose_scorer(body_pose)
        out[24] = self.shape_scorer(beta)
        if not np.all(np.isfinite(out)):
            raise ValueError("scorer produced a non-finite score")
        return out

    def score_grads(self, body_pose: np.ndarray, beta: np.ndarray):
        raise NotImplementedError("this scorer does not provide gradients")


class ConstantFactorScorer(FactorScorer):
    """Scorer returning fixed values; useful as a stub and in tests."""

    def __init__(self, values):
        values = np.broadcast_to(np.asarray(values, dtype=float), (N_FACTORS,)).copy()
        self.values = values
        super().__init__(
            part_scorers=[(lambda r, v=values[i]: v) for i in range(N_BODY_JOINTS)],
            pose_scorer=lambda tb: values[23],
            shape_scorer=lambda b: values[24],
        )

    def score_grads(self, body_pose, beta):
        scores = self.scores(body_pose, beta)
        return scores, np.zeros((N_FACTORS, N_BODY_JOINTS, 3, 3)), np.zeros((N_FACTORS, beta.shape[0]))


class GaussianFactorScorer(FactorScorer):
    """Reference scorer: per-factor diagonal Gaussian energy through exp(-e).

    Energies are means of squared standardized deviations, so scores stay
    in a usable range regardless of factor dimensionality.  Moments are
    fit from a pose/shape corpus (e.g. the synthetic generator's output).
    """

    def __init__(self, part_mean: np.ndarray, part_var: np.ndarray,
                 pose_mean: np.ndarray, pose_var: np.ndarray,
                 shape_mean: np.ndarray, shape_var: np.ndarray):
        self.part_mean = np.asarray(part_mean, dtype=float).reshape(N_BODY_JOINTS, 9)
        self.part_var = np.asarray(part_var, dtype=float).reshape(N_BODY_JOINTS, 9)
        self.pose_mean = np.asarray(pose_mean, dtype=float).reshape(-1)
        self.pose_var = np.asarray(pose_var, dtype=float).reshape(-1)
        self.shape_mean = np.asarray(shape_mean, dtype=float).reshape(-1)
        self.shape_var = np.asarray(shape_var, dtype=float).reshape(-1)
        for var in (self.part_var, self.pose_var, self.shape_var):
            if np.any(var <= 0):
                raise ValueError("variances must be positive")
        super().__init__(
            part_scorers=[(lambda r, i=i: self._part_score(i, r)) for i in range(N_BODY_JOINTS)],
            pose_scorer=self._pose_score,
            shape_scorer=self._shape_score,
        )

    @classmethod
    def fit(cls, body_poses: np.ndarray, betas: np.ndarray,
            var_floor: float = 1e-4) -> "GaussianFactorScorer":
        """Moment-match the scorers to a corpus of (n, 23, 3, 3) poses and (n, B) shapes."""
        body_poses = np.asarray(body_poses, dtype=float)
        betas = np.asarray(betas, dtype=float)
        flat = body_poses.reshape(body_poses.shape[0], N_BODY_JOINTS, 9)
        part_mean = flat.mean(axis=0)
        part_var = np.maximum(flat.var(axis=0), var_floor)
        pose_flat = flat.reshape(flat.shape[0], -1)
        shape_mean = betas.mean(axis=0)
        shape_var = np.maximum(betas.var(axis=0), var_floor)
        return cls(part_mean, part_var, pose_flat.mean(axis=0),
                   np.maximum(pose_flat.var(axis=0), var_floor), shape_mean, shape_var)

    @staticmethod
    def _gauss(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
        return float(np.exp(-0.5 * np.mean((x - mean) ** 2 / var)))

    def _part_score(self, i: int, rotmat: np.ndarray) -> float:
        return self._gauss(rotmat.reshape(9), self.part_mean[i], self.part_var[i])

    def _pose_score(self, body_pose: np.ndarray) -> float:
        return self._gauss(body_pose.reshape(-1), self.pose_mean, self.pose_var)

    def _shape_score(self, beta: np.ndarray) -> float:
        return self._gauss(beta, self.shape_mean, self.shape_var)

    def score_grads(self, body_pose: np.ndarray, beta: np.ndarray):
        """Scores plus d(score)/d(body_pose) (25, 23, 3, 3) and d/d(beta) (25, B)."""
        body_pose = np.asarray(body_pose, dtype=float)
        beta = np.asarray(beta, dtype=float)
        scores = self.scores(body_pose, beta)
        d_theta = np.zeros((N_FACTORS, N_BODY_JOINTS, 3, 3))
        d_beta = np.zeros((N_FACTORS, beta.shape[0]))
        flat = body_pose.reshape(N_BODY_JOINTS, 9)
        for i in range(N_BODY_JOINTS):
            grad = -scores[i] * (flat[i] - self.part_mean[i]) / self.part_var[i] / 9.0
            d_theta[i, i] = grad.reshape(3, 3)
        dim = self.pose_mean.shape[0]
        grad = -scores[23] * (flat.reshape(-1) - self.pose_mean) / self.pose_var / dim
        d_theta[23] = grad.reshape(N_BODY_JOINTS, 3, 3)
        d_beta[24] = -scores[24] * (beta - self.shape_mean) / self.shape_var / beta.shape[0]
        return scores, d_theta, d_beta


def loss_adv_generator(body_pose, beta, scorers: FactorScorer) -> float:
    """Generator-side adversarial loss: sum over factors of (score - 1)^2."""
    scores = scorers.scores(np.asarray(body_pose, dtype=float), np.asarray(beta, dtype=float))
    return float(np.sum((scores - 1.0) ** 2))


@dataclass(frozen=True)
class LossGradient:
    """Gradient w.r.t. pose in 6D form (k, 6), shape (B,), camera translation (3,)."""

    pose6d: np.ndarray
    beta: np.ndarray
    cam_t: np.ndarray


def _chain_rotations_to_6d(d_rotations: np.ndarray, drots: np.ndarray) -> np.ndarray:
    """Chain d(loss)/d(R_i) (k, 3, 3) through the decode tangents (k, 3, 3, 6)."""
    return np.einsum("kab,kabj->kj", d_rotations, drots)


def loss_smpl_gradient(pose6d, beta, pose_gt, shape_gt) -> LossGradient:
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    theta_gt = _as_rotations(pose_gt)
    beta_gt = np.asarray(shape_gt, dtype=float)
    rots, drots = decode_pose6d_with_jacobian(pose6d)
    d_rot = 2.0 * (rots - theta_gt)
    return LossGradient(pose6d=_chain_rotations_to_6d(d_rot, drots),
                        beta=2.0 * (beta - beta_gt), cam_t=np.zeros(3))


def _root_aligned_l1_gradient(joints: np.ndarray, joints_gt: np.ndarray) -> np.ndarray:
    """d(loss_kp3d)/d(joints) for (k, 3) joints, ignoring the kink at 0."""
    k = joints.shape[0]
    diff = (joints - joints[0]) - (joints_gt - joints_gt[0])
    sign = np.sign(diff) / k
    grad = sign.copy()
    grad[0] -= sign.sum(axis=0)
    return grad


def loss_kp3d_gradient(model: BodyModel, pose6d, beta, joints_gt) -> LossGradient:
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    joints_gt = np.asarray(joints_gt, dtype=float)
    bj = joints_with_jacobian(model, pose6d, beta)
    d_joints = _root_aligned_l1_gradient(bj.joints, joints_gt.T)
    grad = np.einsum("ka,kap->p", d_joints, bj.d_joints)
    n_pose = bj.n_pose_params
    return LossGradient(pose6d=grad[:n_pose].reshape(-1, 6), beta=grad[n_pose:],
                        cam_t=np.zeros(3))


def loss_kp2d_gradient(model: BodyModel, pose6d, beta, cam_t,
                       intrinsics: Intrinsics, keypoints_gt, conf) -> LossGradient:
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    cam_t = np.asarray(cam_t, dtype=float)
    keypoints_gt = np.asarray(keypoints_gt, dtype=float)
    conf = np.asarray(conf, dtype=float)

    bj = joints_with_jacobian(model, pose6d, beta)
    points = bj.joints.T + cam_t[:, None]
    projected = project(points, intrinsics)
    k = bj.joints.shape[0]
    d_proj = conf[None, :] * np.sign(projected - keypoints_gt) / k  # (2, k)
    pj = project_jacobian(points, intrinsics)  # (k, 2, 3)
    d_points = np.einsum("uk,kua->ka", d_proj, pj)  # (k, 3)
    grad = np.einsum("ka,kap->p", d_points, bj.d_joints)
    n_pose = bj.n_pose_params
    return LossGradient(pose6d=grad[:n_pose].reshape(-1, 6), beta=grad[n_pose:],
                        cam_t=d_points.sum(axis=0))


def loss_adv_gradient(pose6d, beta, scorers: FactorScorer) -> LossGradient:
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    rots, drots = decode_pose6d_with_jacobian(pose6d)
    scores, d_theta, d_beta = scorers.score_grads(rots[1:], beta)
    weight = 2.0 * (scores - 1.0)
    d_body = np.einsum("f,fkab->kab", weight, d_theta)  # (23, 3, 3)
    g_pose = np.zeros_like(pose6d)
    g_pose[1:] = _chain_rotations_to_6d(d_body, drots[1:])
    return LossGradient(pose6d=g_pose, beta=weight @ d_beta, cam_t=np.zeros(3))


def gradient(loss_id: str, **inputs) -> LossGradient:
    """Dispatch by loss name: 'smpl', 'kp3d', 'kp2d' or 'adv'."""
    table = {
        "smpl": loss_smpl_gradient,
        "kp3d": loss_kp3d_gradient,
        "kp2d": loss_kp2d_gradient,
        "adv": loss_adv_gradient,
    }
    if loss_id not in table:
        raise KeyError(f"unknown loss '{loss_id}'; expected one of {sorted(table)}")
    return table[loss_id](**inputs)
