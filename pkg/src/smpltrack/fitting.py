"""Fit body parameters and camera translation to 2D keypoints.

Levenberg-Marquardt over (pose as 6D blocks, shape, translation) with
robustified, confidence-weighted reprojection residuals plus quadratic
pull-to-rest regularizers.  Accepted steps never increase the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .body_model import BodyModel, PoseParams, ShapeParams, forward
from .camera import Intrinsics, estimate_translation, project, project_jacobian
from .errors import (BehindCamera, DimensionMismatch, InsufficientConstraints,
                     NumericalFailure)
from .jacobian import joints_only, joints_with_jacobian
from .rotation import identity_rot6d

MIN_VALID_KEYPOINTS = 6


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 100
    tol: float = 1e-8               # stop when an accepted step decreases cost less than this
    damping_init: float = 1e-3
    damping_factor: float = 10.0
    damping_max: float = 1e8
    w_kp2d: float = 1.0
    w_pose_reg: float = 1e-3
    w_shape_reg: float = 1e-2
    robust_sigma_px: float = 100.0  # Geman-McClure saturation scale

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("w_kp2d", "w_pose_reg", "w_shape_reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class FitInit:
    pose6d: np.ndarray  # (k, 6)
    beta: np.ndarray    # (n_shape,)
    cam_t: np.ndarray   # (3,)


@dataclass(frozen=True)
class FitResult:
    pose: PoseParams
    shape: ShapeParams
    cam_t: np.ndarray
    final_cost: float
    initial_cost: float
    mean_reproj_px: float
    iterations: int
    converged: bool
    cost_history: tuple[float, ...] = ()  # cost after each accepted step


def init_params(model: BodyModel, keypoints2d: np.ndarray | None = None,
                conf: np.ndarray | None = None,
                intrinsics: Intrinsics | None = None) -> FitInit:
    """Identity pose, zero shape; translation from the keypoints when given,
    else the documented default (0, 0, 5) meters."""
    pose6d = identity_rot6d(model.n_joints)
    beta = np.zeros(model.n_shape)
    cam_t = np.array([0.0, 0.0, 5.0])
    if keypoints2d is not None:
        if conf is None or intrinsics is None:
            raise ValueError("keypoints2d requires conf and intrinsics")
        rest = model.rest_joints(ShapeParams(beta)).T
        cam_t = estimate_translation(rest, np.asarray(keypoints2d, dtype=float),
                                     np.asarray(conf, dtype=float), intrinsics).translation
    return FitInit(pose6d=pose6d, beta=beta, cam_t=cam_t)


def _robustify(residuals: np.ndarray, sigma: float) -> np.ndarray:
    """Geman-McClure reweighting of (2, k) residuals.

    Maps each column r to sigma * r / sqrt(|r|^2 + sigma^2), whose squared
    norm is the saturating kernel sigma^2 |r|^2 / (|r|^2 + sigma^2).
    """
    denom = np.sqrt(np.sum(residuals**2, axis=0) + sigma**2)
    return sigma * residuals / denom


def _robustify_jacobian(residuals: np.ndarray, sigma: float) -> np.ndarray:
    """(k, 2, 2) Jacobians of the Geman-McClure map w.r.t. each residual."""
    r = residuals.T  # (k, 2)
    denom = np.sqrt(np.sum(r**2, axis=1) + sigma**2)
    outer = r[:, :, None] * r[:, None, :]
    return sigma * (np.eye(2)[None] / denom[:, None, None] - outer / denom[:, None, None] ** 3)


class _Problem:
    def __init__(self, model: BodyModel, keypoints2d: np.ndarray, conf: np.ndarray,
                 intrinsics: Intrinsics, cfg: FitConfig):
        self.model = model
        self.kp = keypoints2d
        self.conf = conf
        self.intrinsics = intrinsics
        self.cfg = cfg
        self.k = model.n_joints
        self.n_pose = 6 * self.k
        self.n_shape = model.n_shape
        self.n_params = self.n_pose + self.n_shape + 3
        self.rest6d = identity_rot6d(self.k).reshape(-1)

    def split(self, x: np.ndarray):
        pose6d = x[:self.n_pose].reshape(self.k, 6)
        beta = x[self.n_pose:self.n_pose + self.n_shape]
        cam_t = x[self.n_pose + self.n_shape:]
        return pose6d, beta, cam_t

    def _reg_residuals(self, x: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        return np.concatenate([
            np.sqrt(cfg.w_pose_reg) * (x[:self.n_pose] - self.rest6d),
            np.sqrt(cfg.w_shape_reg) * x[self.n_pose:self.n_pose + self.n_shape],
        ])

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Stacked residual vector; raises BehindCamera on infeasible depth."""
        pose6d, beta, cam_t = self.split(x)
        joints = joints_only(self.model, pose6d, beta)
        points = joints.T + cam_t[:, None]
        projected = project(points, self.intrinsics)
        scale = np.sqrt(self.cfg.w_kp2d * self.conf)
        mapped = scale * _robustify(projected - self.kp, self.cfg.robust_sigma_px)
        return np.concatenate([mapped.T.reshape(-1), self._reg_residuals(x)])

    def residuals_and_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pose6d, beta, cam_t = self.split(x)
        bj = joints_with_jacobian(self.model, pose6d, beta)
        points = bj.joints.T + cam_t[:, None]
        projected = project(points, self.intrinsics)
        pj = project_jacobian(points, self.intrinsics)  # (k, 2, 3)

        scale = np.sqrt(self.cfg.w_kp2d * self.conf)
        raw = projected - self.kp
        mapped = scale * _robustify(raw, self.cfg.robust_sigma_px)
        res = mapped.T.reshape(-1)
        # (k, 2, 3): pixel residual sensitivity to the camera-frame point.
        d_pix = scale[:, None, None] * (_robustify_jacobian(raw, self.cfg.robust_sigma_px) @ pj)
        jac = np.zeros((2 * self.k, self.n_params))
        body_cols = self.n_pose + self.n_shape
        jac[:, :body_cols] = (d_pix @ bj.d_joints).reshape(2 * self.k, body_cols)
        jac[:, body_cols:] = d_pix.reshape(2 * self.k, 3)

        n_reg = self.n_pose + self.n_shape
        reg_jac = np.zeros((n_reg, self.n_params))
        reg_jac[:self.n_pose, :self.n_pose] = np.sqrt(self.cfg.w_pose_reg) * np.eye(self.n_pose)
        reg_jac[self.n_pose:, self.n_pose:body_cols] = (
            np.sqrt(self.cfg.w_shape_reg) * np.eye(self.n_shape))
        return np.concatenate([res, self._reg_residuals(x)]), np.vstack([jac, reg_jac])

    def mean_reproj_px(self, x: np.ndarray) -> float:
        """Confidence-weighted mean Euclidean pixel error (unrobustified)."""
        pose6d, beta, cam_t = self.split(x)
        joints = forward(self.model, PoseParams.from_rot6d(pose6d), ShapeParams(beta)).joints
        projected = project(joints + cam_t[:, None], self.intrinsics)
        err = np.linalg.norm(projected - self.kp, axis=0)
        return float((self.conf * err).sum() / self.conf.sum())


def fit(keypoints2d: np.ndarray, conf: np.ndarray, intrinsics: Intrinsics,
        model: BodyModel, cfg: FitConfig | None = None,
        init: FitInit | None = None) -> FitResult:
    """Nonlinear least-squares fit of (pose, shape, translation) to keypoints."""
    cfg = cfg or FitConfig()
    keypoints2d = np.asarray(keypoints2d, dtype=float)
    conf = np.asarray(conf, dtype=float)
    k = model.n_joints
    if keypoints2d.shape != (2, k) or conf.shape != (k,):
        raise DimensionMismatch(
            f"expected keypoints (2, {k}) and conf ({k},), got {keypoints2d.shape} / {conf.shape}")
    if int((conf > 0).sum()) < MIN_VALID_KEYPOINTS:
        raise InsufficientConstraints(
            f"need at least {MIN_VALID_KEYPOINTS} keypoints with positive confidence")

    if init is None:
        init = init_params(model, keypoints2d, conf, intrinsics)
    problem = _Problem(model, keypoints2d, conf, intrinsics, cfg)
    x = np.concatenate([np.asarray(init.pose6d, dtype=float).reshape(-1),
                        np.asarray(init.beta, dtype=float),
                        np.asarray(init.cam_t, dtype=float)])
    if x.shape != (problem.n_params,):
        raise DimensionMismatch("init does not match the model's parameter sizes")

    res = problem.residuals(x)
    cost = float(res @ res)
    initial_cost = cost
    cost_history = [cost]
    damping = cfg.damping_init
    iterations = 0
    converged = False

    for iterations in range(1, cfg.max_iters + 1):
        res, jac = problem.residuals_and_jacobian(x)
        grad = jac.T @ res
        hess = jac.T @ jac
        eye = np.eye(problem.n_params)

        accepted = False
        while damping <= cfg.damping_max:
            try:
                step = np.linalg.solve(hess + damping * eye, -grad)
            except np.linalg.LinAlgError:
                damping *= cfg.damping_factor
                continue
            if np.max(np.abs(step)) < 1e-15:
                converged = True
                break
            try:
                res_new = problem.residuals(x + step)
            except BehindCamera:
                damping *= cfg.damping_factor
                continue
            cost_new = float(res_new @ res_new)
            if cost_new < cost:
                decrease = cost - cost_new
                x = x + step
                cost = cost_new
                cost_history.append(cost)
                damping = max(damping / cfg.damping_factor, 1e-12)
                accepted = True
                if decrease < cfg.tol:
                    converged = True
                break
            damping *= cfg.damping_factor

        if converged:
            break
        if not accepted:
            # The damping budget ran out.  A vanishing gradient means we sit
            # at a stationary point; anything else is a genuine failure.
            if np.max(np.abs(grad)) < 1e-10:
                converged = True
                break
            raise NumericalFailure(
                f"no acceptable step with damping up to {cfg.damping_max:g}")

    pose6d, beta, cam_t = problem.split(x)
    return FitResult(
        pose=PoseParams.from_rot6d(pose6d),
        shape=ShapeParams(beta),
        cam_t=cam_t.copy(),
        final_cost=cost,
        initial_cost=initial_cost,
        mean_reproj_px=problem.mean_reproj_px(x),
        iterations=iterations,
        converged=converged,
        cost_history=tuple(cost_history),
    )
