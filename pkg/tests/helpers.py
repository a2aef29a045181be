"""Shared oracles for the test suite.

The finite-difference and brute-force helpers here are deliberately
independent of the library's analytic/optimized code paths.
"""

from __future__ import annotations

import itertools

import numpy as np

from smpltrack.body_model import PoseParams, ShapeParams, forward
from smpltrack.camera import project
from smpltrack.objectives import LossGradient


def flatten_gradient(grad: LossGradient) -> np.ndarray:
    return np.concatenate([grad.pose6d.reshape(-1), grad.beta, grad.cam_t])


def finite_difference_gradient(loss_fn, pose6d, beta, cam_t, step=1e-5) -> np.ndarray:
    """Central differences of loss_fn(x) over [pose6d | beta | cam_t]."""
    x0 = np.concatenate([np.asarray(pose6d).reshape(-1), np.asarray(beta),
                         np.asarray(cam_t)])
    grad = np.zeros_like(x0)
    for p in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[p] += step
        xm[p] -= step
        grad[p] = (loss_fn(xp) - loss_fn(xm)) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = max(np.max(np.abs(reference)), 1e-8)
    return float(np.max(np.abs(analytic - reference)) / scale)


def split_params(x, n_joints=24, n_shape=10):
    n_pose = 6 * n_joints
    return (x[:n_pose].reshape(n_joints, 6), x[n_pose:n_pose + n_shape],
            x[n_pose + n_shape:])


def eval_joints(model, x):
    pose6d, beta, _ = split_params(x, model.n_joints, model.n_shape)
    return forward(model, PoseParams.from_rot6d(pose6d), ShapeParams(beta)).joints


def eval_projected(model, x, intrinsics):
    pose6d, beta, cam_t = split_params(x, model.n_joints, model.n_shape)
    joints = forward(model, PoseParams.from_rot6d(pose6d), ShapeParams(beta)).joints
    return project(joints + cam_t[:, None], intrinsics)


def brute_force_assignment(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive maximum-cardinality, minimum-cost matching over finite entries.

    Enumerates row subsets and column permutations; tractable up to ~6x6.
    """
    n_rows, n_cols = cost.shape
    finite = np.isfinite(cost)
    best_pairs: list[tuple[int, int]] = []
    best_cost = 0.0
    for size in range(min(n_rows, n_cols), 0, -1):
        found = False
        for rows in itertools.combinations(range(n_rows), size):
            for cols in itertools.permutations(range(n_cols), size):
                if all(finite[r, c] for r, c in zip(rows, cols)):
                    total = sum(cost[r, c] for r, c in zip(rows, cols))
                    if not found or total < best_cost:
                        best_pairs = list(zip(rows, cols))
                        best_cost = total
                        found = True
        if found:
            return best_pairs, best_cost
    return [], 0.0
