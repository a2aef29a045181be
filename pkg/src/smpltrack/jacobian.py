"""Forward-mode derivatives of the body function.

Tangents are propagated for all parameters at once.  The parameter vector
is laid out as [pose 6D blocks (6 per joint), shape coefficients]; camera
translation never enters the body function and is chained separately by
the callers.

Because joints are a linear image of the vertices, the vertex dimension is
contracted out once per model: with A[j,k] = sum_n W[n,j] w_skin[n,k] and
C[j,k] = sum_n W[n,j] w_skin[n,k] v_posed[n],

    joints[j] = sum_k world_rot[k] @ C[j,k] + (A @ skin_trans)[j]

so both the joints and their Jacobian are evaluated in joint space, never
touching per-vertex tangent arrays.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .body_model import BodyModel, PoseParams, ShapeParams, forward
from .errors import DimensionMismatch
from .rotation import rot6d_to_rotmat


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _skew_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rot6d_jacobian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode a 6-vector and return (R, dR/da) with dR of shape (3, 3, 6).

    Differentiates the Gram-Schmidt construction: b1 = a1/|a1|,
    b2 = normalize(a2 - (b1.a2) b1), b3 = b1 x b2.
    """
    a = np.asarray(a, dtype=float)
    rotmat = rot6d_to_rotmat(a)  # validates preconditions
    a1, a2 = a[:3], a[3:]

    n1 = np.linalg.norm(a1)
    b1 = a1 / n1
    db1 = np.zeros((3, 6))
    db1[:, :3] = (np.eye(3) - np.outer(b1, b1)) / n1

    s = b1 @ a2
    ds = a2 @ db1
    ds[3:] += b1

    u = a2 - s * b1
    du = -np.outer(b1, ds) - s * db1
    du[:, 3:] += np.eye(3)

    n2 = np.linalg.norm(u)
    b2 = u / n2
    db2 = ((np.eye(3) - np.outer(b2, b2)) / n2) @ du

    db3 = -_skew(b2) @ db1 + _skew(b1) @ db2

    drot = np.empty((3, 3, 6))
    drot[:, 0, :] = db1
    drot[:, 1, :] = db2
    drot[:, 2, :] = db3
    return rotmat, drot


def decode_pose6d_with_jacobian(pose6d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched rot6d_jacobian: (k, 6) -> rotations (k, 3, 3), tangents (k, 3, 3, 6)."""
    pose6d = np.asarray(pose6d, dtype=float)
    if pose6d.ndim != 2 or pose6d.shape[1] != 6:
        raise DimensionMismatch(f"expected (k, 6) pose blocks, got {pose6d.shape}")
    k = pose6d.shape[0]
    a1, a2 = pose6d[:, :3], pose6d[:, 3:]
    eye = np.eye(3)

    n1 = np.linalg.norm(a1, axis=1)
    _check_nondegenerate(n1)
    b1 = a1 / n1[:, None]
    db1 = np.zeros((k, 3, 6))
    db1[:, :, :3] = (eye - b1[:, :, None] * b1[:, None, :]) / n1[:, None, None]

    s = np.sum(b1 * a2, axis=1)
    ds = np.einsum("kc,kcj->kj", a2, db1)
    ds[:, 3:] += b1

    u = a2 - s[:, None] * b1
    n2 = np.linalg.norm(u, axis=1)
    _check_nondegenerate(n2)
    du = -b1[:, :, None] * ds[:, None, :] - s[:, None, None] * db1
    du[:, :, 3:] += eye
    b2 = u / n2[:, None]
    proj2 = (eye - b2[:, :, None] * b2[:, None, :]) / n2[:, None, None]
    db2 = proj2 @ du

    b3 = np.cross(b1, b2)
    db3 = -_skew_batch(b2) @ db1 + _skew_batch(b1) @ db2

    rots = np.stack([b1, b2, b3], axis=2)
    drots = np.stack([db1, db2, db3], axis=2)
    return rots, drots


def _check_nondegenerate(norms: np.ndarray) -> None:
    if np.any(norms <= 1e-8):
        from .errors import DegenerateInput

        idx = int(np.flatnonzero(norms <= 1e-8)[0])
        raise DegenerateInput(f"6D block {idx} is degenerate")


class _ModelContraction:
    """Vertex-contracted tensors of one model, built once and cached.

    A:       (k, k)            sum_n W[n,j] w_skin[n,k]
    c_rest:  (k, k, 3)         contraction of the template
    c_shape: (k, k, 3, B)      contraction of the shape basis
    c_pose:  (k, k, 3, F)      contraction of the pose-blendshape basis
    dj_rest_beta: (k, 3, B)    d(rest joints)/d(beta)
    """

    def __init__(self, model: BodyModel):
        w_joint = model.joint_weight_matrix
        w_skin = model.skinning_weights
        n, k = w_joint.shape
        pair = (w_joint[:, :, None] * w_skin[:, None, :]).reshape(n, k * k)
        self.A = (w_joint.T @ w_skin)
        self.c_rest = (pair.T @ model.template).reshape(k, k, 3)
        n_shape = model.n_shape
        self.c_shape = (pair.T @ model.shape_blend.reshape(n, 3 * n_shape)).reshape(k, k, 3, n_shape)
        n_feat = 9 * (k - 1)
        self.c_pose = (pair.T @ model.pose_blend.reshape(n, 3 * n_feat)).reshape(k, k, 3, n_feat)
        self.dj_rest_beta = np.einsum("nk,nxb->kxb", w_joint, model.shape_blend)


_contraction_cache: "weakref.WeakKeyDictionary[BodyModel, _ModelContraction]" = weakref.WeakKeyDictionary()


def _contraction(model: BodyModel) -> _ModelContraction:
    cached = _contraction_cache.get(model)
    if cached is None:
        cached = _ModelContraction(model)
        _contraction_cache[model] = cached
    return cached


def joints_only(model: BodyModel, pose6d: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Fast (k, 3) joints evaluation sharing the cached vertex contractions.

    Matches joints_with_jacobian(...).joints; used where the tangents are
    not needed (e.g. candidate-step cost evaluations).
    """
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    k = model.n_joints
    con = _contraction(model)
    from .rotation import rot6d_to_rotmat_batch

    rots = rot6d_to_rotmat_batch(pose6d)
    j_rest = model.rest_joints(ShapeParams(beta))
    pose_feature = (rots[1:] - np.eye(3)).reshape(-1)
    c_mat = (con.c_rest + con.c_shape @ beta
             + (con.c_pose.reshape(-1, pose_feature.shape[0]) @ pose_feature).reshape(k, k, 3))
    world_rot = np.empty((k, 3, 3))
    skin_trans = np.empty((k, 3))
    world_rot[0] = rots[0]
    skin_trans[0] = j_rest[0] - rots[0] @ j_rest[0]
    parents = model.parents
    for i in range(1, k):
        p = parents[i]
        world_rot[i] = world_rot[p] @ rots[i]
        skin_trans[i] = world_rot[p] @ (j_rest[i] - rots[i] @ j_rest[i]) + skin_trans[p]
    return np.einsum("kab,jkb->ja", world_rot, c_mat) + con.A @ skin_trans


def root_position(model: BodyModel, rotations: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Posed root-joint position (3,) without evaluating the full mesh.

    Accepts raw (k, 3, 3) rotations; matches forward(...).root up to
    summation order.
    """
    rotations = np.asarray(rotations, dtype=float)
    beta = np.asarray(beta, dtype=float)
    k = model.n_joints
    con = _contraction(model)
    j_rest = model.rest_joints(ShapeParams(beta))
    pose_feature = (rotations[1:] - np.eye(3)).reshape(-1)
    c_row = (con.c_rest[0] + con.c_shape[0] @ beta
             + (con.c_pose[0].reshape(-1, pose_feature.shape[0]) @ pose_feature).reshape(k, 3))
    world_rot = np.empty((k, 3, 3))
    skin_trans = np.empty((k, 3))
    world_rot[0] = rotations[0]
    skin_trans[0] = j_rest[0] - rotations[0] @ j_rest[0]
    parents = model.parents
    for i in range(1, k):
        p = parents[i]
        world_rot[i] = world_rot[p] @ rotations[i]
        skin_trans[i] = world_rot[p] @ (j_rest[i] - rotations[i] @ j_rest[i]) + skin_trans[p]
    return np.einsum("kab,kb->a", world_rot, c_row) + con.A[0] @ skin_trans


@dataclass(frozen=True)
class BodyJacobian:
    """Joints with tangents w.r.t. [pose6d (6k), beta (n_shape)].

    joints:   (k, 3)
    d_joints: (k, 3, P) with P = 6k + n_shape
    """

    joints: np.ndarray
    d_joints: np.ndarray
    n_pose_params: int

    @property
    def n_params(self) -> int:
        return self.d_joints.shape[2]


def joints_with_jacobian(model: BodyModel, pose6d: np.ndarray, beta: np.ndarray) -> BodyJacobian:
    """Evaluate the body joints and their Jacobian in one forward pass."""
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    k = model.n_joints
    n_shape = model.n_shape
    if pose6d.shape != (k, 6):
        raise DimensionMismatch(f"pose6d must be ({k}, 6), got {pose6d.shape}")
    if beta.shape != (n_shape,):
        raise DimensionMismatch(f"beta must be ({n_shape},), got {beta.shape}")
    n_pose = 6 * k
    n_params = n_pose + n_shape
    parents = model.parents
    con = _contraction(model)

    rots, drots = decode_pose6d_with_jacobian(pose6d)

    j_rest = model.rest_joints(ShapeParams(beta))
    dj_rest_beta = con.dj_rest_beta

    pose_feature = (rots[1:] - np.eye(3)).reshape(-1)
    # C[j,k] = sum_n W[n,j] w_skin[n,k] v_posed[n], assembled from the cached
    # contractions of the template, shape basis and pose basis.
    c_mat = (con.c_rest + con.c_shape @ beta
             + (con.c_pose.reshape(-1, pose_feature.shape[0]) @ pose_feature).reshape(k, k, 3))

    # Forward kinematics with tangents; the skinning translation follows the
    # recursion s_i = W_p (j_i - R_i j_i) + s_p (see body_model).
    world_rot = np.empty((k, 3, 3))
    skin_trans = np.empty((k, 3))
    dworld_rot = np.zeros((k, 3, 3, n_params))
    dskin_trans = np.zeros((k, 3, n_params))

    world_rot[0] = rots[0]
    skin_trans[0] = j_rest[0] - rots[0] @ j_rest[0]
    dworld_rot[0, :, :, 0:6] = drots[0]
    dskin_trans[0, :, n_pose:] = dj_rest_beta[0] - rots[0] @ dj_rest_beta[0]
    dskin_trans[0, :, 0:6] = -np.einsum("abp,b->ap", drots[0], j_rest[0])
    for i in range(1, k):
        p = parents[i]
        bracket = j_rest[i] - rots[i] @ j_rest[i]
        dbracket = np.zeros((3, n_params))
        dbracket[:, n_pose:] = dj_rest_beta[i] - rots[i] @ dj_rest_beta[i]
        dbracket[:, 6 * i: 6 * i + 6] -= np.einsum("abp,b->ap", drots[i], j_rest[i])

        world_rot[i] = world_rot[p] @ rots[i]
        dworld_rot[i] = np.einsum("abp,bc->acp", dworld_rot[p], rots[i])
        dworld_rot[i, :, :, 6 * i: 6 * i + 6] += np.einsum("ab,bcp->acp", world_rot[p], drots[i])

        skin_trans[i] = world_rot[p] @ bracket + skin_trans[p]
        dskin_trans[i] = (np.einsum("abp,b->ap", dworld_rot[p], bracket)
                          + world_rot[p] @ dbracket + dskin_trans[p])

    joints = np.einsum("kab,jkb->ja", world_rot, c_mat) + con.A @ skin_trans

    # d(joints): rotation tangents against C, world rotations against dC,
    # and the blended skinning-translation tangents.
    d_joints = np.einsum("kabp,jkb->jap", dworld_rot, c_mat)
    d_joints += np.einsum("jk,kap->jap", con.A, dskin_trans)
    # dC has the shape basis in the beta columns ...
    d_joints[:, :, n_pose:] += np.einsum("kab,jkbB->jaB", world_rot, con.c_shape)
    # ... and per-joint pose-basis blocks mapped through the decode tangents.
    rot_cpose = np.einsum("kab,jkbf->jaf", world_rot, con.c_pose)
    for i in range(1, k):
        block = rot_cpose[:, :, 9 * (i - 1): 9 * i]
        d_joints[:, :, 6 * i: 6 * i + 6] += block @ drots[i].reshape(9, 6)

    return BodyJacobian(joints=joints, d_joints=d_joints, n_pose_params=n_pose)


def finite_difference_joints_jacobian(model: BodyModel, pose6d: np.ndarray,
                                      beta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference joint Jacobian, (k, 3, P); the slow cross-check path."""
    pose6d = np.asarray(pose6d, dtype=float)
    beta = np.asarray(beta, dtype=float)
    k = model.n_joints
    n_pose = 6 * k
    n_params = n_pose + model.n_shape

    def eval_joints(x):
        pose = PoseParams.from_rot6d(x[:n_pose].reshape(k, 6))
        shape = ShapeParams(x[n_pose:])
        return forward(model, pose, shape).joints.T  # (k, 3)

    x0 = np.concatenate([pose6d.reshape(-1), beta])
    jac = np.empty((k, 3, n_params))
    for p in range(n_params):
        xp = x0.copy()
        xp[p] += step
        xm = x0.copy()
        xm[p] -= step
        jac[:, :, p] = (eval_joints(xp) - eval_joints(xm)) / (2 * step)
    return jac
