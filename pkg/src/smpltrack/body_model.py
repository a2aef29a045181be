"""Parametric body model: blendshapes, forward kinematics, skinning.

The model maps pose (one rotation per joint) and shape (linear blend
coefficients) to mesh vertices and 3D joints.  Joints are a fixed linear
combination of the posed vertices: X = M @ W.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsonutil
from .errors import DimensionMismatch, InvariantViolation, ParseError
from .rotation import rot6d_to_rotmat_batch, rotmat_to_rot6d_batch

DEFAULT_N_JOINTS = 24
DEFAULT_N_SHAPE = 10

# Kinematic tree of the standard 24-joint body skeleton, topologically ordered.
_PARENTS_24 = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=int,
)

# Rest joint positions (meters, y up, pelvis at the origin) used by the
# miniature test model.
_JOINTS_24 = np.array([
    [0.00, 0.00, 0.00],    # pelvis
    [0.09, -0.08, 0.00],   # left hip
    [-0.09, -0.08, 0.00],  # right hip
    [0.00, 0.11, 0.00],    # spine1
    [0.10, -0.48, 0.00],   # left knee
    [-0.10, -0.48, 0.00],  # right knee
    [0.00, 0.23, 0.00],    # spine2
    [0.11, -0.88, 0.00],   # left ankle
    [-0.11, -0.88, 0.00],  # right ankle
    [0.00, 0.33, 0.00],    # spine3
    [0.12, -0.94, 0.10],   # left foot
    [-0.12, -0.94, 0.10],  # right foot
    [0.00, 0.50, 0.00],    # neck
    [0.05, 0.42, 0.00],    # left collar
    [-0.05, 0.42, 0.00],   # right collar
    [0.00, 0.62, 0.00],    # head
    [0.17, 0.44, 0.00],    # left shoulder
    [-0.17, 0.44, 0.00],   # right shoulder
    [0.43, 0.44, 0.00],    # left elbow
    [-0.43, 0.44, 0.00],   # right elbow
    [0.68, 0.44, 0.00],    # left wrist
    [-0.68, 0.44, 0.00],   # right wrist
    [0.77, 0.44, 0.00],    # left hand
    [-0.77, 0.44, 0.00],   # right hand
])


@dataclass(frozen=True)
class ShapeParams:
    """Linear shape coefficients."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1:
            raise DimensionMismatch(f"beta must be a vector, got shape {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise InvariantViolation("beta has non-finite entries")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zero(cls, n_shape: int = DEFAULT_N_SHAPE) -> "ShapeParams":
        return cls(np.zeros(n_shape))


@dataclass(frozen=True)
class PoseParams:
    """Per-joint rotations: one global orientation plus one per non-root joint."""

    global_orient: np.ndarray
    body_pose: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.global_orient, dtype=float)
        b = np.asarray(self.body_pose, dtype=float)
        if g.shape != (3, 3):
            raise DimensionMismatch(f"global_orient must be 3x3, got {g.shape}")
        if b.ndim != 3 or b.shape[1:] != (3, 3):
            raise DimensionMismatch(f"body_pose must be (n, 3, 3), got {b.shape}")
        for name, rots in (("global_orient", g[None]), ("body_pose", b)):
            eye = np.eye(3)
            for i, r in enumerate(rots):
                if np.max(np.abs(r.T @ r - eye)) > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
                    raise InvariantViolation(f"{name}[{i}] is not a rotation matrix")
        object.__setattr__(self, "global_orient", g)
        object.__setattr__(self, "body_pose", b)

    @property
    def n_joints(self) -> int:
        return 1 + self.body_pose.shape[0]

    @property
    def rotations(self) -> np.ndarray:
        """All joint rotations stacked, shape (k, 3, 3)."""
        return np.concatenate([self.global_orient[None], self.body_pose], axis=0)

    @classmethod
    def identity(cls, n_joints: int = DEFAULT_N_JOINTS) -> "PoseParams":
        eye = np.eye(3)
        return cls(eye.copy(), np.tile(eye, (n_joints - 1, 1, 1)))

    @classmethod
    def from_rotations(cls, rotations: np.ndarray) -> "PoseParams":
        rotations = np.asarray(rotations, dtype=float)
        return cls(rotations[0], rotations[1:])

    @classmethod
    def from_rot6d(cls, pose6d: np.ndarray) -> "PoseParams":
        return cls.from_rotations(rot6d_to_rotmat_batch(np.asarray(pose6d, dtype=float)))

    def to_rot6d(self) -> np.ndarray:
        return rotmat_to_rot6d_batch(self.rotations)


@dataclass(frozen=True, eq=False)
class BodyModel:
    """All fixed tensors needed to evaluate the body function.

    Instances compare and hash by identity so they can key caches of
    derived tensors.

    template:            (N, 3) rest vertices, meters
    shape_blend:         (N, 3, n_shape) shape blendshape basis
    pose_blend:          (N, 3, 9 * (k - 1)) pose blendshape basis
    joint_weight_matrix: (N, k) vertex-to-joint regressor W, columns sum to 1
    skinning_weights:    (N, k) blend-skinning weights, rows sum to 1
    parents:             (k,) kinematic tree, parents[0] == -1, parents[i] < i
    """

    template: np.ndarray
    shape_blend: np.ndarray
    pose_blend: np.ndarray
    joint_weight_matrix: np.ndarray
    skinning_weights: np.ndarray
    parents: np.ndarray

    def __post_init__(self):
        template = np.asarray(self.template, dtype=float)
        shape_blend = np.asarray(self.shape_blend, dtype=float)
        pose_blend = np.asarray(self.pose_blend, dtype=float)
        w_joint = np.asarray(self.joint_weight_matrix, dtype=float)
        w_skin = np.asarray(self.skinning_weights, dtype=float)
        parents = np.asarray(self.parents, dtype=int)

        if template.ndim != 2 or template.shape[1] != 3:
            raise DimensionMismatch(f"template must be (N, 3), got {template.shape}")
        n = template.shape[0]
        if parents.ndim != 1:
            raise DimensionMismatch("parents must be a vector")
        k = parents.shape[0]
        if shape_blend.ndim != 3 or shape_blend.shape[:2] != (n, 3):
            raise DimensionMismatch(f"shape_blend must be (N, 3, n_shape), got {shape_blend.shape}")
        if pose_blend.shape != (n, 3, 9 * (k - 1)):
            raise DimensionMismatch(
                f"pose_blend must be (N, 3, {9 * (k - 1)}), got {pose_blend.shape}")
        if w_joint.shape != (n, k):
            raise DimensionMismatch(f"joint_weight_matrix must be (N, k), got {w_joint.shape}")
        if w_skin.shape != (n, k):
            raise DimensionMismatch(f"skinning_weights must be (N, k), got {w_skin.shape}")

        if parents[0] != -1:
            raise InvariantViolation("parents: root must be encoded as -1")
        for i in range(1, k):
            if not 0 <= parents[i] < i:
                raise InvariantViolation(f"parents: parents[{i}] = {parents[i]} breaks the tree order")
        col_sums = w_joint.sum(axis=0)
        if np.max(np.abs(col_sums - 1.0)) > 1e-8:
            raise InvariantViolation("joint_weight_matrix: columns must sum to 1")
        row_sums = w_skin.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > 1e-8:
            raise InvariantViolation("skinning_weights: rows must sum to 1")
        if w_skin.min() < 0:
            raise InvariantViolation("skinning_weights: entries must be non-negative")
        for arr, name in ((template, "template"), (shape_blend, "shape_blend"),
                          (pose_blend, "pose_blend"), (w_joint, "joint_weight_matrix"),
                          (w_skin, "skinning_weights")):
            if not np.all(np.isfinite(arr)):
                raise InvariantViolation(f"{name} has non-finite entries")

        object.__setattr__(self, "template", template)
        object.__setattr__(self, "shape_blend", shape_blend)
        object.__setattr__(self, "pose_blend", pose_blend)
        object.__setattr__(self, "joint_weight_matrix", w_joint)
        object.__setattr__(self, "skinning_weights", w_skin)
        object.__setattr__(self, "parents", parents)

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_blend.shape[2]

    def shaped_vertices(self, shape: ShapeParams) -> np.ndarray:
        """Rest vertices after applying the shape blendshapes, (N, 3)."""
        if shape.beta.shape[0] != self.n_shape:
            raise DimensionMismatch(
                f"beta has {shape.beta.shape[0]} coefficients, model expects {self.n_shape}")
        return self.template + self.shape_blend @ shape.beta

    def rest_joints(self, shape: ShapeParams) -> np.ndarray:
        """Rest joint positions for a given shape, (k, 3)."""
        return (self.shaped_vertices(shape).T @ self.joint_weight_matrix).T


@dataclass(frozen=True)
class MeshAndJoints:
    """Posed mesh (3, N) and joints (3, k); joints == mesh @ W by construction."""

    mesh: np.ndarray
    joints: np.ndarray

    @property
    def root(self) -> np.ndarray:
        return self.joints[:, 0]


def _skinning_transforms(rotations: np.ndarray, rest_joints: np.ndarray,
                         parents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Compose per-joint skinning transforms along the kinematic tree.

    Returns (k, 3, 3) world rotations and (k, 3) skinning translations, the
    translation part of each world transform after factoring out the rest
    joint position.  The recursion s_i = W_p (j_i - R_i j_i) + s_p keeps the
    translations exactly zero for the identity pose.
    """
    k = parents.shape[0]
    world_rot = np.empty((k, 3, 3))
    skin_trans = np.empty((k, 3))
    world_rot[0] = rotations[0]
    skin_trans[0] = rest_joints[0] - rotations[0] @ rest_joints[0]
    for i in range(1, k):
        p = parents[i]
        world_rot[i] = world_rot[p] @ rotations[i]
        skin_trans[i] = world_rot[p] @ (rest_joints[i] - rotations[i] @ rest_joints[i]) + skin_trans[p]
    return world_rot, skin_trans


def forward(model: BodyModel, pose: PoseParams, shape: ShapeParams) -> MeshAndJoints:
    """Evaluate the body function: shape blend, pose blend, FK, skinning.

    Pipeline: (1) shape blendshapes offset the template; (2) rest joints are
    regressed from the shaped vertices; (3) pose blendshapes driven by the
    (R - I) features of the non-root joints; (4) forward kinematics along
    the tree; (5) linear blend skinning; (6) joints from the posed mesh.
    """
    if pose.n_joints != model.n_joints:
        raise DimensionMismatch(
            f"pose has {pose.n_joints} joints, model has {model.n_joints}")
    rotations = pose.rotations
    v_shaped = model.shaped_vertices(shape)
    j_rest = (v_shaped.T @ model.joint_weight_matrix).T

    pose_feature = (rotations[1:] - np.eye(3)).reshape(-1)
    v_posed = v_shaped + model.pose_blend @ pose_feature

    world_rot, skin_trans = _skinning_transforms(rotations, j_rest, model.parents)

    vert_rot = np.einsum("nk,kab->nab", model.skinning_weights, world_rot)
    vert_trans = model.skinning_weights @ skin_trans
    verts = np.einsum("nab,nb->na", vert_rot, v_posed) + vert_trans

    mesh = verts.T
    joints = mesh @ model.joint_weight_matrix
    return MeshAndJoints(mesh=mesh, joints=joints)


def make_mini_model(seed: int, n_vertices: int = 432,
                    n_joints: int = DEFAULT_N_JOINTS,
                    n_shape: int = DEFAULT_N_SHAPE) -> BodyModel:
    """Deterministic miniature humanoid for tests and synthetic scenes.

    Vertices come in equal-sized blobs around each joint (point-symmetric,
    so the joint regressor recovers the joint centers at rest).  Half of
    each non-root blob is skinned 50/50 with the parent joint.
    """
    if n_vertices % n_joints != 0:
        raise ValueError("n_vertices must be a multiple of n_joints")
    if n_joints != DEFAULT_N_JOINTS:
        raise ValueError("the miniature model is defined for the 24-joint skeleton")
    per_joint = n_vertices // n_joints
    if per_joint % 2 != 0:
        raise ValueError("n_vertices / n_joints must be even")
    rng = np.random.default_rng(seed)

    joints = _JOINTS_24.copy()
    parents = _PARENTS_24.copy()

    template = np.empty((n_vertices, 3))
    w_joint = np.zeros((n_vertices, n_joints))
    w_skin = np.zeros((n_vertices, n_joints))
    half = per_joint // 2
    for j in range(n_joints):
        offsets = rng.normal(scale=0.06, size=(half, 3))
        block = slice(j * per_joint, (j + 1) * per_joint)
        template[block] = np.concatenate([joints[j] + offsets, joints[j] - offsets])
        w_joint[block, j] = 1.0 / per_joint
        if j == 0:
            w_skin[block, j] = 1.0
        else:
            # First third of the blob shares weight with the parent joint.
            n_blend = per_joint // 3
            rows = np.arange(j * per_joint, (j + 1) * per_joint)
            w_skin[rows[:n_blend], j] = 0.5
            w_skin[rows[:n_blend], parents[j]] = 0.5
            w_skin[rows[n_blend:], j] = 1.0

    shape_blend = rng.normal(scale=0.01, size=(n_vertices, 3, n_shape))
    # First shape direction scales the whole body, so beta[0] reads as size.
    shape_blend[:, :, 0] = 0.05 * template
    pose_blend = rng.normal(scale=0.002, size=(n_vertices, 3, 9 * (n_joints - 1)))

    return BodyModel(template=template, shape_blend=shape_blend, pose_blend=pose_blend,
                     joint_weight_matrix=w_joint, skinning_weights=w_skin, parents=parents)


_MODEL_FIELDS = ("template", "shape_blend", "pose_blend",
                 "joint_weight_matrix", "skinning_weights", "parents")


def save_model(model: BodyModel, path) -> None:
    """Write the model as a single JSON document with flat row-major arrays."""
    doc = {
        "n_vertices": int(model.n_vertices),
        "n_joints": int(model.n_joints),
        "template": model.template.reshape(-1),
        "shape_blend": model.shape_blend.reshape(-1),
        "pose_blend": model.pose_blend.reshape(-1),
        "joint_weight_matrix": model.joint_weight_matrix.reshape(-1),
        "skinning_weights": model.skinning_weights.reshape(-1),
        "parents": [int(p) for p in model.parents],
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(jsonutil.dumps(doc))
        f.write("\n")


def load_model(path) -> BodyModel:
    """Read a model file; ParseError on malformed input, InvariantViolation
    when the arrays parse but break a model invariant."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = jsonutil.loads(f.read())
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read model file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model file must contain a JSON object")
    for name in ("n_vertices", "n_joints") + _MODEL_FIELDS:
        if name not in doc:
            raise ParseError(f"model file is missing field '{name}'")
    try:
        n = int(doc["n_vertices"])
        k = int(doc["n_joints"])
        arrays = {name: np.asarray(doc[name], dtype=float) for name in _MODEL_FIELDS[:-1]}
        parents = np.asarray(doc["parents"], dtype=int)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"model file has a malformed array: {exc}") from exc

    def reshape(name: str, shape: tuple[int, ...]) -> np.ndarray:
        arr = arrays[name]
        expected = int(np.prod(shape))
        if arr.ndim != 1 or arr.size != expected:
            raise ParseError(f"field '{name}' has {arr.size} values, expected {expected}")
        return arr.reshape(shape)

    if parents.ndim != 1 or parents.size != k:
        raise ParseError(f"field 'parents' has {parents.size} values, expected {k}")
    size = arrays["shape_blend"].size
    if size % (3 * n) != 0:
        raise ParseError("field 'shape_blend' length is not a multiple of 3 * n_vertices")
    n_shape = size // (3 * n)

    return BodyModel(
        template=reshape("template", (n, 3)),
        shape_blend=reshape("shape_blend", (n, 3, n_shape)),
        pose_blend=reshape("pose_blend", (n, 3, 9 * (k - 1))),
        joint_weight_matrix=reshape("joint_weight_matrix", (n, k)),
        skinning_weights=reshape("skinning_weights", (n, k)),
        parents=parents,
    )
