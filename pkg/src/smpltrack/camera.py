"""Perspective projection and closed-form translation initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, InsufficientConstraints

Z_MIN = 1e-4


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: focal length and principal point, in pixels."""

    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError(f"focal length must be positive, got {self.focal}")

    def to_dict(self) -> dict:
        return {"focal": float(self.focal), "cx": float(self.cx), "cy": float(self.cy)}

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(focal=float(d["focal"]), cx=float(d["cx"]), cy=float(d["cy"]))


@dataclass(frozen=True)
class CameraPose:
    """Camera rotation (held at identity) and translation in meters."""

    translation: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        r = np.asarray(self.rotation, dtype=float)
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got shape {t.shape}")
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)


def project(points: np.ndarray, intrinsics: Intrinsics,
            cam: CameraPose | None = None, z_min: float = Z_MIN) -> np.ndarray:
    """Project (3, m) points to (2, m) pixels: u = f*x/z + cx, v = f*y/z + cy.

    Raises BehindCamera(i) for the first point whose camera-frame depth is
    not greater than z_min.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] != 3:
        raise ValueError(f"points must be (3, m), got shape {points.shape}")
    if cam is None:
        p = points
    else:
        p = cam.rotation @ points + cam.translation[:, None]
    z = p[2]
    behind = z <= z_min
    if behind.any():
        raise BehindCamera(int(np.flatnonzero(behind)[0]))
    u = intrinsics.focal * p[0] / z + intrinsics.cx
    v = intrinsics.focal * p[1] / z + intrinsics.cy
    return np.stack([u, v])


def project_jacobian(points_cam: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """d(pixel)/d(camera-frame point) for each point, shape (m, 2, 3)."""
    p = np.asarray(points_cam, dtype=float)
    x, y, z = p[0], p[1], p[2]
    f = intrinsics.focal
    jac = np.zeros((p.shape[1], 2, 3))
    jac[:, 0, 0] = f / z
    jac[:, 0, 2] = -f * x / z**2
    jac[:, 1, 1] = f / z
    jac[:, 1, 2] = -f * y / z**2
    return jac


def estimate_translation(joints3d: np.ndarray, keypoints2d: np.ndarray,
                         conf: np.ndarray, intrinsics: Intrinsics,
                         max_refine_steps: int = 10) -> CameraPose:
    """Recover the camera translation from 2D/3D correspondences.

    Each keypoint equation (u - cx)(Z + tz) = f (X + tx) is linear in t, so
    a weighted least-squares solve gives the exact answer for noiseless
    data; a few Gauss-Newton steps then polish the geometric error.
    """
    joints3d = np.asarray(joints3d, dtype=float)
    keypoints2d = np.asarray(keypoints2d, dtype=float)
    conf = np.asarray(conf, dtype=float)
    m = joints3d.shape[1]
    if keypoints2d.shape != (2, m) or conf.shape != (m,):
        raise ValueError("joints3d, keypoints2d and conf disagree in size")
    valid = conf > 0
    if int(valid.sum()) < 2:
        raise InsufficientConstraints("need at least 2 keypoints with positive confidence")

    x3, kp, w = joints3d[:, valid], keypoints2d[:, valid], conf[valid]
    f, cx, cy = intrinsics.focal, intrinsics.cx, intrinsics.cy
    nv = x3.shape[1]

    # Stacked linear system A t = b, two rows per keypoint.
    a_mat = np.zeros((2 * nv, 3))
    b_vec = np.zeros(2 * nv)
    du = kp[0] - cx
    dv = kp[1] - cy
    a_mat[0::2, 0] = f
    a_mat[0::2, 2] = -du
    b_vec[0::2] = du * x3[2] - f * x3[0]
    a_mat[1::2, 1] = f
    a_mat[1::2, 2] = -dv
    b_vec[1::2] = dv * x3[2] - f * x3[1]
    sw = np.sqrt(np.repeat(w, 2))
    t, *_ = np.linalg.lstsq(a_mat * sw[:, None], b_vec * sw, rcond=None)

    def residuals(t_vec):
        p = x3 + t_vec[:, None]
        if np.any(p[2] <= Z_MIN):
            return None, None
        proj = np.stack([f * p[0] / p[2] + cx, f * p[1] / p[2] + cy])
        r = ((proj - kp) * np.sqrt(w)).T.reshape(-1)
        jac = project_jacobian(p, intrinsics) * np.sqrt(w)[:, None, None]
        return r, jac.reshape(-1, 3)

    r, jac = residuals(t)
    if r is None:
        raise InsufficientConstraints("linear initialization left points behind the camera")
    cost = r @ r
    for _ in range(max_refine_steps):
        try:
            step = np.linalg.solve(jac.T @ jac, -(jac.T @ r))
        except np.linalg.LinAlgError:
            break
        # Backtrack if the full step overshoots or drops a point behind the camera.
        improved = False
        scale = 1.0
        for _ in range(8):
            r_new, jac_new = residuals(t + scale * step)
            if r_new is not None and r_new @ r_new < cost:
                t = t + scale * step
                r, jac, cost = r_new, jac_new, r_new @ r_new
                improved = True
                break
            scale *= 0.5
        if not improved or cost < 1e-20:
            break
    return CameraPose(translation=t)
