"""Conversions between 3x3 rotation matrices and the continuous 6D encoding.

A 6-vector is read as two stacked 3-vectors (a1, a2).  Gram-Schmidt turns
them into the first two columns of a rotation matrix; the third column is
their cross product, so the result always has determinant +1.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput

_EPS = 1e-8

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def identity_rot6d(n: int | None = None) -> np.ndarray:
    """6D encoding of the identity rotation, shape (6,) or (n, 6)."""
    if n is None:
        return IDENTITY_6D.copy()
    return np.tile(IDENTITY_6D, (n, 1))


def rot6d_to_rotmat(a: np.ndarray) -> np.ndarray:
    """Decode a 6-vector to a rotation matrix via Gram-Schmidt.

    Raises DegenerateInput when the first half has near-zero norm or the
    two halves are near-parallel.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (6,):
        raise ValueError(f"expected a 6-vector, got shape {a.shape}")
    a1, a2 = a[:3], a[3:]
    n1 = np.linalg.norm(a1)
    if n1 <= _EPS:
        raise DegenerateInput("first half of the 6D vector has near-zero norm")
    b1 = a1 / n1
    u = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(u)
    if n2 <= _EPS:
        raise DegenerateInput("6D vector halves are near-parallel")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def rotmat_to_rot6d(rotmat: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, stacked into a 6-vector."""
    rotmat = np.asarray(rotmat, dtype=float)
    if rotmat.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {rotmat.shape}")
    return np.concatenate([rotmat[:, 0], rotmat[:, 1]])


def rot6d_to_rotmat_batch(a: np.ndarray, degenerate_to_identity: bool = False) -> np.ndarray:
    """Decode (n, 6) to (n, 3, 3).

    With degenerate_to_identity, blocks that fail the Gram-Schmidt
    preconditions decode to the identity instead of raising; this keeps
    decoding total for arbitrary finite inputs (e.g. raw network readouts).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != 6:
        raise ValueError(f"expected shape (n, 6), got {a.shape}")
    n = a.shape[0]
    a1, a2 = a[:, :3], a[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    bad = n1 <= _EPS
    b1 = a1 / np.where(bad, 1.0, n1)[:, None]
    u = a2 - np.sum(b1 * a2, axis=1)[:, None] * b1
    n2 = np.linalg.norm(u, axis=1)
    bad |= n2 <= _EPS
    if bad.any() and not degenerate_to_identity:
        idx = int(np.flatnonzero(bad)[0])
        raise DegenerateInput(f"6D block {idx} is degenerate")
    b2 = u / np.where(n2 <= _EPS, 1.0, n2)[:, None]
    b3 = np.cross(b1, b2)
    out = np.stack([b1, b2, b3], axis=2)
    if bad.any():
        out[bad] = np.eye(3)
    return out


def rotmat_to_rot6d_batch(rotmats: np.ndarray) -> np.ndarray:
    """Encode (n, 3, 3) to (n, 6)."""
    rotmats = np.asarray(rotmats, dtype=float)
    if rotmats.ndim != 3 or rotmats.shape[1:] != (3, 3):
        raise ValueError(f"expected shape (n, 3, 3), got {rotmats.shape}")
    return np.concatenate([rotmats[:, :, 0], rotmats[:, :, 1]], axis=1)


def assert_rotation(rotmat: np.ndarray, tol: float = 1e-6) -> None:
    """Check orthonormality and unit determinant within tol; raise ValueError."""
    rotmat = np.asarray(rotmat, dtype=float)
    err = np.max(np.abs(rotmat.T @ rotmat - np.eye(3)))
    if err > tol:
        raise ValueError(f"matrix is not orthonormal (|R'R - I| = {err:.3g})")
    det = np.linalg.det(rotmat)
    if abs(det - 1.0) > tol:
        raise ValueError(f"matrix has determinant {det:.6f}, expected +1")
