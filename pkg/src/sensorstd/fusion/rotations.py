"""Quaternion helpers. Quaternions are scalar-last ``(qx, qy, qz, qw)`` and rotate body -> NED."""

from __future__ import annotations

import numpy as np

from ..exceptions import NonUnitQuaternion
from ..schema import QUATERNION_NORM_TOL


def as_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise NonUnitQuaternion(f"expected 4 finite components, got {q!r}")
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > QUATERNION_NORM_TOL:
        raise NonUnitQuaternion(f"|q| = {norm:.6g}")
    return q / norm


def quat_to_rotation(q) -> np.ndarray:
    """Direction cosine matrix C with ``v_ned = C @ v_body``."""
    x, y, z, w = as_quaternion(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_multiply(p, q) -> np.ndarray:
    """Hamilton product ``p * q`` for scalar-last quaternions."""
    px, py, pz, pw = p
    qx, qy, qz, qw = q
    return np.array([
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
        pw * qw - px * qx - py * qy - pz * qz,
    ])


def quat_conjugate(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([-x, -y, -z, w])


def rotate(q, v) -> np.ndarray:
    """Rotate ``v`` by the sandwich product ``q v q*``."""
    qv = np.array([v[0], v[1], v[2], 0.0])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[:3]


def integrate_rate(q, omega, dt: float) -> np.ndarray:
    """Propagate attitude by a body angular rate held constant over ``dt`` seconds."""
    omega = np.asarray(omega, dtype=float)
    angle = np.linalg.norm(omega) * dt
    if angle < 1e-12:
        dq = np.array([*(0.5 * omega * dt), 1.0])
    else:
        axis = omega / np.linalg.norm(omega)
        dq = np.array([*(axis * np.sin(angle / 2)), np.cos(angle / 2)])
    out = quat_multiply(q, dq)
    return out / np.linalg.norm(out)
