"""SE(2) helpers: angle wrapping, planar rotations and the Upsilon lift.

Everything here broadcasts over leading axes so the same functions serve a
single pose and a batch of Monte Carlo trials.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi

# position-extraction matrix, z = H x
H = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def normalize_angle(a):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


class Pose(NamedTuple):
    x: float
    y: float
    theta: float

    @classmethod
    def from_array(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(normalize_angle(v[2])))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, float(normalize_angle(self.theta))])


def rot2(phi) -> np.ndarray:
    """Rotation matrix R_phi, shape (..., 2, 2)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def upsilon(phi) -> np.ndarray:
    """Block operator diag(R_phi, 1), shape (..., 3, 3)."""
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(phi.shape + (3, 3))
    out[..., :2, :2] = rot2(phi)
    out[..., 2, 2] = 1.0
    return out


def rotate_vec2(phi, v) -> np.ndarray:
    """R_phi @ v for 2-vectors, broadcasting over leading axes."""
    v = np.asarray(v, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], -1)


def upsilon_apply(phi, v) -> np.ndarray:
    """Rotate the position part of a pose-error vector by phi; keep the angle part."""
    v = np.asarray(v, dtype=float)
    out = np.empty(np.broadcast_shapes(np.shape(phi) + (3,), v.shape))
    out[..., :2] = rotate_vec2(phi, v[..., :2])
    out[..., 2] = v[..., 2]
    return out


def to_local_error(error, frame_angle) -> np.ndarray:
    """Express a global-frame error in the Frenet frame of heading `frame_angle`."""
    return upsilon_apply(-np.asarray(frame_angle, dtype=float), error)


def to_global_error(error, frame_angle) -> np.ndarray:
    return upsilon_apply(frame_angle, error)


def pose_difference(a, b) -> np.ndarray:
    """a - b with the heading component wrapped; positions subtract plainly."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a - b
    d[..., 2] = normalize_angle(d[..., 2])
    return d


def rotate_covariance(P, phi) -> np.ndarray:
    """Upsilon_phi P Upsilon_{-phi}: moves a 3x3 error covariance between frames."""
    U = upsilon(phi)
    return U @ P @ np.swapaxes(U, -1, -2)


def transform_pose(pose, x0: float, y0: float, theta0: float) -> np.ndarray:
    """Apply the rigid motion (x0, y0, theta0) to pose(s): rotate then translate."""
    pose = np.asarray(pose, dtype=float)
    out = np.empty_like(pose)
    out[..., :2] = rotate_vec2(theta0, pose[..., :2]) + np.array([x0, y0])
    out[..., 2] = normalize_angle(pose[..., 2] + theta0)
    return out
