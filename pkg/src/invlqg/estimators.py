"""Conventional EKF and invariant EKF for the position-measured unicycle.

A `Belief` may hold a single estimate (shape (3,)) or a batch (shape (T, 3))
with matching covariances; every routine broadcasts over the batch axis.
The IEKF covariance lives in the Frenet frame of the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import H, normalize_angle, rotate_covariance, rotate_vec2
from .model import step

MAX_INNOVATION_COND = 1e12


class Frame(str, Enum):
    GLOBAL = "global"
    FRENET = "frenet"


class SingularInnovationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Belief:
    estimate: np.ndarray
    covariance: np.ndarray
    frame: Frame = Frame.GLOBAL

    def global_covariance(self) -> np.ndarray:
        if self.frame is Frame.GLOBAL:
            return self.covariance
        return rotate_covariance(self.covariance, self.estimate[..., 2])


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def ekf_jacobians(theta_hat, control, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """df/dx and df/dm at (x_hat, u, 0)."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    control = np.asarray(control, dtype=float)
    shape = np.broadcast_shapes(theta_hat.shape, control.shape[:-1])
    c, s = np.cos(theta_hat), np.sin(theta_hat)
    u = control[..., 0]
    A = np.zeros(shape + (3, 3))
    A[..., 0, 0] = A[..., 1, 1] = A[..., 2, 2] = 1.0
    A[..., 0, 2] = -tau * u * s
    A[..., 1, 2] = tau * u * c
    B = np.zeros(shape + (3, 2))
    B[..., 0, 0] = tau * c
    B[..., 1, 0] = tau * s
    B[..., 2, 1] = tau
    return A, B


def frenet_jacobians(control, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Linearized Frenet-frame error dynamics; depends on the inputs only."""
    control = np.asarray(control, dtype=float)
    u, omega = control[..., 0], control[..., 1]
    A = np.zeros(control.shape[:-1] + (3, 3))
    A[..., 0, 0] = A[..., 1, 1] = A[..., 2, 2] = 1.0
    A[..., 0, 1] = tau * omega
    A[..., 1, 0] = -tau * omega
    A[..., 1, 2] = tau * u
    B = tau * np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    return A, B


def kalman_gain(P_prior: np.ndarray, lam: float) -> np.ndarray:
    """K = P H^T (H P H^T + lam I)^-1 with the 2x2 inverse written out."""
    a = P_prior[..., 0, 0] + lam
    b = 0.5 * (P_prior[..., 0, 1] + P_prior[..., 1, 0])
    d = P_prior[..., 1, 1] + lam
    det = a * d - b * b
    # eigenvalues of the symmetric 2x2 innovation covariance
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
    lo, hi = half_tr - disc, half_tr + disc
    if np.any(~(lo > 0)) or np.any(hi > MAX_INNOVATION_COND * lo):
        raise SingularInnovationError("innovation covariance is numerically singular")
    S_inv = np.stack([np.stack([d, -b], -1), np.stack([-b, a], -1)], -2) / det[..., None, None]
    return P_prior[..., :, :2] @ S_inv


def _posterior_covariance(P_prior, K, lam, joseph):
    I_KH = np.eye(3) - K @ H
    if joseph:
        P = I_KH @ P_prior @ np.swapaxes(I_KH, -1, -2) + lam * K @ np.swapaxes(K, -1, -2)
    else:
        P = I_KH @ P_prior
    return symmetrize(P)


def ekf_predict(belief: Belief, control, noise_model, tau: float) -> Belief:
    if belief.frame is not Frame.GLOBAL:
        raise ValueError("ekf_predict expects a global-frame belief")
    A, B = ekf_jacobians(belief.estimate[..., 2], control, tau)
    P = A @ belief.covariance @ np.swapaxes(A, -1, -2) + B @ noise_model.M @ np.swapaxes(B, -1, -2)
    x = step(belief.estimate, control, np.zeros(2), tau)
    return Belief(x, symmetrize(P), Frame.GLOBAL)


def ekf_update(belief: Belief, z, noise_model, joseph: bool = False) -> tuple[Belief, np.ndarray]:
    if belief.frame is not Frame.GLOBAL:
        raise ValueError("ekf_update expects a global-frame belief")
    K = kalman_gain(belief.covariance, noise_model.lam)
    innov = np.asarray(z, dtype=float) - belief.estimate[..., :2]
    x = belief.estimate + (K @ innov[..., None])[..., 0]
    x[..., 2] = normalize_angle(x[..., 2])
    P = _posterior_covariance(belief.covariance, K, noise_model.lam, joseph)
    return Belief(x, P, Frame.GLOBAL), K


def iekf_predict(belief: Belief, control, noise_model, tau: float) -> Belief:
    if belief.frame is not Frame.FRENET:
        raise ValueError("iekf_predict expects a Frenet-frame belief")
    A, B = frenet_jacobians(control, tau)
    P = A @ belief.covariance @ np.swapaxes(A, -1, -2) + B @ noise_model.M @ B.T
    x = step(belief.estimate, control, np.zeros(2), tau)
    return Belief(x, symmetrize(P), Frame.FRENET)


def iekf_update(belief: Belief, z, noise_model, joseph: bool = False) -> tuple[Belief, np.ndarray]:
    """Correct in the Frenet frame of the predicted heading, then map back."""
    if belief.frame is not Frame.FRENET:
        raise ValueError("iekf_update expects a Frenet-frame belief")
    K = kalman_gain(belief.covariance, noise_model.lam)
    th = belief.estimate[..., 2]
    innov_loc = rotate_vec2(-th, np.asarray(z, dtype=float) - belief.estimate[..., :2])
    corr = (K @ innov_loc[..., None])[..., 0]
    x = belief.estimate.copy()
    x[..., :2] += rotate_vec2(th, corr[..., :2])
    x[..., 2] = normalize_angle(x[..., 2] + corr[..., 2])
    P = _posterior_covariance(belief.covariance, K, noise_model.lam, joseph)
    return Belief(x, P, Frame.FRENET), K


def iekf_gain_sequence(controls, P0, noise_model, tau: float) -> np.ndarray:
    """Gains K_1..K_n of the invariant filter for applied inputs u_0..u_{n-1}.

    Nothing here looks at an estimate: the recursion is a function of the
    inputs, P0 and the noise model only.
    """
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    A, B = frenet_jacobians(controls, tau)
    BMB = B @ noise_model.M @ B.T
    P = np.asarray(P0, dtype=float)
    gains = np.empty((len(controls), 3, 2))
    for t in range(len(controls)):
        P = symmetrize(A[t] @ P @ A[t].T + BMB)
        gains[t] = kalman_gain(P, noise_model.lam)
        P = _posterior_covariance(P, gains[t], noise_model.lam, False)
    return gains
