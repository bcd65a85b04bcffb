"""A-priori covariance of (tracking error, estimation error) along a reference.

Both recursions run entirely offline from the reference, the gain schedules
and the noise levels. The invariant one stacks Frenet-frame errors
(x - x_ref, x_hat - x) and starts from [[P0, -P0], [-P0, P0]]; the
conventional one stacks global errors (x - x_ref, x_hat - x_ref) and starts
from [[P0, 0], [0, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closedloop import LAMBDA_FLOOR
from .controllers import CostWeights, Flavor, riccati_conventional, riccati_invariant
from .estimators import ekf_jacobians, frenet_jacobians, kalman_gain, symmetrize
from .geometry import H, rotate_covariance
from .model import NoiseModel, ReferenceTrajectory

REGULARIZATION = 1e-12


@dataclass(frozen=True)
class JointCovariance:
    sigma: np.ndarray  # (n+1, 6, 6)
    flavor: Flavor

    def tracking_marginal(self) -> np.ndarray:
        return self.sigma[:, :3, :3]


@dataclass(frozen=True)
class PredictedDistributionSeries:
    """Global-frame 3x3 covariance of the tracking error at every step, plus the joint series."""

    covariances: np.ndarray  # (n+1, 3, 3)
    joint: JointCovariance

    @property
    def flavor(self) -> Flavor:
        return self.joint.flavor

    @property
    def final(self) -> np.ndarray:
        return self.covariances[-1]


def _filter_gains(A, B, M, lam, P0):
    """Kalman gains K_1..K_n of the linear filter x+ = A_t x + B_t m, z = H x + n."""
    n = len(A)
    B = np.broadcast_to(B, (n, 3, 2))
    P = np.asarray(P0, dtype=float)
    gains = np.empty((n, 3, 2))
    I3 = np.eye(3)
    lam = max(lam, LAMBDA_FLOOR)
    for t in range(n):
        P = symmetrize(A[t] @ P @ A[t].T + B[t] @ M @ B[t].T)
        gains[t] = kalman_gain(P, lam)
        P = symmetrize((I3 - gains[t] @ H) @ P)
    return gains


def _propagate(sigma0, F, G, Q):
    n = len(F)
    sigma = np.empty((n + 1, 6, 6))
    sigma[0] = sigma0
    for t in range(n):
        sigma[t + 1] = symmetrize(F[t] @ sigma[t] @ F[t].T + G[t] @ Q @ G[t].T)
    return sigma


def _noise_block(noise: NoiseModel) -> np.ndarray:
    Q = np.zeros((4, 4))
    Q[:2, :2] = noise.M
    Q[2:, 2:] = noise.lam * np.eye(2)
    return Q


def predict_invariant(ref: ReferenceTrajectory, weights: CostWeights, noise: NoiseModel, P0, schedule=None) -> PredictedDistributionSeries:
    """Invariant-LQG prediction; Kalman gains use the reference-input linearization.

    `noise` is the (already scaled) noise model and P0 the initial covariance.
    """
    tau, n = ref.tau, ref.n
    if schedule is None:
        schedule = riccati_invariant(ref.controls, weights, tau)
    A, B = frenet_jacobians(ref.controls, tau)
    K = _filter_gains(A, B, noise.M, noise.lam, P0)
    L = schedule.gains
    F = np.zeros((n, 6, 6))
    G = np.zeros((n, 6, 4))
    BL = B @ L
    F[:, :3, :3] = A + BL
    F[:, :3, 3:] = BL
    F[:, 3:, 3:] = A - K @ H @ A
    G[:, :3, :2] = B
    G[:, 3:, :2] = K @ H @ B - B
    G[:, 3:, 2:] = K
    P0 = np.asarray(P0, dtype=float)
    sigma0 = np.block([[P0, -P0], [-P0, P0]])
    sigma = _propagate(sigma0, F, G, _noise_block(noise))
    glob = rotate_covariance(sigma[:, :3, :3], ref.headings)
    return PredictedDistributionSeries(symmetrize(glob), JointCovariance(sigma, Flavor.INVARIANT))


def predict_conventional(ref: ReferenceTrajectory, weights: CostWeights, noise: NoiseModel, P0, schedule=None) -> PredictedDistributionSeries:
    """Conventional-LQG prediction with observer and controller both linearized about the reference."""
    tau, n = ref.tau, ref.n
    if schedule is None:
        schedule = riccati_conventional(ref, weights)
    A, B = ekf_jacobians(ref.headings[:-1], ref.controls, tau)
    K = _filter_gains(A, B, noise.M, noise.lam, P0)
    L = schedule.gains
    BL = B @ L
    KHA = K @ H @ A
    F = np.zeros((n, 6, 6))
    G = np.zeros((n, 6, 4))
    F[:, :3, :3] = A
    F[:, :3, 3:] = BL
    F[:, 3:, :3] = KHA
    F[:, 3:, 3:] = A + BL - KHA
    G[:, :3, :2] = B
    G[:, 3:, :2] = K @ H @ B
    G[:, 3:, 2:] = K
    P0 = np.asarray(P0, dtype=float)
    sigma0 = np.zeros((6, 6))
    sigma0[:3, :3] = P0
    sigma = _propagate(sigma0, F, G, _noise_block(noise))
    return PredictedDistributionSeries(sigma[:, :3, :3].copy(), JointCovariance(sigma, Flavor.CONVENTIONAL))


def _regularized_cholesky(S, name):
    S = np.asarray(S, dtype=float)
    k = S.shape[-1]
    try:
        return np.linalg.cholesky(symmetrize(S) + REGULARIZATION * np.eye(k))
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


def gaussian_kl(mean0, cov0, mean1, cov1) -> float:
    """KL(N0 || N1)."""
    L0 = _regularized_cholesky(cov0, "cov0")
    L1 = _regularized_cholesky(cov1, "cov1")
    k = L0.shape[0]
    dm = np.asarray(mean1, dtype=float) - np.asarray(mean0, dtype=float)
    A = np.linalg.solve(L1, L0)
    y = np.linalg.solve(L1, dm)
    logdet0 = 2.0 * np.sum(np.log(np.diag(L0)))
    logdet1 = 2.0 * np.sum(np.log(np.diag(L1)))
    return 0.5 * (np.sum(A * A) + y @ y - k + logdet1 - logdet0)


def symmetric_kl(mean0, cov0, mean1, cov1) -> float:
    """Average of the two directed Gaussian KL divergences."""
    return 0.5 * (gaussian_kl(mean0, cov0, mean1, cov1) + gaussian_kl(mean1, cov1, mean0, cov0))


def empirical_gaussian(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance of rows of `samples`."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or len(X) < X.shape[1] + 1:
        raise ValueError("need at least k+1 samples of dimension k")
    return X.mean(axis=0), np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])


def prediction_kl(predicted_cov, samples) -> float:
    """Symmetric KL between the zero-mean prediction and the empirical Gaussian of `samples`."""
    mean, cov = empirical_gaussian(samples)
    return symmetric_kl(np.zeros(len(mean)), predicted_cov, mean, cov)
