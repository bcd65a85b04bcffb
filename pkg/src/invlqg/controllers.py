"""Finite-horizon LQ gain schedules for the conventional and invariant tracking laws."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .estimators import ekf_jacobians, frenet_jacobians, symmetrize
from .geometry import pose_difference, to_local_error

DEFAULT_C = np.diag([1.0, 1.0, 0.5])
DEFAULT_D = np.diag([0.1, 0.1])


class Flavor(str, Enum):
    CONVENTIONAL = "conventional"
    INVARIANT = "invariant"


@dataclass(frozen=True)
class CostWeights:
    C: np.ndarray = DEFAULT_C
    D: np.ndarray = DEFAULT_D

    def __post_init__(self):
        for name, shape in (("C", (3, 3)), ("D", (2, 2))):
            W = np.asarray(getattr(self, name), dtype=float)
            if W.shape != shape:
                raise ValueError(f"{name} must be {shape[0]}x{shape[1]}")
            if not np.allclose(W, W.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(W).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, W)


@dataclass(frozen=True)
class GainSchedule:
    gains: np.ndarray  # (n, 2, 3)
    flavor: Flavor
    cost_to_go: np.ndarray | None = None  # (n+1, 3, 3), S_0..S_n

    def __len__(self) -> int:
        return len(self.gains)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"L{i}{j}" for i in (1, 2) for j in (1, 2, 3)])
            for t, L in enumerate(self.gains):
                w.writerow([t] + [repr(float(v)) for v in L.ravel()])


def riccati_backward(A: np.ndarray, B: np.ndarray, C: np.ndarray, D: np.ndarray):
    """Standard discrete finite-horizon recursion with terminal cost-to-go S_n = C.

    A: (n, 3, 3); B: (n, 3, 2) or a single (3, 2). Returns (gains, S) where
    L_t = -(B^T S_{t+1} B + D)^-1 B^T S_{t+1} A_t and S_t = C + A^T S_{t+1} (A + B L_t).
    """
    n = len(A)
    B = np.broadcast_to(B, (n, 3, 2))
    gains = np.empty((n, 2, 3))
    S = np.empty((n + 1, 3, 3))
    S[n] = C
    for t in range(n - 1, -1, -1):
        Snext = S[t + 1]
        G = B[t].T @ Snext @ B[t] + D
        if np.linalg.cond(G) > 1e12:
            raise np.linalg.LinAlgError(f"B^T S B + D is singular at t={t}")
        gains[t] = -np.linalg.solve(G, B[t].T @ Snext @ A[t])
        S[t] = symmetrize(C + A[t].T @ Snext @ (A[t] + B[t] @ gains[t]))
    return gains, S


def riccati_conventional(ref, weights: CostWeights, tau: float | None = None) -> GainSchedule:
    """Gains for the error dynamics linearized about the reference in the global frame."""
    tau = ref.tau if tau is None else tau
    if ref.n < 1:
        raise ValueError("horizon must be at least one step")
    A, B = ekf_jacobians(ref.headings[:-1], ref.controls, tau)
    gains, S = riccati_backward(A, B, weights.C, weights.D)
    return GainSchedule(gains, Flavor.CONVENTIONAL, S)


def riccati_invariant(controls, weights: CostWeights, tau: float) -> GainSchedule:
    """Gains for the Frenet-frame error dynamics; a function of the input sequence alone."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    if len(controls) < 1:
        raise ValueError("horizon must be at least one step")
    A, B = frenet_jacobians(controls, tau)
    gains, S = riccati_backward(A, B, weights.C, weights.D)
    return GainSchedule(gains, Flavor.INVARIANT, S)


def control_conventional(L, x_hat, ref_pose, ref_input) -> np.ndarray:
    """u = u_ref + L (x_hat - x_ref), heading error wrapped."""
    e = pose_difference(x_hat, ref_pose)
    return np.asarray(ref_input, dtype=float) + (np.asarray(L) @ e[..., None])[..., 0]


def control_invariant(L, x_hat, ref_pose, ref_input) -> np.ndarray:
    """u = u_ref + L Upsilon_{-theta_ref} (x_hat - x_ref)."""
    ref_pose = np.asarray(ref_pose, dtype=float)
    e = to_local_error(pose_difference(x_hat, ref_pose), ref_pose[..., 2])
    return np.asarray(ref_input, dtype=float) + (np.asarray(L) @ e[..., None])[..., 0]
