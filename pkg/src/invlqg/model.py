"""Unicycle process/measurement models, noise sampling and reference paths."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Pose, normalize_angle, pose_difference

PSD_TOL = 1e-12
CONSISTENCY_TOL = 1e-9

# (duration [s], u [m/s], omega [rad/s]): straight, left arc, straight, right arc, straight
DEFAULT_SEGMENTS: tuple[tuple[float, float, float], ...] = (
    (5.0, 1.0, 0.0),
    (4.0, 1.0, 0.5),
    (5.0, 1.0, 0.0),
    (4.0, 1.0, -0.5),
    (5.0, 1.0, 0.0),
)
DEFAULT_TAU = 0.05

REFERENCE_CSV_HEADER = ["t", "x", "y", "theta", "u", "omega"]


class ControlInput(NamedTuple):
    u: float
    omega: float


class Measurement(NamedTuple):
    zx: float
    zy: float


class ReferenceFormatError(ValueError):
    pass


def check_psd(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(M)
    if w.min() < -PSD_TOL:
        raise ValueError(f"{name} is not positive semi-definite (min eigenvalue {w.min():.3g})")
    return M


def psd_sqrt(M) -> np.ndarray:
    """Return S with S @ S.T == M; Cholesky when possible, eigen-decomposition otherwise."""
    M = check_psd(M, "covariance")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class NoiseModel:
    """Process noise covariance M on (v, w) and isotropic measurement noise N = lam * I2."""

    M: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "M", check_psd(self.M, "M"))
        if self.M.shape != (2, 2):
            raise ValueError("M must be 2x2")
        if not self.lam >= 0.0:
            raise ValueError("lam must be >= 0")

    @property
    def N(self) -> np.ndarray:
        return self.lam * np.eye(2)

    def scaled(self, factor: float) -> "NoiseModel":
        return NoiseModel(factor * self.M, factor * self.lam)


def step(state, control, noise, tau: float) -> np.ndarray:
    """One step of the noisy unicycle; broadcasts over leading axes.

    Noise (v, w) is added to (u, omega) before the tau scaling.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    noise = np.asarray(noise, dtype=float)
    speed = control[..., 0] + noise[..., 0]
    th = state[..., 2]
    out = np.empty(np.broadcast_shapes(state.shape, control.shape[:-1] + (3,), noise.shape[:-1] + (3,)))
    out[..., 0] = state[..., 0] + tau * speed * np.cos(th)
    out[..., 1] = state[..., 1] + tau * speed * np.sin(th)
    out[..., 2] = normalize_angle(th + tau * (control[..., 1] + noise[..., 1]))
    return out


def measure(state, noise) -> np.ndarray:
    """Position fix (x + n_x, y + n_y); heading is not observed."""
    state = np.asarray(state, dtype=float)
    return state[..., :2] + np.asarray(noise, dtype=float)


def sample_process_noise(rng: np.random.Generator, M) -> np.ndarray:
    return psd_sqrt(M) @ rng.standard_normal(2)


def sample_measurement_noise(rng: np.random.Generator, lam: float) -> np.ndarray:
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return math.sqrt(lam) * rng.standard_normal(2)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Noise-free poses (n+1, 3) driven by controls (n, 2) at time step tau."""

    tau: float
    poses: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        controls = np.asarray(self.controls, dtype=float).reshape(-1, 2)
        if len(poses) != len(controls) + 1:
            raise ValueError("need exactly one more pose than controls")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "controls", controls)

    @property
    def n(self) -> int:
        return len(self.controls)

    @property
    def headings(self) -> np.ndarray:
        return self.poses[:, 2]

    def first_inconsistency(self, tol: float = CONSISTENCY_TOL) -> int | None:
        """Index of the first pose not reproduced by integrating the controls, or None."""
        if self.n == 0:
            return None
        nxt = step(self.poses[:-1], self.controls, np.zeros(2), self.tau)
        err = np.abs(pose_difference(nxt, self.poses[1:])).max(axis=1)
        bad = np.flatnonzero(err > tol)
        return int(bad[0]) + 1 if bad.size else None

    def transformed(self, x0: float, y0: float, theta0: float) -> "ReferenceTrajectory":
        from .geometry import transform_pose

        return ReferenceTrajectory(self.tau, transform_pose(self.poses, x0, y0, theta0), self.controls)


def generate_reference(initial, controls: Sequence, tau: float) -> ReferenceTrajectory:
    """Open-loop, noise-free integration of the unicycle from `initial`."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    poses = np.empty((len(controls) + 1, 3))
    poses[0] = Pose(*initial).as_array()
    zero = np.zeros(2)
    for t, c in enumerate(controls):
        poses[t + 1] = step(poses[t], c, zero, tau)
    return ReferenceTrajectory(tau, poses, controls)


def segment_controls(tau: float, segments) -> np.ndarray:
    blocks = []
    for i, seg in enumerate(segments):
        duration, u, omega = (float(s) for s in seg)
        if not duration > 0:
            raise ValueError(f"segment {i}: duration must be positive, got {duration}")
        steps = int(round(duration / tau))
        if steps < 1:
            raise ValueError(f"segment {i}: duration {duration} shorter than one step")
        blocks.append(np.tile([u, omega], (steps, 1)))
    return np.concatenate(blocks) if blocks else np.zeros((0, 2))


def mixed_reference(tau: float = DEFAULT_TAU, segments=DEFAULT_SEGMENTS, initial=(0.0, 0.0, 0.0)) -> ReferenceTrajectory:
    """Concatenate constant-input segments given as (duration, u, omega)."""
    return generate_reference(initial, segment_controls(tau, segments), tau)


def save_reference_csv(ref: ReferenceTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REFERENCE_CSV_HEADER)
        for t, p in enumerate(ref.poses):
            ctrl = [repr(float(c)) for c in ref.controls[t]] if t < ref.n else ["", ""]
            w.writerow([repr(t * ref.tau)] + [repr(float(v)) for v in p] + ctrl)


def load_reference_csv(path, tol: float = CONSISTENCY_TOL) -> ReferenceTrajectory:
    """Read a reference written by `save_reference_csv` and check it integrates consistently.

    The last row carries the final pose; its u/omega cells are left empty.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != REFERENCE_CSV_HEADER:
        raise ReferenceFormatError(f"expected header {','.join(REFERENCE_CSV_HEADER)}")
    body = rows[1:]
    if not body:
        raise ReferenceFormatError("no data rows")
    try:
        times = np.array([float(r[0]) for r in body])
        poses = np.array([[float(v) for v in r[1:4]] for r in body])
        controls = np.array([[float(v) for v in r[4:6]] for r in body[:-1]]).reshape(-1, 2)
    except (ValueError, IndexError) as exc:
        raise ReferenceFormatError(f"malformed row: {exc}") from None
    tau = float(times[1] - times[0]) if len(times) > 1 else DEFAULT_TAU
    if len(times) > 1 and not np.allclose(np.diff(times), tau, rtol=1e-9, atol=1e-12):
        raise ReferenceFormatError("time column is not uniformly spaced")
    ref = ReferenceTrajectory(tau, poses, controls)
    bad = ref.first_inconsistency(tol)
    if bad is not None:
        # +1 for the header line, +1 for 1-based numbering
        raise ReferenceFormatError(f"row {bad + 2}: pose does not follow from the previous row's controls")
    return ref
