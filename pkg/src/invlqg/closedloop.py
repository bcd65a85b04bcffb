"""Closed-loop LQG simulation (conventional and invariant) and the paired Monte Carlo harness.

Trials are simulated in vectorized batches. Every trial draws its randomness
from three private streams keyed by (base_seed, trial_index, stream_id), so
the conventional and invariant runs of trial i see identical initial offsets
and noise sequences, whatever the batching or the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controllers import CostWeights, Flavor, GainSchedule, control_conventional, control_invariant
from .controllers import riccati_conventional, riccati_invariant
from .estimators import Belief, Frame, ekf_predict, ekf_update, iekf_predict, iekf_update
from .geometry import pose_difference, to_local_error
from .model import NoiseModel, ReferenceTrajectory, measure, psd_sqrt, step

# 99.9% quantile of chi-square with 2 dof, closed form -2 ln(1 - p)
LOST_THRESHOLD = -2.0 * math.log(1.0 - 0.999)
LAMBDA_FLOOR = 1e-12
CHUNK_SIZE = 50

STREAM_INITIAL, STREAM_PROCESS, STREAM_MEASUREMENT = 0, 1, 2

DEFAULT_P0 = np.diag([0.01, 0.01, 0.02])
DEFAULT_M = np.diag([0.01, 0.01])
DEFAULT_LAMBDA = 0.01


@dataclass(frozen=True)
class TrialConfig:
    alpha_sq: float = 1.0
    beta_sq: float = 1.0
    base_P0: np.ndarray = field(default_factory=lambda: DEFAULT_P0.copy())
    base_M: np.ndarray = field(default_factory=lambda: DEFAULT_M.copy())
    base_lambda: float = DEFAULT_LAMBDA
    seed: int = 0
    trial_index: int = 0

    def __post_init__(self):
        if not (self.alpha_sq > 0 and self.beta_sq > 0):
            raise ValueError("alpha_sq and beta_sq must be positive")
        psd_sqrt(self.base_P0)
        NoiseModel(self.base_M, self.base_lambda)

    @property
    def P0(self) -> np.ndarray:
        return self.alpha_sq * np.asarray(self.base_P0, dtype=float)

    @property
    def noise(self) -> NoiseModel:
        return noise_model_for(self.base_M, self.base_lambda, self.beta_sq)


def noise_model_for(base_M, base_lambda: float, beta_sq: float) -> NoiseModel:
    return NoiseModel(beta_sq * np.asarray(base_M, dtype=float), max(beta_sq * base_lambda, LAMBDA_FLOOR))


@dataclass
class TrialResult:
    cost: float
    lost: bool
    final_error: np.ndarray  # x_n - x_ref_n, heading wrapped
    final_estimation_error: np.ndarray  # x_hat_n - x_n, heading wrapped
    nees: float
    trajectory: np.ndarray | None = None  # (n+1, 2, 3): true pose, estimate


@dataclass
class BatchResult:
    """Per-trial outputs of `simulate`, indexed along the first axis."""

    cost: np.ndarray
    lost: np.ndarray
    final_error: np.ndarray
    final_estimation_error: np.ndarray
    final_covariance: np.ndarray  # filter covariance in its own frame
    nees: np.ndarray
    tracking_errors: np.ndarray | None = None  # (T, n+1, 3) global, wrapped
    true_states: np.ndarray | None = None
    estimates: np.ndarray | None = None

    def trial(self, i: int) -> TrialResult:
        traj = None
        if self.true_states is not None:
            traj = np.stack([self.true_states[i], self.estimates[i]], axis=1)
        return TrialResult(
            float(self.cost[i]),
            bool(self.lost[i]),
            self.final_error[i].copy(),
            self.final_estimation_error[i].copy(),
            float(self.nees[i]),
            traj,
        )


@dataclass(frozen=True)
class TrialNoise:
    """Standard-normal draws for a batch of trials; scaled per cell before use."""

    initial: np.ndarray  # (T, 3)
    process: np.ndarray  # (T, n, 2)
    measurement: np.ndarray  # (T, n, 2)


def trial_rng(base_seed: int, trial_index: int, stream_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(trial_index), int(stream_id)))
    return np.random.default_rng(ss)


def draw_trial_noise(base_seed: int, trial_indices, n: int) -> TrialNoise:
    trial_indices = list(trial_indices)
    init = np.empty((len(trial_indices), 3))
    proc = np.empty((len(trial_indices), n, 2))
    meas = np.empty((len(trial_indices), n, 2))
    for k, i in enumerate(trial_indices):
        init[k] = trial_rng(base_seed, i, STREAM_INITIAL).standard_normal(3)
        proc[k] = trial_rng(base_seed, i, STREAM_PROCESS).standard_normal((n, 2))
        meas[k] = trial_rng(base_seed, i, STREAM_MEASUREMENT).standard_normal((n, 2))
    return TrialNoise(init, proc, meas)


def scale_noise(std: TrialNoise, P0, noise: NoiseModel):
    """Turn standard draws into (initial offset, process noise, measurement noise)."""
    offset = std.initial @ psd_sqrt(P0).T
    proc = std.process @ psd_sqrt(noise.M).T
    meas = math.sqrt(noise.lam) * std.measurement if noise.lam > LAMBDA_FLOOR else 0.0 * std.measurement
    return offset, proc, meas


def is_lost(true_pose, estimate, position_covariance) -> np.ndarray | bool:
    """Final-position Mahalanobis test against the 99.9% chi-square(2) quantile."""
    d = np.asarray(true_pose, dtype=float)[..., :2] - np.asarray(estimate, dtype=float)[..., :2]
    P = np.asarray(position_covariance, dtype=float) + 1e-12 * np.eye(2)
    a, b, c = P[..., 0, 0], 0.5 * (P[..., 0, 1] + P[..., 1, 0]), P[..., 1, 1]
    det = a * c - b * b
    m2 = (c * d[..., 0] ** 2 - 2 * b * d[..., 0] * d[..., 1] + a * d[..., 1] ** 2) / det
    out = m2 > LOST_THRESHOLD
    return bool(out) if np.ndim(out) == 0 else out


def mahalanobis_sq(err, cov) -> np.ndarray:
    # same tiny ridge as is_lost so degenerate zero-noise runs stay finite
    cov = np.asarray(cov, dtype=float) + 1e-12 * np.eye(np.shape(cov)[-1])
    return np.einsum("...i,...i->...", err, np.linalg.solve(cov, err[..., None])[..., 0])


def trajectory_cost(tracking_errors, input_deviations, weights: CostWeights) -> np.ndarray:
    """Sum over t of e_t C e_t^T + du_t D du_t^T along the last-but-one axis."""
    ex = np.einsum("...ti,ij,...tj->...", tracking_errors, weights.C, tracking_errors)
    eu = np.einsum("...ti,ij,...tj->...", input_deviations, weights.D, input_deviations)
    return ex + eu


def simulate(
    flavor: Flavor,
    ref: ReferenceTrajectory,
    schedule: GainSchedule,
    weights: CostWeights,
    P0,
    noise: NoiseModel,
    initial_offset,
    process_noise,
    measurement_noise,
    record: bool = False,
    record_tracking: bool = False,
) -> BatchResult:
    """Run a batch of closed-loop trials of one observer-controller flavor.

    initial_offset (T, 3) is added to the first reference pose to get the true
    start; process_noise and measurement_noise are (T, n, 2) realized samples.
    The filter starts at the reference with covariance P0 (interpreted in the
    filter's own frame).
    """
    flavor = Flavor(flavor)
    n, tau = ref.n, ref.tau
    x = np.atleast_2d(ref.poses[0] + np.asarray(initial_offset, dtype=float))
    x[:, 2] = np.pi - np.mod(np.pi - x[:, 2], 2 * np.pi)
    T = len(x)
    proc = np.broadcast_to(process_noise, (T, n, 2))
    meas = np.broadcast_to(measurement_noise, (T, n, 2))

    if flavor is Flavor.CONVENTIONAL:
        predict, update, control, frame = ekf_predict, ekf_update, control_conventional, Frame.GLOBAL
    else:
        predict, update, control, frame = iekf_predict, iekf_update, control_invariant, Frame.FRENET
    belief = Belief(np.tile(ref.poses[0], (T, 1)), np.tile(np.asarray(P0, dtype=float), (T, 1, 1)), frame)
    u = np.tile(ref.controls[0], (T, 1)) if n else np.zeros((T, 2))

    track = np.empty((T, n + 1, 3))
    du = np.zeros((T, n, 2))
    track[:, 0] = pose_difference(x, ref.poses[0])
    if record:
        true_states = np.empty((T, n + 1, 3))
        estimates = np.empty((T, n + 1, 3))
        true_states[:, 0], estimates[:, 0] = x, belief.estimate
    for t in range(1, n + 1):
        x = step(x, u, proc[:, t - 1], tau)
        belief = predict(belief, u, noise, tau)
        z = measure(x, meas[:, t - 1])
        belief, _ = update(belief, z, noise)
        track[:, t] = pose_difference(x, ref.poses[t])
        if record:
            true_states[:, t], estimates[:, t] = x, belief.estimate
        if t < n:
            u = control(schedule.gains[t], belief.estimate, ref.poses[t], ref.controls[t])
            du[:, t] = u - ref.controls[t]

    est_err = pose_difference(belief.estimate, x)
    P_global = belief.global_covariance()
    if flavor is Flavor.CONVENTIONAL:
        nees = mahalanobis_sq(est_err, belief.covariance)
    else:
        nees = mahalanobis_sq(to_local_error(est_err, x[:, 2]), belief.covariance)
    return BatchResult(
        cost=trajectory_cost(track, du, weights),
        lost=np.asarray(is_lost(x, belief.estimate, P_global[:, :2, :2]), dtype=bool).reshape(T),
        final_error=track[:, -1].copy(),
        final_estimation_error=est_err,
        final_covariance=belief.covariance,
        nees=nees,
        tracking_errors=track if record_tracking else None,
        true_states=true_states if record else None,
        estimates=estimates if record else None,
    )


def gain_schedule(flavor: Flavor, ref: ReferenceTrajectory, weights: CostWeights) -> GainSchedule:
    if Flavor(flavor) is Flavor.CONVENTIONAL:
        return riccati_conventional(ref, weights)
    return riccati_invariant(ref.controls, weights, ref.tau)


def _run_single(flavor, ref, weights, trial: TrialConfig, schedule, record) -> TrialResult:
    if schedule is None:
        schedule = gain_schedule(flavor, ref, weights)
    std = draw_trial_noise(trial.seed, [trial.trial_index], ref.n)
    offset, proc, meas = scale_noise(std, trial.P0, trial.noise)
    res = simulate(flavor, ref, schedule, weights, trial.P0, trial.noise, offset, proc, meas, record=record)
    return res.trial(0)


def run_conventional_lqg(ref, weights, trial: TrialConfig, schedule=None, record: bool = False) -> TrialResult:
    """EKF + LQ linearized about the reference, driven by the trial's own noise streams."""
    return _run_single(Flavor.CONVENTIONAL, ref, weights, trial, schedule, record)


def run_invariant_lqg(ref, weights, trial: TrialConfig, schedule=None, record: bool = False) -> TrialResult:
    """IEKF + Frenet-frame LQ, driven by the trial's own noise streams."""
    return _run_single(Flavor.INVARIANT, ref, weights, trial, schedule, record)


# -- Monte Carlo grid ---------------------------------------------------------------


@dataclass(frozen=True)
class CellSummary:
    alpha_sq: float
    beta_sq: float
    mean_cost_conv: float
    mean_cost_inv: float
    win_rate_inv: float  # percent; exact ties count half
    lost_conv: int
    lost_inv: int
    trials: int


@dataclass
class CellResult:
    summary: CellSummary
    conventional: BatchResult
    invariant: BatchResult


def win_rate(cost_inv, cost_conv) -> float:
    cost_inv, cost_conv = np.asarray(cost_inv), np.asarray(cost_conv)
    wins = np.count_nonzero(cost_inv < cost_conv) + 0.5 * np.count_nonzero(cost_inv == cost_conv)
    return 100.0 * wins / len(cost_inv)


def summarize_cell(alpha_sq, beta_sq, conv: BatchResult, inv: BatchResult) -> CellSummary:
    return CellSummary(
        float(alpha_sq),
        float(beta_sq),
        float(np.mean(conv.cost)),
        float(np.mean(inv.cost)),
        win_rate(inv.cost, conv.cost),
        int(np.count_nonzero(conv.lost)),
        int(np.count_nonzero(inv.lost)),
        len(conv.cost),
    )


def _concat(parts: list[BatchResult]) -> BatchResult:
    def cat(name):
        vals = [getattr(p, name) for p in parts]
        return None if vals[0] is None else np.concatenate(vals)

    return BatchResult(**{k: cat(k) for k in BatchResult.__dataclass_fields__})


def _chunk_task(args):
    flavor, ref, weights, schedule, P0, noise, base_seed, trials, record_tracking = args
    std = draw_trial_noise(base_seed, trials, ref.n)
    offset, proc, meas = scale_noise(std, P0, noise)
    return simulate(flavor, ref, schedule, weights, P0, noise, offset, proc, meas, record_tracking=record_tracking)


def monte_carlo_grid(
    ref: ReferenceTrajectory,
    weights: CostWeights,
    base_P0=DEFAULT_P0,
    base_M=DEFAULT_M,
    base_lambda: float = DEFAULT_LAMBDA,
    grid=((1.0, 1.0),),
    trials_per_cell: int = 500,
    base_seed: int = 0,
    workers: int = 1,
    record_tracking: bool = False,
    flavor_order=(Flavor.CONVENTIONAL, Flavor.INVARIANT),
) -> list[CellResult]:
    """Paired Monte Carlo over (alpha_sq, beta_sq) cells.

    Trials are cut into fixed-size chunks so results do not depend on `workers`.
    """
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    schedules = {f: gain_schedule(f, ref, weights) for f in Flavor}
    chunks = [list(range(s, min(s + CHUNK_SIZE, trials_per_cell))) for s in range(0, trials_per_cell, CHUNK_SIZE)]
    tasks, keys = [], []
    for c, (a2, b2) in enumerate(grid):
        P0 = a2 * np.asarray(base_P0, dtype=float)
        noise = noise_model_for(base_M, base_lambda, b2)
        for f in flavor_order:
            f = Flavor(f)
            for k, trials in enumerate(chunks):
                tasks.append((f, ref, weights, schedules[f], P0, noise, base_seed, trials, record_tracking))
                keys.append((c, f, k))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_chunk_task, tasks))
    else:
        outputs = [_chunk_task(t) for t in tasks]
    by_key = dict(zip(keys, outputs))

    cells = []
    for c, (a2, b2) in enumerate(grid):
        conv = _concat([by_key[(c, Flavor.CONVENTIONAL, k)] for k in range(len(chunks))])
        inv = _concat([by_key[(c, Flavor.INVARIANT, k)] for k in range(len(chunks))])
        cells.append(CellResult(summarize_cell(a2, b2, conv, inv), conv, inv))
    return cells
