"""End-to-end experiment: Monte Carlo grid, predictions, KL comparison, CSV reports."""

from __future__ import annotations

import csv
import io
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .closedloop import (
    CellResult,
    draw_trial_noise,
    gain_schedule,
    monte_carlo_grid,
    noise_model_for,
    scale_noise,
    simulate,
)
from .config import ExperimentConfig
from .controllers import CostWeights, Flavor
from .model import ReferenceTrajectory, load_reference_csv, mixed_reference
from .prediction import predict_conventional, predict_invariant, prediction_kl

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["alpha_sq", "beta_sq", "mean_cost_conv", "mean_cost_inv", "win_rate_inv", "lost_conv", "lost_inv", "trials"]
KL_HEADER = ["alpha_sq", "beta_sq", "kl_invariant", "kl_conventional"]
PREDICTION_HEADER = ["t", "flavor", "s11", "s12", "s13", "s22", "s23", "s33"]
TRIALS_HEADER = ["trial", "flavor", "cost", "lost"]
TRAJECTORY_HEADER = ["t", "x_true", "y_true", "theta_true", "x_est", "y_est", "theta_est", "x_ref", "y_ref"]
_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
FLAVOR_TAG = {Flavor.INVARIANT: "inv", Flavor.CONVENTIONAL: "conv"}


def fmt(v) -> str:
    """Locale-independent round-trip formatting."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def cell_tag(alpha_sq: float, beta_sq: float) -> str:
    return f"a{alpha_sq:g}_b{beta_sq:g}"


@dataclass
class CellKL:
    alpha_sq: float
    beta_sq: float
    kl_invariant: float
    kl_conventional: float
    kl_invariant_avg: float | None = None
    kl_conventional_avg: float | None = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    reference: ReferenceTrajectory
    cells: list[CellResult]
    kl: list[CellKL]
    files: list[Path]


def build_reference(cfg: ExperimentConfig) -> ReferenceTrajectory:
    if cfg.reference_csv:
        return load_reference_csv(cfg.reference_csv)
    return mixed_reference(cfg.tau, cfg.segments)


def build_weights(cfg: ExperimentConfig) -> CostWeights:
    return CostWeights(np.diag(cfg.C_diag), np.diag(cfg.D_diag))


def _predictions(cfg, ref, weights, schedules, a2, b2):
    noise = noise_model_for(np.diag(cfg.M_diag), cfg.lam, b2)
    P0 = a2 * np.diag(cfg.P0_diag)
    inv = predict_invariant(ref, weights, noise, P0, schedules[Flavor.INVARIANT])
    conv = predict_conventional(ref, weights, noise, P0, schedules[Flavor.CONVENTIONAL])
    return inv, conv


def _kl_or_nan(cov, samples) -> float:
    # too few trials to estimate a 3x3 covariance: report nan rather than fail
    if len(samples) < 4:
        return float("nan")
    return prediction_kl(cov, samples)


def _time_averaged_kl(pred, tracking):
    return float(np.mean([_kl_or_nan(pred.covariances[t], tracking[:, t]) for t in range(1, tracking.shape[1])]))


def compute(cfg: ExperimentConfig, threads: int = 1):
    """Run the grid and predictions without touching the filesystem."""
    ref = build_reference(cfg)
    weights = build_weights(cfg)
    cells = monte_carlo_grid(
        ref,
        weights,
        np.diag(cfg.P0_diag),
        np.diag(cfg.M_diag),
        cfg.lam,
        grid=cfg.grid,
        trials_per_cell=cfg.trials_per_cell,
        base_seed=cfg.base_seed,
        workers=threads,
        record_tracking=cfg.time_averaged_kl,
    )
    schedules = {f: gain_schedule(f, ref, weights) for f in Flavor}
    kl, figure_predictions = [], None
    for cell in cells:
        a2, b2 = cell.summary.alpha_sq, cell.summary.beta_sq
        inv, conv = _predictions(cfg, ref, weights, schedules, a2, b2)
        entry = CellKL(
            a2,
            b2,
            _kl_or_nan(inv.final, cell.invariant.final_error),
            _kl_or_nan(conv.final, cell.conventional.final_error),
        )
        if cfg.time_averaged_kl:
            entry.kl_invariant_avg = _time_averaged_kl(inv, cell.invariant.tracking_errors)
            entry.kl_conventional_avg = _time_averaged_kl(conv, cell.conventional.tracking_errors)
        kl.append(entry)
        if (a2, b2) == tuple(cfg.prediction_cell):
            figure_predictions = (inv, conv)
    return ref, weights, schedules, cells, kl, figure_predictions


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    path.write_text(buf.getvalue())


def _trajectory_rows(cfg, ref, weights, schedules, flavor, trial):
    a2, b2 = cfg.prediction_cell
    P0 = a2 * np.diag(cfg.P0_diag)
    noise = noise_model_for(np.diag(cfg.M_diag), cfg.lam, b2)
    std = draw_trial_noise(cfg.base_seed, [trial], ref.n)
    offset, proc, meas = scale_noise(std, P0, noise)
    res = simulate(flavor, ref, schedules[flavor], weights, P0, noise, offset, proc, meas, record=True)
    true, est = res.true_states[0], res.estimates[0]
    for t in range(ref.n + 1):
        yield [t, *true[t], *est[t], ref.poses[t, 0], ref.poses[t, 1]]


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentReport:
    """Run everything and write the reports into `out_dir` (default: cfg.output_dir).

    Files are staged in a scratch directory and only moved into place once
    every file has been written, so a failure leaves no partial report.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %d cells x %d trials on %d worker(s)", len(cfg.grid), cfg.trials_per_cell, threads)
    ref, weights, schedules, cells, kl, preds = compute(cfg, threads)

    stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    try:
        _write_csv(
            stage / "summary.csv",
            SUMMARY_HEADER,
            (
                [s.alpha_sq, s.beta_sq, s.mean_cost_conv, s.mean_cost_inv, s.win_rate_inv, s.lost_conv, s.lost_inv, s.trials]
                for s in (c.summary for c in cells)
            ),
        )
        _write_csv(stage / "kl.csv", KL_HEADER, ([k.alpha_sq, k.beta_sq, k.kl_invariant, k.kl_conventional] for k in kl))
        if cfg.time_averaged_kl:
            _write_csv(
                stage / "kl_time_averaged.csv",
                KL_HEADER,
                ([k.alpha_sq, k.beta_sq, k.kl_invariant_avg, k.kl_conventional_avg] for k in kl),
            )
        for pred in preds:
            tag = FLAVOR_TAG[pred.flavor]
            _write_csv(
                stage / f"prediction_{tag}.csv",
                PREDICTION_HEADER,
                ([t, pred.flavor.value, *(S[i, j] for i, j in _UPPER)] for t, S in enumerate(pred.covariances)),
            )
        if cfg.log_trials:
            for cell in cells:
                s = cell.summary
                rows = []
                for i in range(s.trials):
                    rows.append([i, Flavor.CONVENTIONAL.value, cell.conventional.cost[i], bool(cell.conventional.lost[i])])
                    rows.append([i, Flavor.INVARIANT.value, cell.invariant.cost[i], bool(cell.invariant.lost[i])])
                _write_csv(stage / f"trials_{cell_tag(s.alpha_sq, s.beta_sq)}.csv", TRIALS_HEADER, rows)
        if cfg.dump_trajectory is not None:
            for flavor in Flavor:
                _write_csv(
                    stage / f"trajectory_{FLAVOR_TAG[flavor]}_{cfg.dump_trajectory}.csv",
                    TRAJECTORY_HEADER,
                    _trajectory_rows(cfg, ref, weights, schedules, flavor, cfg.dump_trajectory),
                )
        files = []
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
            files.append(out / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return ExperimentReport(cfg, ref, cells, kl, files)


def format_table(report: ExperimentReport) -> str:
    lines = [
        f"{'alpha^2':>8} {'beta^2':>8} {'cost conv':>12} {'cost inv':>12} {'inv wins':>9} "
        f"{'lost c':>7} {'lost i':>7} {'KL inv':>10} {'KL conv':>10}"
    ]
    for cell, k in zip(report.cells, report.kl):
        s = cell.summary
        lines.append(
            f"{s.alpha_sq:>8g} {s.beta_sq:>8g} {s.mean_cost_conv:>12.4g} {s.mean_cost_inv:>12.4g} "
            f"{s.win_rate_inv:>8.1f}% {s.lost_conv:>7d} {s.lost_inv:>7d} {k.kl_invariant:>10.3g} {k.kl_conventional:>10.3g}"
        )
    return "\n".join(lines)
