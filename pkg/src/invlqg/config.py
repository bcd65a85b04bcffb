"""Experiment configuration: flat `key = value` text with a default for every key.

Lines starting with `#` or `;` are comments. An empty file yields the
benchmark configuration. Validation gathers every problem before reporting.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .closedloop import DEFAULT_LAMBDA, DEFAULT_M, DEFAULT_P0
from .controllers import DEFAULT_C, DEFAULT_D
from .model import DEFAULT_SEGMENTS, DEFAULT_TAU

_SECTION = "experiment"

DEFAULT_GRID_VALUES = (1.0, 10.0, 100.0)


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentConfig:
    tau: float = DEFAULT_TAU
    segments: tuple[tuple[float, float, float], ...] = DEFAULT_SEGMENTS
    reference_csv: str | None = None
    C_diag: tuple[float, ...] = tuple(np.diag(DEFAULT_C))
    D_diag: tuple[float, ...] = tuple(np.diag(DEFAULT_D))
    P0_diag: tuple[float, ...] = tuple(np.diag(DEFAULT_P0))
    M_diag: tuple[float, ...] = tuple(np.diag(DEFAULT_M))
    lam: float = DEFAULT_LAMBDA
    alpha_sq: tuple[float, ...] = DEFAULT_GRID_VALUES
    beta_sq: tuple[float, ...] = DEFAULT_GRID_VALUES
    trials_per_cell: int = 500
    base_seed: int = 0
    output_dir: str = "results"
    figure_cell: tuple[float, float] | None = None
    log_trials: bool = False
    dump_trajectory: int | None = None
    time_averaged_kl: bool = False
    threads: int | None = None

    @property
    def grid(self) -> list[tuple[float, float]]:
        return [(a, b) for a in self.alpha_sq for b in self.beta_sq]

    @property
    def prediction_cell(self) -> tuple[float, float]:
        """Cell used for the prediction series and trajectory dumps; defaults to the noisiest."""
        return self.figure_cell if self.figure_cell is not None else (max(self.alpha_sq), max(self.beta_sq))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str) -> int | None:
    return int(text) if text.strip() else None


def _segments(text: str) -> tuple[tuple[float, float, float], ...]:
    segs = []
    for part in text.split(","):
        if not part.strip():
            continue
        fields = [float(v) for v in part.strip().split(":")]
        if len(fields) != 3:
            raise ValueError(f"segment {part.strip()!r} is not duration:u:omega")
        segs.append(tuple(fields))
    return tuple(segs)


def _cell(text: str):
    vals = _floats(text)
    if not vals:
        return None
    if len(vals) != 2:
        raise ValueError("expected alpha_sq,beta_sq")
    return vals


# key in file -> (attribute, parser)
_KEYS = {
    "tau": ("tau", float),
    "segments": ("segments", _segments),
    "reference_csv": ("reference_csv", lambda s: s.strip() or None),
    "c_diag": ("C_diag", _floats),
    "d_diag": ("D_diag", _floats),
    "p0_diag": ("P0_diag", _floats),
    "m_diag": ("M_diag", _floats),
    "lambda": ("lam", float),
    "alpha_sq": ("alpha_sq", _floats),
    "beta_sq": ("beta_sq", _floats),
    "trials_per_cell": ("trials_per_cell", int),
    "base_seed": ("base_seed", int),
    "output_dir": ("output_dir", str.strip),
    "figure_cell": ("figure_cell", _cell),
    "log_trials": ("log_trials", _bool),
    "dump_trajectory": ("dump_trajectory", _optional_int),
    "time_averaged_kl": ("time_averaged_kl", _bool),
    "threads": ("threads", _optional_int),
}


def check_config(cfg: ExperimentConfig) -> list[str]:
    errors = []
    if not cfg.tau > 0:
        errors.append("tau: must be positive")
    if cfg.reference_csv is None:
        if not cfg.segments:
            errors.append("segments: at least one segment required")
        for i, (dur, _, _) in enumerate(cfg.segments):
            if not dur > 0:
                errors.append(f"segments: segment {i} has non-positive duration")
    for key, vals, n, strict in (
        ("C_diag", cfg.C_diag, 3, True),
        ("D_diag", cfg.D_diag, 2, True),
        ("P0_diag", cfg.P0_diag, 3, False),
        ("M_diag", cfg.M_diag, 2, False),
    ):
        if len(vals) != n:
            errors.append(f"{key}: expected {n} values, got {len(vals)}")
        elif strict and min(vals) <= 0:
            errors.append(f"{key}: entries must be positive")
        elif min(vals) < 0:
            errors.append(f"{key}: entries must be >= 0")
    if not cfg.lam >= 0:
        errors.append("lambda: must be >= 0")
    for key in ("alpha_sq", "beta_sq"):
        vals = getattr(cfg, key)
        if not vals:
            errors.append(f"{key}: grid must not be empty")
        elif min(vals) <= 0:
            errors.append(f"{key}: factors must be positive")
    if cfg.trials_per_cell < 1:
        errors.append("trials_per_cell: must be >= 1")
    if cfg.base_seed < 0:
        errors.append("base_seed: must be >= 0")
    if cfg.dump_trajectory is not None and not 0 <= cfg.dump_trajectory < cfg.trials_per_cell:
        errors.append("dump_trajectory: trial id out of range")
    if cfg.threads is not None and cfg.threads < 1:
        errors.append("threads: must be >= 1")
    if cfg.figure_cell is not None and cfg.figure_cell not in cfg.grid:
        errors.append("figure_cell: not one of the grid cells")
    return errors


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; raises ConfigError listing every violation."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc.message if hasattr(exc, 'message') else exc}"]) from None
    if len(parser.sections()) != 1:
        raise ConfigError(["syntax: section headers are not allowed"])
    errors, values = [], {}
    for key, raw in parser.items(_SECTION):
        if key not in _KEYS:
            errors.append(f"{key}: unknown key")
            continue
        attr, parse = _KEYS[key]
        try:
            values[attr] = parse(raw)
        except (ValueError, TypeError) as exc:
            errors.append(f"{key}: {exc}")
    cfg = ExperimentConfig(**values)
    errors += check_config(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    return validate_config(Path(path).read_text())


def render_config(cfg: ExperimentConfig) -> str:
    """Serialize a config back to the key = value format."""

    def join(vals):
        return ",".join(repr(float(v)) for v in vals)

    lines = [
        f"tau = {cfg.tau!r}",
        "segments = " + ", ".join(":".join(repr(float(v)) for v in s) for s in cfg.segments),
        f"reference_csv = {cfg.reference_csv or ''}",
        f"c_diag = {join(cfg.C_diag)}",
        f"d_diag = {join(cfg.D_diag)}",
        f"p0_diag = {join(cfg.P0_diag)}",
        f"m_diag = {join(cfg.M_diag)}",
        f"lambda = {cfg.lam!r}",
        f"alpha_sq = {join(cfg.alpha_sq)}",
        f"beta_sq = {join(cfg.beta_sq)}",
        f"trials_per_cell = {cfg.trials_per_cell}",
        f"base_seed = {cfg.base_seed}",
        f"output_dir = {cfg.output_dir}",
        f"figure_cell = {join(cfg.figure_cell) if cfg.figure_cell else ''}",
        f"log_trials = {str(cfg.log_trials).lower()}",
        f"dump_trajectory = {'' if cfg.dump_trajectory is None else cfg.dump_trajectory}",
        f"time_averaged_kl = {str(cfg.time_averaged_kl).lower()}",
    ]
    return "\n".join(lines) + "\n"
