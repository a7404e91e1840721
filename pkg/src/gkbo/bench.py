"""Monte Carlo experiment harness.

Runs repeated seeded solver runs, optionally sweeping one quantity
(dimension, leader/cluster count, or noise strength), scores each run against
the objective's planted minimizers, and writes aggregate rows to CSV with a
JSON sidecar recording the exact configuration.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .objectives import PRESET_NAMES, preset
from .pcbo import PcboConfig, run_pcbo
from .solver import RunReport, SolverConfig, run_gkbo

__all__ = [
    "CSV_HEADER",
    "SUCCESS_THRESHOLD",
    "ExperimentConfig",
    "SweepResult",
    "ExperimentSummary",
    "evaluate_success",
    "run_experiment",
    "write_results",
    "read_results",
]

log = logging.getLogger(__name__)

#: Max-norm radius within which a consensus point detects a minimizer.
SUCCESS_THRESHOLD = 0.25

CSV_HEADER = (
    "sweep_value",
    "success_rate",
    "mean_iterations",
    "mean_detected_minima",
    "repetitions",
    "base_seed",
)

_SOLVERS = ("gkbo", "pcbo")
_SWEEPS = ("none", "dimension", "n_leaders", "sigma_f")


@dataclass
class ExperimentConfig:
    """A repeatable experiment: objective, solver, repetitions, optional sweep.

    ``sweep`` is one of ``none``, ``dimension``, ``n_leaders`` (mapped to the
    baseline's cluster count when ``solver`` is ``pcbo``) or ``sigma_f``
    (mapped to the baseline's ``sigma``). Repetition ``r`` of every sweep
    value runs with seed ``base_seed + r``; the seed stored inside
    ``solver_config`` is ignored by the harness.
    """

    objective: str = "rastrigin2"
    dim: int = 2
    solver: str = "gkbo"
    solver_config: SolverConfig | PcboConfig | None = None
    n_agents: int = 600
    repetitions: int = 20
    sweep: str = "none"
    sweep_values: tuple = ()
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.solver_config is None:
            self.solver_config = SolverConfig() if self.solver == "gkbo" else PcboConfig()
        self.sweep_values = tuple(self.sweep_values)

    def validate(self) -> None:
        """Raise ValueError on any inconsistent experiment setting."""
        if self.objective not in PRESET_NAMES:
            raise ValueError(
                f"unknown objective preset {self.objective!r}; available: {', '.join(PRESET_NAMES)}"
            )
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be at least 1, got {self.dim}")
        if self.solver not in _SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; available: {', '.join(_SOLVERS)}")
        expected = SolverConfig if self.solver == "gkbo" else PcboConfig
        if not isinstance(self.solver_config, expected):
            raise ValueError(
                f"solver {self.solver!r} requires a {expected.__name__}, "
                f"got {type(self.solver_config).__name__}"
            )
        if int(self.n_agents) < 1:
            raise ValueError(f"need at least one agent, got {self.n_agents}")
        if self.solver == "gkbo" and int(self.solver_config.n_leaders) > int(self.n_agents):
            raise ValueError(
                f"n_leaders ({self.solver_config.n_leaders}) cannot exceed "
                f"the population size ({self.n_agents})"
            )
        if int(self.repetitions) < 1:
            raise ValueError(f"repetitions must be at least 1, got {self.repetitions}")
        if int(self.base_seed) < 0:
            raise ValueError(f"base_seed must be non-negative, got {self.base_seed}")
        if self.sweep not in _SWEEPS:
            raise ValueError(f"unknown sweep {self.sweep!r}; available: {', '.join(_SWEEPS)}")
        if self.sweep == "none":
            if self.sweep_values:
                raise ValueError("sweep_values must be empty when sweep is 'none'")
            return
        if not self.sweep_values:
            raise ValueError(f"sweep {self.sweep!r} needs at least one sweep value")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ValueError("sweep_values must be strictly increasing")
        if self.sweep in ("dimension", "n_leaders"):
            for value in self.sweep_values:
                if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                    raise ValueError(f"{self.sweep} sweep values must be integers, got {value!r}")
                if int(value) < 1:
                    raise ValueError(f"{self.sweep} sweep values must be at least 1, got {value}")
            if self.sweep == "n_leaders" and self.solver == "gkbo":
                if int(self.sweep_values[-1]) > int(self.n_agents):
                    raise ValueError(
                        f"n_leaders sweep value {self.sweep_values[-1]} exceeds "
                        f"the population size ({self.n_agents})"
                    )
        else:
            for value in self.sweep_values:
                if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                    raise ValueError(f"sigma_f sweep values must be numbers, got {value!r}")
                if not np.isfinite(float(value)) or float(value) < 0.0:
                    raise ValueError(
                        f"sigma_f sweep values must be finite and non-negative, got {value}"
                    )

    def to_dict(self) -> dict:
        solver_config = dataclasses.asdict(self.solver_config)
        solver_config["diffusion"] = self.solver_config.diffusion.value
        return {
            "objective": self.objective,
            "dim": int(self.dim),
            "solver": self.solver,
            "n_agents": int(self.n_agents),
            "repetitions": int(self.repetitions),
            "sweep": self.sweep,
            "sweep_values": list(self.sweep_values),
            "base_seed": int(self.base_seed),
            "solver_config": solver_config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ValueError("experiment config must be a JSON object")
        known = {field.name for field in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ValueError(f"unknown config key: {key!r}")
        solver = data.get("solver", "gkbo")
        if solver not in _SOLVERS:
            raise ValueError(f"unknown solver {solver!r}; available: {', '.join(_SOLVERS)}")
        config_cls = SolverConfig if solver == "gkbo" else PcboConfig
        raw = data.get("solver_config") or {}
        if not isinstance(raw, dict):
            raise ValueError("solver_config must be a JSON object")
        allowed = {field.name for field in dataclasses.fields(config_cls)}
        for key in raw:
            if key not in allowed:
                raise ValueError(f"unknown config key: 'solver_config.{key}'")
        kwargs = {key: value for key, value in data.items() if key != "solver_config"}
        if "sweep_values" in kwargs:
            kwargs["sweep_values"] = tuple(kwargs["sweep_values"])
        return cls(solver_config=config_cls(**raw), **kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON config: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class SweepResult:
    """Aggregates for one sweep value, plus the per-run records behind them."""

    sweep_value: object
    success_rate: float
    mean_iterations: float
    mean_detected_minima: float
    repetitions: int
    base_seed: int
    seeds: tuple
    successes: tuple
    detected: tuple
    iterations: tuple
    run_seconds: tuple
    reports: tuple


@dataclass(frozen=True)
class ExperimentSummary:
    """All sweep rows of one experiment, in sweep-value order."""

    config: ExperimentConfig
    results: tuple


def evaluate_success(
    report: RunReport, minimizers, threshold: float = SUCCESS_THRESHOLD
) -> tuple[bool, int]:
    """Score a run against the planted minimizers.

    A minimizer is detected when some final consensus point lies within
    ``threshold`` of it in the max norm; the run is a success when every
    minimizer is detected. Returns ``(success, detected_count)``.
    """
    threshold = float(threshold)
    if not np.isfinite(threshold) or threshold < 0.0:
        raise ValueError(f"threshold must be finite and non-negative, got {threshold}")
    points = np.asarray(report.final_consensus, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError(f"final consensus must be a non-empty (m, d) array, got {points.shape}")
    mins = np.atleast_2d(np.asarray(minimizers, dtype=np.float64))
    if mins.shape[1] != points.shape[1]:
        raise ValueError(
            f"dimension mismatch: consensus is {points.shape[1]}-d, "
            f"minimizers are {mins.shape[1]}-d"
        )
    gaps = np.abs(mins[:, np.newaxis, :] - points[np.newaxis, :, :]).max(axis=2).min(axis=1)
    detected = gaps <= threshold
    return bool(detected.all()), int(detected.sum())


def _sweep_setup(cfg: ExperimentConfig, value) -> tuple[int, SolverConfig | PcboConfig]:
    """Dimension and solver config for one sweep value."""
    dim = int(cfg.dim)
    solver_cfg = cfg.solver_config
    if value is None:
        return dim, solver_cfg
    if cfg.sweep == "dimension":
        dim = int(value)
    elif cfg.sweep == "n_leaders":
        if cfg.solver == "gkbo":
            solver_cfg = dataclasses.replace(solver_cfg, n_leaders=int(value))
        else:
            solver_cfg = dataclasses.replace(solver_cfg, n_clusters=int(value))
    elif cfg.sweep == "sigma_f":
        if cfg.solver == "gkbo":
            solver_cfg = dataclasses.replace(solver_cfg, sigma_f=float(value))
        else:
            solver_cfg = dataclasses.replace(solver_cfg, sigma=float(value))
    return dim, solver_cfg


def _execute_run(task) -> tuple[RunReport, float]:
    """Run one seeded solver instance; must stay module-level for pickling."""
    solver, objective, dim, solver_cfg, n_agents, seed = task
    spec = preset(objective, dim)
    cfg = dataclasses.replace(solver_cfg, seed=int(seed))
    start = time.perf_counter()
    if solver == "gkbo":
        report = run_gkbo(spec, cfg, n_agents)
    else:
        report = run_pcbo(spec, cfg, n_agents)
    return report, time.perf_counter() - start


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentSummary:
    """Run all repetitions of every sweep value and aggregate.

    ``workers`` caps the process pool; ``None`` uses every available CPU and 1
    runs inline. Results are aggregated in task order either way, so the
    summary does not depend on the worker count.
    """
    cfg.validate()
    values = list(cfg.sweep_values) if cfg.sweep != "none" else [None]
    repetitions = int(cfg.repetitions)
    base_seed = int(cfg.base_seed)

    tasks = []
    minimizers = []
    for value in values:
        dim, solver_cfg = _sweep_setup(cfg, value)
        minimizers.append(preset(cfg.objective, dim).minimizers)
        for rep in range(repetitions):
            tasks.append(
                (cfg.solver, cfg.objective, dim, solver_cfg, int(cfg.n_agents), base_seed + rep)
            )

    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, int(workers))
    if workers == 1 or len(tasks) == 1:
        outcomes = [_execute_run(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_run, tasks))

    results = []
    for index, value in enumerate(values):
        chunk = outcomes[index * repetitions : (index + 1) * repetitions]
        reports = tuple(report for report, _ in chunk)
        seconds = tuple(elapsed for _, elapsed in chunk)
        scored = [evaluate_success(report, minimizers[index]) for report in reports]
        successes = tuple(success for success, _ in scored)
        detected = tuple(count for _, count in scored)
        iterations = tuple(report.iterations for report in reports)
        result = SweepResult(
            sweep_value=value,
            success_rate=sum(successes) / repetitions,
            mean_iterations=sum(iterations) / repetitions,
            mean_detected_minima=sum(detected) / repetitions,
            repetitions=repetitions,
            base_seed=base_seed,
            seeds=tuple(base_seed + rep for rep in range(repetitions)),
            successes=successes,
            detected=detected,
            iterations=iterations,
            run_seconds=seconds,
            reports=reports,
        )
        results.append(result)
        label = "run" if value is None else f"{cfg.sweep}={value}"
        log.info(
            "%s: success_rate=%.3f mean_iterations=%.1f mean_detected=%.2f (M=%d, %.1fs)",
            label,
            result.success_rate,
            result.mean_iterations,
            result.mean_detected_minima,
            repetitions,
            sum(seconds),
        )
    return ExperimentSummary(config=cfg, results=tuple(results))


def write_results(summary: ExperimentSummary, path) -> Path:
    """Write one CSV row per sweep value, plus a JSON config sidecar.

    The sidecar lands next to the CSV with extension ``.json``. Lines use LF
    endings regardless of platform. Returns the CSV path.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for result in summary.results:
            writer.writerow(
                [
                    "" if result.sweep_value is None else result.sweep_value,
                    result.success_rate,
                    result.mean_iterations,
                    result.mean_detected_minima,
                    result.repetitions,
                    result.base_seed,
                ]
            )
    sidecar = path.with_suffix(".json")
    sidecar.write_text(summary.config.to_json() + "\n", encoding="utf-8")
    return path


def _parse_number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_results(path) -> list[dict]:
    """Read back a results CSV as a list of row dicts with parsed numbers."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected results header {header!r} in {path}")
        rows = []
        for row in reader:
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"malformed results row {row!r} in {path}")
            rows.append(
                {
                    "sweep_value": None if row[0] == "" else _parse_number(row[0]),
                    "success_rate": float(row[1]),
                    "mean_iterations": float(row[2]),
                    "mean_detected_minima": float(row[3]),
                    "repetitions": int(row[4]),
                    "base_seed": int(row[5]),
                }
            )
    return rows
