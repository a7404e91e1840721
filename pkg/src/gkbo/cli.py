"""Command line interface.

Three subcommands: ``run`` executes one solver run and prints the outcome,
``bench`` runs a Monte Carlo experiment (optionally swept) and writes CSV
results, ``compare`` runs the leader-follower solver and the clustered
baseline head to head across dimensions. Exit codes: 0 success, 1 usage or
configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .bench import (
    SUCCESS_THRESHOLD,
    ExperimentConfig,
    evaluate_success,
    run_experiment,
    write_results,
)
from .objectives import PRESET_NAMES, preset
from .pcbo import PcboConfig, run_pcbo
from .solver import RunReport, SolverConfig, run_gkbo

__all__ = ["main"]

_GKBO_ONLY = ("nu_f", "nu_l", "sigma_f", "eps", "n_leaders")
_PCBO_ONLY = ("nu", "sigma", "n_clusters")
_SHARED = ("alpha", "n_steps", "delta_stall", "j_stall", "diffusion", "init_lo", "init_hi")


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env_seed() -> int | None:
    """Seed from the GKBO_SEED environment variable, lowest precedence."""
    raw = os.environ.get("GKBO_SEED")
    if raw is None or not raw.strip():
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"GKBO_SEED must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError(f"GKBO_SEED must be non-negative, got {value}")
    return value


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver options")
    group.add_argument("--nu-f", type=float, help="follower drift strength (gkbo)")
    group.add_argument("--nu-l", type=float, help="leader drift strength (gkbo)")
    group.add_argument("--sigma-f", type=float, help="follower noise strength (gkbo)")
    group.add_argument("--eps", type=float, help="time step and transition probability (gkbo)")
    group.add_argument("--n-leaders", type=int, help="target leader count (gkbo)")
    group.add_argument("--nu", type=float, help="drift strength (pcbo)")
    group.add_argument("--sigma", type=float, help="noise strength (pcbo)")
    group.add_argument("--n-clusters", type=int, help="cluster count (pcbo)")
    group.add_argument("--alpha", type=float, help="softmax sharpness")
    group.add_argument("--n-steps", type=int, help="step budget")
    group.add_argument("--delta-stall", type=float, help="stall tolerance (max norm)")
    group.add_argument("--j-stall", type=int, help="consecutive quiet steps to stop")
    group.add_argument(
        "--diffusion", choices=("isotropic", "anisotropic"), help="noise shape"
    )
    group.add_argument("--init-lo", type=float, help="initialization box lower bound")
    group.add_argument("--init-hi", type=float, help="initialization box upper bound")


def _check_solver_flags(args, solver: str) -> None:
    wrong = _PCBO_ONLY if solver == "gkbo" else _GKBO_ONLY
    for name in wrong:
        if getattr(args, name, None) is not None:
            flag = "--" + name.replace("_", "-")
            raise ValueError(f"{flag} does not apply to the {solver!r} solver")


def _solver_overrides(args, solver: str) -> dict:
    names = (_GKBO_ONLY if solver == "gkbo" else _PCBO_ONLY) + _SHARED
    return {
        name: getattr(args, name)
        for name in names
        if getattr(args, name, None) is not None
    }


def _config_as_dict(config: SolverConfig | PcboConfig) -> dict:
    out = dataclasses.asdict(config)
    out["diffusion"] = config.diffusion.value
    return out


def _parse_number(token: str):
    try:
        return int(token)
    except ValueError:
        try:
            return float(token)
        except ValueError:
            raise ValueError(f"expected a number, got {token!r}") from None


def _parse_number_list(text: str, flag: str) -> list:
    tokens = [token.strip() for token in text.split(",") if token.strip()]
    if not tokens:
        raise ValueError(f"{flag} needs at least one comma-separated value")
    return [_parse_number(token) for token in tokens]


def _print_report(report: RunReport, minimizers, threshold: float) -> None:
    success, detected = evaluate_success(report, minimizers, threshold)
    print(f"iterations: {report.iterations}")
    print(f"stalled: {str(report.stalled).lower()}")
    print(f"evaluations: {report.evaluations}")
    print(f"leader count: {report.leader_count}")
    print(f"best value: {report.best_value}")
    print(f"consensus points ({report.final_consensus.shape[0]} distinct):")
    for row in report.final_consensus:
        print("  [" + ", ".join(f"{coord:.6f}" for coord in row) + "]")
    print(f"detected minimizers: {detected}/{minimizers.shape[0]} (threshold {threshold})")
    print(f"success: {str(success).lower()}")


def _cmd_run(args) -> int:
    solver = args.solver
    _check_solver_flags(args, solver)
    seed = args.seed if args.seed is not None else _env_seed()
    if seed is None:
        seed = 0
    overrides = _solver_overrides(args, solver)
    overrides["seed"] = int(seed)
    base = SolverConfig() if solver == "gkbo" else PcboConfig()
    config = dataclasses.replace(base, **overrides)
    spec = preset(args.objective, args.dim)

    effective = {
        "command": "run",
        "objective": args.objective,
        "dim": int(args.dim),
        "solver": solver,
        "n_agents": int(args.n_agents),
        "threshold": float(args.threshold),
        "solver_config": _config_as_dict(config),
    }
    print(json.dumps(effective, indent=2))

    if solver == "gkbo":
        report = run_gkbo(spec, config, args.n_agents)
    else:
        report = run_pcbo(spec, config, args.n_agents)
    _print_report(report, spec.minimizers, args.threshold)
    return 0


def _cmd_bench(args) -> int:
    if args.config is not None:
        config_path = Path(args.config)
        try:
            text = config_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ValueError(f"cannot read config file {config_path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON in config file {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"config file {config_path} must hold a JSON object")
    else:
        data = {}

    for name in ("objective", "dim", "solver", "n_agents", "repetitions", "sweep"):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    if args.sweep_values is not None:
        data["sweep_values"] = _parse_number_list(args.sweep_values, "--sweep-values")
    if args.base_seed is not None:
        data["base_seed"] = int(args.base_seed)
    elif "base_seed" not in data:
        env = _env_seed()
        if env is not None:
            data["base_seed"] = env

    solver = data.get("solver", "gkbo")
    _check_solver_flags(args, solver)
    overrides = _solver_overrides(args, solver)
    if overrides:
        section = data.setdefault("solver_config", {})
        if not isinstance(section, dict):
            raise ValueError("solver_config must be a JSON object")
        section.update(overrides)

    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    print(cfg.to_json())
    summary = run_experiment(cfg, workers=args.workers)
    path = write_results(summary, args.output)
    print(f"wrote {path} and {path.with_suffix('.json')}")
    return 0


def _cmd_compare(args) -> int:
    dims = _parse_number_list(args.dims, "--dims")
    if any(not isinstance(dim, int) for dim in dims):
        raise ValueError("--dims takes integers only")
    base_seed = args.base_seed if args.base_seed is not None else _env_seed()
    if base_seed is None:
        base_seed = 0
    sweep = "none" if len(dims) == 1 else "dimension"
    sweep_values = () if len(dims) == 1 else tuple(dims)

    gkbo_config = SolverConfig(nu_f=args.nu, sigma_f=args.sigma, n_leaders=args.n_leaders)
    pcbo_config = PcboConfig(nu=args.nu, sigma=args.sigma, n_clusters=args.n_leaders)
    experiments = {
        "gkbo": ExperimentConfig(
            objective=args.objective,
            dim=dims[0],
            solver="gkbo",
            solver_config=gkbo_config,
            n_agents=args.n_agents,
            repetitions=args.repetitions,
            sweep=sweep,
            sweep_values=sweep_values,
            base_seed=int(base_seed),
        ),
        "pcbo": ExperimentConfig(
            objective=args.objective,
            dim=dims[0],
            solver="pcbo",
            solver_config=pcbo_config,
            n_agents=args.n_agents,
            repetitions=args.repetitions,
            sweep=sweep,
            sweep_values=sweep_values,
            base_seed=int(base_seed),
        ),
    }

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    effective = {
        "command": "compare",
        "objective": args.objective,
        "dims": dims,
        "n_agents": int(args.n_agents),
        "repetitions": int(args.repetitions),
        "nu": float(args.nu),
        "sigma": float(args.sigma),
        "n_leaders": int(args.n_leaders),
        "base_seed": int(base_seed),
        "output_dir": str(out_dir),
    }
    print(json.dumps(effective, indent=2))

    means = {}
    for name, experiment in experiments.items():
        experiment.validate()
        summary = run_experiment(experiment, workers=args.workers)
        path = write_results(summary, out_dir / f"{name}.csv")
        rates = [result.success_rate for result in summary.results]
        means[name] = sum(rates) / len(rates)
        print(f"wrote {path}")
    print(f"mean success rate: gkbo={means['gkbo']:.3f} pcbo={means['pcbo']:.3f}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="gkbo", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    run = commands.add_parser(
        "run", help="execute one solver run", description="Execute one solver run."
    )
    run.add_argument("--objective", choices=PRESET_NAMES, default="rastrigin2")
    run.add_argument("--dim", type=int, default=2)
    run.add_argument("--solver", choices=("gkbo", "pcbo"), default="gkbo")
    run.add_argument("--n-agents", type=int, default=600)
    run.add_argument("--seed", type=int, help="overrides the GKBO_SEED environment variable")
    run.add_argument(
        "--threshold",
        type=float,
        default=SUCCESS_THRESHOLD,
        help="max-norm radius for counting a minimizer as detected",
    )
    _add_solver_flags(run)
    run.set_defaults(func=_cmd_run)

    bench = commands.add_parser(
        "bench",
        help="run a Monte Carlo experiment and write CSV results",
        description="Run a Monte Carlo experiment and write CSV results. "
        "Flags override the JSON config file.",
    )
    bench.add_argument("--config", help="JSON experiment config file")
    bench.add_argument("--output", default="results.csv", help="CSV output path")
    bench.add_argument("--workers", type=int, help="process pool size (default: all CPUs)")
    bench.add_argument("--objective", choices=PRESET_NAMES)
    bench.add_argument("--dim", type=int)
    bench.add_argument("--solver", choices=("gkbo", "pcbo"))
    bench.add_argument("--n-agents", type=int)
    bench.add_argument("--repetitions", type=int)
    bench.add_argument("--sweep", choices=("none", "dimension", "n_leaders", "sigma_f"))
    bench.add_argument("--sweep-values", help="comma-separated sweep values")
    bench.add_argument(
        "--base-seed", type=int, help="seed of repetition 0; repetition r adds r"
    )
    _add_solver_flags(bench)
    bench.set_defaults(func=_cmd_bench)

    compare = commands.add_parser(
        "compare",
        help="run both solvers head to head across dimensions",
        description="Run the leader-follower solver and the clustered baseline "
        "on the same objective across dimensions and report mean success rates.",
    )
    compare.add_argument("--objective", choices=PRESET_NAMES, default="ackley2")
    compare.add_argument("--dims", default="1,2,3,4,5", help="comma-separated dimensions")
    compare.add_argument("--n-agents", type=int, default=600)
    compare.add_argument("--repetitions", type=int, default=20)
    compare.add_argument("--nu", type=float, default=1.0, help="drift strength for both solvers")
    compare.add_argument(
        "--sigma", type=float, default=0.5, help="noise strength for both solvers"
    )
    compare.add_argument(
        "--n-leaders", type=int, default=4, help="leader count and cluster count"
    )
    compare.add_argument("--base-seed", type=int)
    compare.add_argument("--workers", type=int)
    compare.add_argument("--output-dir", default="compare_results")
    compare.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 1
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
