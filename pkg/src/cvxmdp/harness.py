"""
Command-line entry point.

    cvxmdp presets
    cvxmdp run    (--config PATH | --preset NAME) [--seed N] [--T N] [--out DIR]
    cvxmdp sweep  (--config PATH | --preset NAME) [--seeds 0 1 2] [--T 250 500] [--workers N]
    cvxmdp oracle (--config PATH | --preset NAME) [--seed N] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 numerical or budget error.
"""

import argparse
import sys

import numpy as np

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from cvxmdp.config import RunConfig, load_config
from cvxmdp.errors import (
    ArgumentError,
    ConfigurationError,
    CvxMdpError,
    SlaterViolationError,
)
from cvxmdp.log import setup_logging
from cvxmdp.mdp_vpdpo import VPDPO, ExperimentSpec, RegretReport, write_episode_csv, write_ground_truth
from cvxmdp.presets import PRESETS, get_preset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def exit_code(error: BaseException) -> int:
    if isinstance(error, (ConfigurationError, ArgumentError, SlaterViolationError)):
        return EXIT_CONFIG
    # NumericalError, BudgetError, DomainError and anything unclassified
    return EXIT_NUMERICAL


class HarnessParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so bad flags map to exit code 1."""

    def error(self, message: str):
        raise ArgumentError(f"{self.prog}: {message}")


def build_parser() -> HarnessParser:
    parser = HarnessParser(prog="cvxmdp", description="Primal-dual policy optimization for convex MDPs")
    parser.add_argument("--verbose", action="store_true", help="echo the log to stderr")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=HarnessParser)

    commands.add_parser("presets", help="list the built-in experiments")

    for name, help_text in (
        ("run", "run one experiment"),
        ("sweep", "run an experiment over several seeds and horizons"),
        ("oracle", "solve the ground-truth problem only"),
    ):
        sub = commands.add_parser(name, help=help_text)
        source = sub.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=Path, help="experiment configuration file")
        source.add_argument("--preset", help="built-in experiment name")
        sub.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "sweep":
            sub.add_argument("--seeds", type=int, nargs="+", default=None)
            sub.add_argument("--T", type=int, nargs="+", default=None, dest="T")
            sub.add_argument("--workers", type=int, default=1)
        else:
            sub.add_argument("--seed", type=int, default=None)
        if name == "run":
            sub.add_argument("--T", type=int, default=None, dest="T")
            sub.add_argument("--show-plots", action="store_true", help="open the matplotlib viewer")
        if name != "oracle":
            sub.add_argument("--emit-plots", action="store_true", help="write gnuplot data and scripts")
    return parser


# HH: Tasks


@dataclass(frozen=True)
class RunTask:
    """One (experiment, seed, T) unit of work; plain fields so it pickles into worker processes."""

    config: Path | None
    preset: str | None
    seed: int
    T: int | None
    out_dir: Path
    emit_plots: bool = False
    verbose: bool = False

    def spec(self) -> ExperimentSpec:
        if self.config is not None:
            return load_config(self.config).build(self.seed, self.T)
        return get_preset(self.preset).build(self.seed, self.T)

    def stem(self, spec: ExperimentSpec) -> str:
        return f"{spec.name}_seed{spec.seed}_T{spec.T}"


def execute(task: RunTask) -> tuple[Path, VPDPO]:
    """
    Run one task and write `<name>_seed<seed>_T<T>.csv` plus a `.truth`
    sidecar. A failing run still writes the episodes it completed.
    """
    setup_logging(console=task.verbose)
    spec = task.spec()
    runner = VPDPO(spec)
    csv_path = task.out_dir / f"{task.stem(spec)}.csv"
    try:
        runner.run()
    finally:
        write_episode_csv(runner.records, csv_path)
        if runner.ground_truth is not None:
            write_ground_truth(runner.ground_truth, csv_path.with_suffix(".truth"))

    if task.emit_plots and runner.report is not None:
        write_plot_files(runner.report, csv_path.with_suffix(""))
    runner.logger.info(str(runner))
    return csv_path, runner


def _execute_in_worker(task: RunTask) -> tuple[str, int, str]:
    try:
        path, _ = execute(task)
        return str(path), EXIT_OK, ""
    except CvxMdpError as e:
        return "", exit_code(e), str(e)


def write_plot_files(report: RegretReport, base: Path) -> tuple[Path, Path]:
    """Curves as a whitespace table plus a gnuplot script that renders them to PNG."""
    data = base.with_suffix(".dat")
    script = base.with_suffix(".gp")
    t = np.arange(1, report.regret_curve.shape[0] + 1)
    table = np.column_stack(
        [
            t,
            report.regret_curve,
            report.violation_curve,
            report.proxy_regret_curve,
            report.proxy_violation_curve,
        ]
    )
    np.savetxt(
        data,
        table,
        fmt="%.17g",
        header="t regret violation proxy_regret proxy_violation",
    )
    script.write_text(
        "\n".join(
            [
                "set terminal pngcairo size 1000,450",
                f"set output '{base.name}.png'",
                "set multiplot layout 1,2",
                "set xlabel 't'",
                "set title 'Regret'",
                f"plot '{data.name}' using 1:2 with lines title 'mixed', "
                f"'' using 1:4 with lines dashtype 2 title 'planned'",
                "set title 'Violation'",
                f"plot '{data.name}' using 1:3 with lines title 'mixed', "
                f"'' using 1:5 with lines dashtype 2 title 'planned'",
                "unset multiplot",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return data, script


# HH: Commands


def _resolve(args: argparse.Namespace) -> tuple[RunConfig | None, Path]:
    """Loaded config (if any) and the output directory."""
    config = load_config(args.config) if args.config is not None else None
    if args.out is not None:
        out = args.out
    elif config is not None:
        out = config.out_dir
    else:
        out = Path("results")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"output.dir: cannot create {out} ({e})") from e
    return config, out


def _command_presets() -> int:
    for preset in PRESETS.values():
        print(preset)
    return EXIT_OK


def _command_run(args: argparse.Namespace) -> int:
    config, out = _resolve(args)
    seed = args.seed if args.seed is not None else (config.seeds[0] if config else 0)
    emit = args.emit_plots or (config.emit_plots if config else False)
    task = RunTask(args.config, args.preset, seed, args.T, out, emit, args.verbose)

    path, runner = execute(task)
    print(runner)
    print(path)
    if args.show_plots and runner.report is not None:
        from cvxmdp.viewer import Viewer

        Viewer().render(runner.report, title=runner.spec.name)
    return EXIT_OK


def _command_sweep(args: argparse.Namespace) -> int:
    config, out = _resolve(args)
    seeds = args.seeds or (config.seeds if config else [0])
    horizons = args.T or (config.T_values if config else [None])
    emit = args.emit_plots or (config.emit_plots if config else False)
    if args.workers < 1:
        raise ArgumentError(f"--workers must be >= 1, got {args.workers}")

    tasks = [
        RunTask(args.config, args.preset, seed, T, out, emit, args.verbose)
        for T in horizons
        for seed in seeds
    ]
    if args.workers == 1:
        results = [_execute_in_worker(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_execute_in_worker, tasks))

    code = EXIT_OK
    for task, (path, status, message) in zip(tasks, results):
        if status == EXIT_OK:
            print(path)
        else:
            print(f"seed {task.seed} T {task.T}: {message}", file=sys.stderr)
            code = max(code, status)
    return code


def _command_oracle(args: argparse.Namespace) -> int:
    config, out = _resolve(args)
    seed = args.seed if args.seed is not None else (config.seeds[0] if config else 0)
    task = RunTask(args.config, args.preset, seed, None, out, verbose=args.verbose)
    spec = task.spec()
    runner = VPDPO(spec)
    truth = runner.solve_ground_truth()
    if truth is None:
        raise ConfigurationError("algorithm.truth_mode: 'none' has nothing to solve")
    path = write_ground_truth(truth, out / f"{spec.name}_seed{seed}.truth")
    print(truth)
    print(path)
    return EXIT_OK


def cli_run(argv: Sequence[str] | None = None) -> int:
    """Parse `argv`, run the command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        logger = setup_logging(console=args.verbose)
        logger.info(f"Command line: {' '.join(argv if argv is not None else sys.argv[1:])}")

        match args.command:
            case "presets":
                return _command_presets()
            case "run":
                return _command_run(args)
            case "sweep":
                return _command_sweep(args)
            case "oracle":
                return _command_oracle(args)

    except CvxMdpError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code(e)


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
