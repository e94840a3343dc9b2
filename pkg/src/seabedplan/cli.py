"""``seabedplan`` command-line entry point.

Subcommands: gen-scenarios, kernel-bench, plan, simulate, sweep-alpha.
Exit status is 0 on success, 1 if any grid cell failed (partial results are
still written) and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    ConfigError,
    ExperimentConfig,
    executed_gap_summary,
    kernel_bench,
    load_scenarios,
    plan_grid,
    sweep_summary,
)
from .field import save_scenario

log = logging.getLogger("seabedplan")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def write_table(path: Path, rows: list[dict], header: str, columns: list[str] | None = None) -> None:
    """CSV with a leading ``# ...`` provenance line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def write_text(path: Path, text: str, header: str | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        fh.write(text)


def _alpha_tag(a: float) -> str:
    return f"{a:g}".replace(".", "p")


def _header(cfg: ExperimentConfig, command: str) -> str:
    return f"config-sha256={cfg.digest()} command={command}"


def cmd_gen_scenarios(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    directory = out / "scenarios"
    for sc in load_scenarios(cfg):
        save_scenario(sc, directory)
    write_text(directory / "MANIFEST", "".join(f"{s}\n" for s in cfg.scenarios), _header(cfg, "gen-scenarios"))
    log.info("wrote %d scenarios to %s", len(cfg.scenarios), directory)
    return EXIT_OK


def cmd_kernel_bench(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    rows, summary, failures = kernel_bench(cfg, threads)
    hdr = _header(cfg, "kernel-bench")
    write_table(out / "kernel_bench.csv", rows, hdr,
                ["scenario", "kernel", "seed", "turn", "rmse", "length_scale", "signal_variance",
                 "noise_variance"])
    write_table(out / "kernel_summary.csv", summary, hdr,
                ["scenario", "kernel", "rank", "final_rmse", "first_rmse", "n_seeds", "winner"])
    return _report(failures)


_PLAN_COLUMNS = ["scenario", "alpha", "planner", "seed", "feasible", "planned_length", "planned_chi",
                 "planned_cost", "mean_complexity", "max_complexity"]
_SIM_COLUMNS = _PLAN_COLUMNS + ["completed", "executed_length", "executed_chi", "executed_cost",
                                "max_e", "rms_e"]


def _stem(key) -> str:
    scenario, alpha, planner, seed = key
    return f"{scenario}_{planner}_a{_alpha_tag(alpha)}_s{seed}"


def cmd_plan(cfg: ExperimentConfig, out: Path, threads: int, simulate: bool = False) -> int:
    command = "simulate" if simulate else "plan"
    rows, artifacts, failures = plan_grid(cfg, threads, simulate=simulate)
    hdr = _header(cfg, command)
    write_table(out / f"{command}.csv", rows, hdr, _SIM_COLUMNS if simulate else _PLAN_COLUMNS)
    for key in sorted(artifacts):
        path, ex = artifacts[key]
        stem = _stem(key)
        write_text(out / "paths" / f"{stem}.csv", path.to_csv(), hdr)
        write_text(out / "paths" / f"{stem}.json", path.summary_json() + "\n")
        if ex is not None:
            write_text(out / "trajectories" / f"{stem}.csv", ex.to_csv(), hdr)
            write_text(out / "trajectories" / f"{stem}.json", ex.metrics_json() + "\n")
    if simulate:
        write_table(out / "simulate_summary.csv", executed_gap_summary(rows), hdr,
                    ["planner", "n", "cost_gap", "length_gap", "longer_fraction"])
    return _report(failures)


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    return cmd_plan(cfg, out, threads, simulate=True)


def cmd_sweep_alpha(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    rows, _, failures = plan_grid(cfg, threads, simulate=False)
    hdr = _header(cfg, "sweep-alpha")
    write_table(out / "sweep_runs.csv", rows, hdr, _PLAN_COLUMNS)
    write_table(out / "sweep_alpha.csv", sweep_summary(rows), hdr,
                ["planner", "alpha", "n", "mean_complexity", "max_complexity", "length", "chi"])
    return _report(failures)


def _report(failures) -> int:
    for f in failures:
        log.error("failed cell %s", f)
    return EXIT_FAILED if failures else EXIT_OK


COMMANDS = {
    "gen-scenarios": cmd_gen_scenarios,
    "kernel-bench": cmd_kernel_bench,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "sweep-alpha": cmd_sweep_alpha,
}


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", type=Path, default=d, help="YAML experiment configuration")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS if suppress else Path("results"),
                   help="output directory (default: results)")
    p.add_argument("--seed", type=int, default=d, help="base seed (overrides the config)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker threads for independent grid cells")
    p.add_argument("--n-seeds", type=int, default=d, help="number of run seeds")
    p.add_argument("--scenarios", type=_csv_list, default=d, help="comma-separated scenario names")
    p.add_argument("--kernels", type=_csv_list, default=d, help="comma-separated kernel labels")
    p.add_argument("--alphas", type=_float_list, default=d, help="comma-separated alpha values")
    p.add_argument("--planners", type=_csv_list, default=d, help="comma-separated planners")
    p.add_argument("--iterations", type=int, default=d, help="RRT* iterations")
    p.add_argument("--scenario-dir", default=d, help="load scenarios from this directory")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seabedplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "gen-scenarios": "write the default synthetic scenarios",
        "kernel-bench": "per-turn GP RMSE for every scenario, kernel and seed",
        "plan": "survey, predict and plan with both planners over the alpha grid",
        "simulate": "plan, then track every path with the vessel simulator",
        "sweep-alpha": "path complexity and length against alpha",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        _add_common(sp, suppress=True)
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "n_seeds": args.n_seeds,
        "scenarios": args.scenarios,
        "kernels": args.kernels,
        "alphas": args.alphas,
        "planners": args.planners,
        "rrt_iterations": args.iterations,
        "scenario_dir": args.scenario_dir,
    }
    if args.config is not None:
        return ExperimentConfig.load(args.config, **overrides)
    return ExperimentConfig.from_mapping({}, **overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
    except ConfigError as exc:
        print(f"seabedplan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"seabedplan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"seabedplan: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
