"""Experiment grids: kernel benchmark, planning with simulation, and the alpha sweep.

Each grid cell is self-contained and seeded from the configuration, so the
cells can run in any order (or on worker threads) and the sorted outputs are
identical between runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .field import (
    DEFAULT_SCENARIO_SPECS,
    Scenario,
    bilinear_unchecked,
    default_scenarios,
    load_scenario,
    threshold_obstacles,
)
from .gp import GPModel
from .kernels import ALL_KERNELS, KernelKind
from .planners import CostWeights, PlannedPath, RRTStarOptions, astar_plan, predict_field, rrt_star_plan
from .planners.common import INTEGRATION_STEP, polyline_midpoints
from .survey import SensorModel, SurveyOptions, run_survey
from .vessel import VesselParams, simulate_tracking

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.25, 0.75, 2.0, 1000.0)
PLANNERS = ("astar", "rrtstar")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple[str, ...] = tuple(DEFAULT_SCENARIO_SPECS)
    scenario_dir: str | None = None
    kernels: tuple[str, ...] = tuple(k.label for k in ALL_KERNELS)
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    planners: tuple[str, ...] = PLANNERS
    seed: int = 0
    n_seeds: int = 3
    planning_kernel: str = "additive"
    # survey
    track_spacing: float = 20.0
    min_range: float = 10.0
    max_range: float = 20.0
    noise_fraction: float = 1e-4
    sample_spacing: float = 2.0
    reestimate_every: int = 4
    max_fit_points: int = 2000
    max_opt_points: int = 500
    # planning
    obstacle_threshold: float = 0.9
    safety_radius: float = 5.0
    rho_min: float = 10.0
    rrt_iterations: int = 5000
    # simulation
    u_d: float = 1.5
    dt: float = 0.1
    lookahead: float = 20.0

    def __post_init__(self):
        for name in ("scenarios", "kernels", "alphas", "planners"):
            value = getattr(self, name)
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                raise ConfigError(f"{name} must be a list")
            object.__setattr__(self, name, tuple(value))
        if not self.scenarios:
            raise ConfigError("scenario list is empty")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if any(not (isinstance(a, (int, float)) and a >= 0 and math.isfinite(a)) for a in self.alphas):
            raise ConfigError("alpha values must be finite and non-negative")
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        for p in self.planners:
            if p not in PLANNERS:
                raise ConfigError(f"unknown planner {p!r}")
        try:
            for k in self.kernels + (self.planning_kernel,):
                KernelKind.parse(k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.scenario_dir is None:
            unknown = [s for s in self.scenarios if s not in DEFAULT_SCENARIO_SPECS]
            if unknown:
                raise ConfigError(f"unknown scenarios {unknown}; set scenario_dir to load files")
        numeric = ("track_spacing", "max_range", "sample_spacing", "rho_min", "u_d", "dt", "lookahead")
        for name in numeric:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.rrt_iterations < 1 or self.reestimate_every < 1:
            raise ConfigError("iteration counts must be positive")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.n_seeds)]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_mapping(cls, data: dict | None, **overrides) -> "ExperimentConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_mapping(data, **overrides)

    # derived component settings
    def sensor(self) -> SensorModel:
        return SensorModel(self.min_range, self.max_range, self.noise_fraction,
                           self.sample_spacing, self.sample_spacing)

    def survey_options(self) -> SurveyOptions:
        return SurveyOptions(reestimate_every=self.reestimate_every, max_fit_points=self.max_fit_points,
                             max_opt_points=self.max_opt_points)

    def vessel(self) -> VesselParams:
        return VesselParams(u_d=self.u_d)

    def weights(self, alpha: float) -> CostWeights:
        return CostWeights(alpha, self.obstacle_threshold, self.safety_radius)


def load_scenarios(cfg: ExperimentConfig) -> list[Scenario]:
    if cfg.scenario_dir is not None:
        return [load_scenario(Path(cfg.scenario_dir) / f"{name}.yaml") for name in cfg.scenarios]
    by_name = {s.name: s for s in default_scenarios(cfg.seed)}
    return [by_name[name] for name in cfg.scenarios]


def cell_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from integer coordinates of a grid cell."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class CellError(RuntimeError):
    def __init__(self, cell: dict, cause: Exception):
        self.cell = cell
        self.cause = cause
        super().__init__(f"{cell}: {type(cause).__name__}: {cause}")


def _run_cells(fn, cells: list, threads: int):
    """Map ``fn`` over cells; returns (results in cell order, failures)."""
    def guarded(c):
        try:
            return fn(c), None
        except Exception as exc:  # noqa: BLE001 - every failure is reported per cell
            log.warning("cell %s failed: %s", c, exc)
            return None, CellError(c, exc)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(guarded, cells))
    else:
        out = [guarded(c) for c in cells]
    return [r for r, _ in out], [e for _, e in out if e is not None]


# -- kernel benchmark -------------------------------------------------------


def kernel_bench(cfg: ExperimentConfig, threads: int = 1):
    """Per-turn RMSE rows and per-scenario kernel ranking rows."""
    scenarios = load_scenarios(cfg)
    cells = [{"scenario": si, "kernel": k, "seed": s}
             for si in range(len(scenarios)) for k in cfg.kernels for s in cfg.seeds]

    def run(c):
        sc = scenarios[c["scenario"]]
        res = run_survey(sc, KernelKind.parse(c["kernel"]), cfg.sensor(), None,
                         cell_seed(c["seed"], c["scenario"]), cfg.survey_options())
        return [{"scenario": sc.name, "kernel": c["kernel"], "seed": c["seed"], "turn": r.turn,
                 "rmse": r.rmse, "length_scale": r.hyper.length_scale,
                 "signal_variance": r.hyper.signal_variance, "noise_variance": r.hyper.noise_variance}
                for r in res.records]

    results, failures = _run_cells(run, cells, threads)
    rows = sorted((r for rs in results if rs for r in rs),
                  key=lambda r: (r["scenario"], r["kernel"], r["seed"], r["turn"]))
    return rows, summarize_kernels(rows), failures


def summarize_kernels(rows: list[dict]) -> list[dict]:
    """Seed-averaged first/final RMSE per (scenario, kernel), ranked within each scenario."""
    groups: dict[tuple[str, str], dict[int, list[dict]]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["kernel"]), {}).setdefault(r["seed"], []).append(r)
    stats = []
    for (scen, kern), by_seed in groups.items():
        first = [min(rs, key=lambda r: r["turn"])["rmse"] for rs in by_seed.values()]
        final = [max(rs, key=lambda r: r["turn"])["rmse"] for rs in by_seed.values()]
        stats.append({"scenario": scen, "kernel": kern, "first_rmse": float(np.mean(first)),
                      "final_rmse": float(np.mean(final)), "n_seeds": len(by_seed)})
    out = []
    for scen in sorted({s["scenario"] for s in stats}):
        ranked = sorted((s for s in stats if s["scenario"] == scen),
                        key=lambda s: (s["final_rmse"], s["kernel"]))
        for rank, s in enumerate(ranked, 1):
            out.append({**s, "rank": rank, "winner": ranked[0]["kernel"]})
    return out


# -- planning pipeline ------------------------------------------------------


@dataclass
class PlanningContext:
    scenario: Scenario
    seed: int
    model: GPModel
    predicted: object
    obstacles: object


def build_context(cfg: ExperimentConfig, scenario: Scenario, scenario_index: int, seed: int) -> PlanningContext:
    """Survey the scenario, fit the planning GP and threshold its prediction."""
    options = replace(cfg.survey_options(), record_rmse=False)
    res = run_survey(scenario, KernelKind.parse(cfg.planning_kernel), cfg.sensor(), None,
                     cell_seed(seed, scenario_index), options)
    predicted = predict_field(res.final_model, scenario.field)
    return PlanningContext(scenario, seed, res.final_model, predicted,
                           threshold_obstacles(predicted, cfg.obstacle_threshold))


def plan_path(cfg: ExperimentConfig, ctx: PlanningContext, planner: str, alpha: float,
              rrt_seed: int) -> PlannedPath:
    sc = ctx.scenario
    w = cfg.weights(alpha)
    if planner == "astar":
        return astar_plan(ctx.predicted, ctx.obstacles, tuple(sc.start), tuple(sc.goal), w)
    return rrt_star_plan(ctx.predicted, ctx.obstacles, sc.start, sc.goal, w, cfg.rho_min,
                         rrt_seed, RRTStarOptions(iterations=cfg.rrt_iterations))


def path_complexity_profile(field, waypoints: np.ndarray, step: float = INTEGRATION_STEP) -> tuple[float, float]:
    """(mean, max) of the field along a path, by arclength."""
    mids, lens = polyline_midpoints(waypoints, step)
    vals = bilinear_unchecked(field, mids[:, 0], mids[:, 1])
    return float(vals @ lens / lens.sum()), float(vals.max())


def _contexts(cfg, scenarios, threads):
    cells = [(si, s) for si in range(len(scenarios)) for s in cfg.seeds]

    def run(c):
        return build_context(cfg, scenarios[c[0]], c[0], c[1])

    results, failures = _run_cells(run, cells, threads)
    return {c: r for c, r in zip(cells, results) if r is not None}, failures


def plan_grid(cfg: ExperimentConfig, threads: int = 1, simulate: bool = False):
    """Plan (and optionally simulate) every (scenario, alpha, planner, seed) cell.

    Returns the sorted metric rows, a mapping from cell key to
    ``(PlannedPath, Execution | None)``, and the failed cells.
    """
    scenarios = load_scenarios(cfg)
    contexts, failures = _contexts(cfg, scenarios, threads)
    vessel = cfg.vessel()
    cells = [(si, ai, p, s) for (si, s) in sorted(contexts)
             for ai in range(len(cfg.alphas)) for p in cfg.planners]

    def run(c):
        si, ai, planner, seed = c
        ctx = contexts[(si, seed)]
        alpha = cfg.alphas[ai]
        path = plan_path(cfg, ctx, planner, alpha, cell_seed(seed, si, ai, 7))
        row = {"scenario": ctx.scenario.name, "alpha": alpha, "planner": planner, "seed": seed,
               "feasible": path.feasible, "planned_length": path.length, "planned_chi": path.chi,
               "planned_cost": path.cost}
        if path.feasible:
            row["mean_complexity"], row["max_complexity"] = path_complexity_profile(ctx.predicted, path.waypoints)
        else:
            row["mean_complexity"] = row["max_complexity"] = math.nan
        ex = None
        if simulate:
            if path.feasible:
                ex = simulate_tracking(path, vessel, ctx.predicted, alpha, cfg.dt, lookahead=cfg.lookahead)
                row.update({"executed_length": ex.executed_length, "executed_chi": ex.executed_chi,
                            "executed_cost": ex.executed_cost, "max_e": ex.max_e, "rms_e": ex.rms_e,
                            "completed": ex.completed})
            else:
                row.update({"executed_length": math.nan, "executed_chi": math.nan,
                            "executed_cost": math.nan, "max_e": math.nan, "rms_e": math.nan,
                            "completed": False})
        return row, path, ex

    results, cell_failures = _run_cells(run, cells, threads)
    rows, artifacts = [], {}
    for res in results:
        if res is None:
            continue
        row, path, ex = res
        rows.append(row)
        artifacts[(row["scenario"], row["alpha"], row["planner"], row["seed"])] = (path, ex)
    rows.sort(key=lambda r: (r["scenario"], r["alpha"], r["planner"], r["seed"]))
    return rows, artifacts, failures + cell_failures


def sweep_summary(rows: list[dict]) -> list[dict]:
    """Per (planner, alpha): mean complexity, max complexity and length averaged over feasible runs."""
    out = []
    keys = sorted({(r["planner"], r["alpha"]) for r in rows})
    for planner, alpha in keys:
        sel = [r for r in rows if r["planner"] == planner and r["alpha"] == alpha and r["feasible"]]
        n = len(sel)
        out.append({
            "planner": planner, "alpha": alpha, "n": n,
            "mean_complexity": float(np.mean([r["mean_complexity"] for r in sel])) if n else math.nan,
            "max_complexity": float(np.mean([r["max_complexity"] for r in sel])) if n else math.nan,
            "length": float(np.mean([r["planned_length"] for r in sel])) if n else math.nan,
            "chi": float(np.mean([r["planned_chi"] for r in sel])) if n else math.nan,
        })
    return out


def executed_gap_summary(rows: list[dict]) -> list[dict]:
    """Seed-averaged executed-minus-planned cost and length per planner over completed runs."""
    out = []
    for planner in sorted({r["planner"] for r in rows}):
        sel = [r for r in rows if r["planner"] == planner and r.get("completed")]
        out.append({
            "planner": planner, "n": len(sel),
            "cost_gap": float(np.mean([r["executed_cost"] - r["planned_cost"] for r in sel])) if sel else math.nan,
            "length_gap": float(np.mean([r["executed_length"] - r["planned_length"] for r in sel])) if sel else math.nan,
            "longer_fraction": float(np.mean([r["executed_length"] >= r["planned_length"] for r in sel])) if sel else math.nan,
        })
    return out
