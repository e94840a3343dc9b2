"""Lawnmower sonar surveys and the per-turn GP fitting protocol.

The AUV flies parallel legs in boustrophedon order. At every along-track
station the side-looking sonar returns complexity measurements on both sides
between ``min_range`` and ``max_range`` (the inner band is occluded by the
vehicle itself). After each turn the GP is refit on everything collected so
far; hyperparameters are re-estimated after turn 1 and every fourth turn
after that, on a random half of the data.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import Scenario, ScalarField, bilinear_unchecked
from .geometry import Pose2
from .gp import (
    ConvergenceWarning,
    GPModel,
    TrainingSet,
    fit,
    optimize_hyperparameters_detailed,
    rmse_against_field,
)
from .kernels import ConditioningError, Hyperparameters, KernelKind

log = logging.getLogger(__name__)

INITIAL_LENGTH_SCALE = 10.0
INITIAL_NOISE_STD = 0.1
INITIAL_SIGNAL_VARIANCE = 1.0


@dataclass(frozen=True)
class SensorModel:
    min_range: float = 10.0
    max_range: float = 20.0
    noise_fraction: float = 1e-4
    along_track_spacing: float = 2.0
    cross_track_spacing: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.min_range < self.max_range:
            raise ValueError("need 0 <= min_range < max_range")
        if self.noise_fraction < 0:
            raise ValueError("noise_fraction must be non-negative")
        if self.along_track_spacing <= 0 or self.cross_track_spacing <= 0:
            raise ValueError("sample spacings must be positive")

    def offsets(self) -> np.ndarray:
        """Cross-track offsets of one side of the swath."""
        n = int(math.floor((self.max_range - self.min_range) / self.cross_track_spacing + 1e-9))
        return self.min_range + self.cross_track_spacing * np.arange(n + 1)


@dataclass(frozen=True)
class Leg:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def heading(self) -> float:
        return math.atan2(self.end[1] - self.start[1], self.end[0] - self.start[0])

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def stations(self, spacing: float) -> list[Pose2]:
        n = max(1, int(math.ceil(self.length / spacing - 1e-9)))
        ts = np.linspace(0.0, 1.0, n + 1)
        (x0, y0), (x1, y1) = self.start, self.end
        psi = self.heading
        return [Pose2(x0 + t * (x1 - x0), y0 + t * (y1 - y0), psi) for t in ts]


@dataclass(frozen=True)
class LawnmowerPlan:
    legs: tuple[Leg, ...]
    track_spacing: float

    @property
    def turns(self) -> int:
        return len(self.legs) - 1


def generate_lawnmower(field: ScalarField, track_spacing: float = 20.0, heading_axis: str = "y") -> LawnmowerPlan:
    """Parallel legs spanning the field, ``track_spacing`` apart, in boustrophedon order.

    With ``heading_axis="y"`` the legs run north/south and are stepped in x.
    The last leg sits on the far boundary even when the spacing does not
    divide the extent.
    """
    xmin, xmax, ymin, ymax = field.bounds
    if heading_axis == "y":
        across, along = (xmin, xmax), (ymin, ymax)
    elif heading_axis == "x":
        across, along = (ymin, ymax), (xmin, xmax)
    else:
        raise ValueError("heading_axis must be 'x' or 'y'")
    extent = across[1] - across[0]
    if not 0 < track_spacing <= extent:
        raise ValueError(f"track spacing {track_spacing} must lie in (0, {extent}]")
    n_legs = int(math.ceil(extent / track_spacing - 1e-9)) + 1
    legs = []
    for i in range(n_legs):
        c = across[0] + min(i * track_spacing, extent)
        a0, a1 = along if i % 2 == 0 else along[::-1]
        if heading_axis == "y":
            legs.append(Leg((c, a0), (c, a1)))
        else:
            legs.append(Leg((a0, c), (a1, c)))
    return LawnmowerPlan(tuple(legs), float(track_spacing))


def swath_points(field: ScalarField, poses, sensor: SensorModel) -> np.ndarray:
    """Measurement locations for a pose sequence, outside-field points dropped."""
    P = np.array([[p[0], p[1], p[2]] for p in poses], dtype=float)
    offs = sensor.offsets()
    d = np.concatenate([offs, -offs])  # port (+) then starboard (-)
    nx, ny = -np.sin(P[:, 2]), np.cos(P[:, 2])
    px = (P[:, 0, None] + d[None, :] * nx[:, None]).ravel()
    py = (P[:, 1, None] + d[None, :] * ny[:, None]).ravel()
    pts = np.column_stack([px, py])
    return pts[field.contains(pts)]


def sample_swath(field: ScalarField, poses, sensor: SensorModel, rng) -> TrainingSet | None:
    """Noisy sonar returns along ``poses``; ``None`` when every point falls outside the field.

    Noise is uniform in ``[-eps, eps]`` with ``eps = noise_fraction * max(field)``.
    ``rng`` is a seed or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng)
    pts = swath_points(field, poses, sensor)
    if len(pts) == 0:
        return None
    y = bilinear_unchecked(field, pts[:, 0], pts[:, 1])
    eps = sensor.noise_fraction * float(field.values.max())
    if eps > 0:
        y = y + rng.uniform(-eps, eps, size=len(y))
    return TrainingSet(pts, y)


@dataclass(frozen=True)
class SurveyOptions:
    """Knobs of the survey protocol beyond the sensor and plan."""

    reestimate_every: int = 4
    max_fit_points: int | None = 2000
    max_opt_points: int | None = 500
    opt_max_iter: int = 100
    record_rmse: bool = True  # planning only needs the final model
    initial: Hyperparameters = dc_field(default_factory=lambda: Hyperparameters(
        INITIAL_LENGTH_SCALE, INITIAL_SIGNAL_VARIANCE, INITIAL_NOISE_STD**2))


@dataclass(frozen=True)
class TurnRecord:
    turn: int
    n_samples: int
    n_fit: int
    hyper: Hyperparameters
    rmse: float
    reestimated: bool
    training: TrainingSet


@dataclass
class SurveyLog:
    kernel: KernelKind
    records: list[TurnRecord] = dc_field(default_factory=list)
    final_model: GPModel | None = None

    @property
    def rmse(self) -> list[float]:
        return [r.rmse for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["turn", "kernel", "rmse", "length_scale", "signal_variance", "noise_variance"])
        for r in self.records:
            w.writerow([r.turn, self.kernel.label, repr(r.rmse), repr(r.hyper.length_scale),
                        repr(r.hyper.signal_variance), repr(r.hyper.noise_variance)])
        return buf.getvalue()


class SurveyError(RuntimeError):
    def __init__(self, turn: int, cause: Exception):
        self.turn = turn
        super().__init__(f"survey failed at turn {turn}: {cause}")


def reestimation_turns(n_turns: int, every: int = 4) -> list[int]:
    """Turns after which hyperparameters are re-estimated: 1, 1 + every, ..."""
    return list(range(1, n_turns + 1, every))


def _subsample(rng: np.random.Generator, n: int, limit: int | None) -> np.ndarray:
    if limit is None or n <= limit:
        return np.arange(n)
    return np.sort(rng.choice(n, size=limit, replace=False))


def run_survey(
    scenario: Scenario,
    kernel: KernelKind,
    sensor: SensorModel = SensorModel(),
    plan: LawnmowerPlan | None = None,
    seed: int = 0,
    options: SurveyOptions = SurveyOptions(),
) -> SurveyLog:
    """Fly the lawnmower plan and record the GP's RMSE after every turn.

    Turn ``t`` completes once leg ``t`` (0-based) is flown, so the record for
    turn ``t`` uses legs ``0..t`` and the last turn sees the whole survey.
    """
    field = scenario.field
    plan = plan or generate_lawnmower(field)
    if plan.turns < 1:
        raise ValueError("lawnmower plan needs at least two legs")
    noise_ss, select_ss = np.random.SeedSequence(seed).spawn(2)
    noise_rng = np.random.default_rng(noise_ss)
    select_rng = np.random.default_rng(select_ss)
    reest = set(reestimation_turns(plan.turns, options.reestimate_every))

    data: TrainingSet | None = None
    hyper = options.initial
    log_ = SurveyLog(kernel)

    def collect(leg: Leg):
        nonlocal data
        inc = sample_swath(field, leg.stations(sensor.along_track_spacing), sensor, noise_rng)
        if inc is not None:
            data = inc if data is None else data.concat(inc)

    collect(plan.legs[0])
    for turn in range(1, plan.turns + 1):
        collect(plan.legs[turn])
        if data is None:
            raise SurveyError(turn, ValueError("no samples collected"))
        try:
            if turn in reest:
                half = select_rng.permutation(len(data))[: max(1, len(data) // 2)]
                half = np.sort(half)
                if options.max_opt_points is not None and len(half) > options.max_opt_points:
                    half = np.sort(select_rng.choice(half, size=options.max_opt_points, replace=False))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    info = optimize_hyperparameters_detailed(
                        data.subset(half), kernel, hyper, max_iter=options.opt_max_iter)
                hyper = info.hyper
            idx = _subsample(select_rng, len(data), options.max_fit_points)
            model = fit(data.subset(idx), kernel, hyper)
            rmse = rmse_against_field(model, field) if options.record_rmse else math.nan
        except ConditioningError as exc:
            raise SurveyError(turn, exc) from exc
        log.debug("turn %d kernel %s n=%d rmse=%.4f", turn, kernel.label, len(data), rmse)
        log_.records.append(TurnRecord(turn, len(data), len(idx), hyper, rmse, turn in reest, data))
        log_.final_model = model
    return log_
