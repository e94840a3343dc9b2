"""Types and field utilities shared by the grid and sampling planners."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..dubins import DubinsPath, sample_arclengths, _poses_numpy
from ..field import FieldBoundsError, ScalarField, bilinear_unchecked
from ..geometry import Pose2, wrap_angle
from ..gp import GPModel, predict_batch

INTEGRATION_STEP = 0.5


@dataclass(frozen=True)
class CostWeights:
    alpha: float = 0.0
    obstacle_threshold: float = 0.9
    safety_radius: float = 5.0

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be finite and non-negative")
        if not 0.0 <= self.obstacle_threshold <= 1.0:
            raise ValueError("obstacle_threshold must lie in [0, 1]")
        if self.safety_radius < 0:
            raise ValueError("safety_radius must be non-negative")


@dataclass(frozen=True)
class PlannedPath:
    """A planner result; ``cost`` is ``length + alpha * chi``.

    An infeasible result has no waypoints and infinite length and cost.
    """

    planner: str
    alpha: float
    waypoints: np.ndarray  # (n, 3) poses x, y, psi
    length: float
    chi: float
    feasible: bool = True
    stats: dict = dc_field(default_factory=dict)

    @property
    def cost(self) -> float:
        if not self.feasible:
            return math.inf
        return self.length + self.alpha * self.chi

    @classmethod
    def infeasible(cls, planner: str, alpha: float, **stats) -> "PlannedPath":
        return cls(planner, alpha, np.empty((0, 3)), math.inf, math.inf, False, stats)

    @property
    def start(self) -> Pose2:
        return Pose2(*self.waypoints[0])

    @property
    def goal(self) -> Pose2:
        return Pose2(*self.waypoints[-1])

    def to_csv(self) -> str:
        """Waypoints as ``s,x,y,psi`` with ``s`` the cumulative polyline arclength."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "x", "y", "psi"])
        if len(self.waypoints):
            d = np.hypot(*np.diff(self.waypoints[:, :2], axis=0).T)
            s = np.concatenate([[0.0], np.cumsum(d)])
            for si, (x, y, psi) in zip(s, self.waypoints):
                w.writerow([repr(float(si)), repr(float(x)), repr(float(y)), repr(float(psi))])
        return buf.getvalue()

    def summary(self) -> dict:
        def num(v):
            return float(v) if math.isfinite(v) else None

        return {"planner": self.planner, "alpha": self.alpha, "length": num(self.length),
                "chi": num(self.chi), "cost": num(self.cost), "feasible": self.feasible}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def predict_field(model: GPModel, template: ScalarField) -> ScalarField:
    """GP posterior mean at every cell centre of ``template``, clamped to [0, 1]."""
    mean = predict_batch(model, template.cell_centers())
    values = np.clip(mean, 0.0, 1.0).reshape(template.values.shape)
    return template.with_values(values)


def polyline_midpoints(points: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints and lengths of the pieces from splitting each segment into
    equal parts no longer than ``step``."""
    pts = np.asarray(points, dtype=float)[:, :2]
    mids, lens = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        L = math.dist(a, b)
        if L == 0.0:
            continue
        n = max(1, math.ceil(L / step - 1e-9))
        t = (np.arange(n) + 0.5) / n
        mids.append(a + t[:, None] * (b - a))
        lens.append(np.full(n, L / n))
    if not mids:
        return np.empty((0, 2)), np.empty(0)
    return np.vstack(mids), np.concatenate(lens)


def accumulated_complexity(field: ScalarField, path, step: float = INTEGRATION_STEP) -> float:
    """Midpoint-rule line integral of the field along a polyline or Dubins path.

    ``path`` is an (n, >=2) array of vertices or a :class:`DubinsPath`.
    Raises :class:`FieldBoundsError` if the path leaves the field.
    """
    if step <= 0:
        raise ValueError("integration step must be positive")
    if isinstance(path, DubinsPath):
        n = max(1, math.ceil(path.length / step - 1e-9))
        ds = path.length / n
        s = np.linspace(0.0, path.length, 2 * n + 1)
        P = _poses_numpy(path, s)
        _require_inside(field, P)
        mids = P[1::2]
        return float(bilinear_unchecked(field, mids[:, 0], mids[:, 1]).sum() * ds)
    pts = np.asarray(path, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("path must be an (n, 2) array of vertices")
    _require_inside(field, pts)
    mids, lens = polyline_midpoints(pts, step)
    if len(lens) == 0:
        return 0.0
    return float(bilinear_unchecked(field, mids[:, 0], mids[:, 1]) @ lens)


def _require_inside(field: ScalarField, P: np.ndarray) -> None:
    inside = field.contains(P[:, :2])
    if not inside.all():
        bad = P[np.argmin(inside)]
        raise FieldBoundsError(f"path leaves the field at ({bad[0]:.6g}, {bad[1]:.6g})")


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)[:, :2]
    return float(np.hypot(*np.diff(pts, axis=0).T).sum()) if len(pts) > 1 else 0.0


def attach_headings(points: np.ndarray, final_heading: float | None = None) -> np.ndarray:
    """Poses from a polyline; each vertex takes the bearing of its outgoing segment."""
    pts = np.asarray(points, dtype=float)[:, :2]
    d = np.diff(pts, axis=0)
    psi = np.arctan2(d[:, 1], d[:, 0])
    last = psi[-1] if final_heading is None else wrap_angle(final_heading)
    psi = np.append(psi, last)
    return np.column_stack([pts, psi])


def sample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Points along a polyline no farther than ``spacing`` apart, vertices included."""
    pts = np.asarray(points, dtype=float)[:, :2]
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        L = math.dist(a, b)
        if L == 0.0:
            continue
        s = sample_arclengths(L, spacing)[1:] / L
        out.append(a + s[:, None] * (b - a))
    return np.vstack(out)
