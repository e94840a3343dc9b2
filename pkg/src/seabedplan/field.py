"""Seabed-complexity scalar fields, scenarios and obstacle grids.

A :class:`ScalarField` is a regular grid of complexity values in [0, 1].
Cell ``(i, j)`` covers ``[x0 + j*c, x0 + (j+1)*c) x [y0 + i*c, y0 + (i+1)*c)``
and row 0 is the minimum-y row. Continuous queries interpolate bilinearly
between cell centres; inside the outer half-cell border the nearest row or
column of centres is held constant, so the field is defined (and continuous)
over the whole rectangle ``[x0, x0 + w*c] x [y0, y0 + h*c]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import _accel
from ._accel import njit
from .geometry import Pose2


class FieldBoundsError(ValueError):
    """A query point lies outside the field rectangle."""


class FieldFormatError(ValueError):
    """A field file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ScalarField:
    origin: tuple[float, float]
    cell_size: float
    values: np.ndarray  # shape (height, width), row 0 = minimum y

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim != 2:
            raise ValueError("values must be a 2D array")
        h, w = v.shape
        if w < 2 or h < 2:
            raise ValueError(f"field must be at least 2x2 cells, got {w}x{h}")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError("cell_size must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("field values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width * self.cell_size, self.height * self.cell_size)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)."""
        x0, y0 = self.origin
        return (x0, x0 + self.width * self.cell_size, y0, y0 + self.height * self.cell_size)

    def cell_centers(self) -> np.ndarray:
        """All cell centres as an (h*w, 2) array in row-major order."""
        x0, y0 = self.origin
        c = self.cell_size
        xs = x0 + (np.arange(self.width) + 0.5) * c
        ys = y0 + (np.arange(self.height) + 0.5) * c
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, xmax, ymin, ymax = self.bounds
        return (p[:, 0] >= xmin) & (p[:, 0] <= xmax) & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)

    def cell_index(self, points) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) of the cells containing ``points``; the far edges belong to the last cell."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0 = self.origin
        col = np.floor((p[:, 0] - x0) / self.cell_size).astype(np.int64)
        row = np.floor((p[:, 1] - y0) / self.cell_size).astype(np.int64)
        return np.clip(row, 0, self.height - 1), np.clip(col, 0, self.width - 1)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.origin, self.cell_size, values)


def _check_inside(field: ScalarField, p: np.ndarray) -> None:
    inside = field.contains(p)
    if not np.all(inside):
        bad = p[np.argmin(inside)]
        raise FieldBoundsError(
            f"point ({bad[0]:.6g}, {bad[1]:.6g}) outside field bounds {field.bounds}"
        )


# -- bilinear kernels -------------------------------------------------------


@njit
def _bilinear_numba(values, x0, y0, c, px, py):
    h, w = values.shape
    n = px.shape[0]
    out = np.empty(n)
    for k in range(n):
        fx = (px[k] - x0) / c - 0.5
        fy = (py[k] - y0) / c - 0.5
        fx = min(max(fx, 0.0), w - 1.0)
        fy = min(max(fy, 0.0), h - 1.0)
        j = min(int(fx), w - 2)
        i = min(int(fy), h - 2)
        tx = fx - j
        ty = fy - i
        out[k] = ((1.0 - tx) * (1.0 - ty) * values[i, j]
                  + tx * (1.0 - ty) * values[i, j + 1]
                  + (1.0 - tx) * ty * values[i + 1, j]
                  + tx * ty * values[i + 1, j + 1])
    return out


def _bilinear_numpy(values, x0, y0, c, px, py):
    h, w = values.shape
    fx = np.clip((px - x0) / c - 0.5, 0.0, w - 1.0)
    fy = np.clip((py - y0) / c - 0.5, 0.0, h - 1.0)
    j = np.minimum(fx.astype(np.int64), w - 2)
    i = np.minimum(fy.astype(np.int64), h - 2)
    tx = fx - j
    ty = fy - i
    return ((1.0 - tx) * (1.0 - ty) * values[i, j]
            + tx * (1.0 - ty) * values[i, j + 1]
            + (1.0 - tx) * ty * values[i + 1, j]
            + tx * ty * values[i + 1, j + 1])


def bilinear_unchecked(field: ScalarField, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Batch bilinear interpolation without the bounds check (hot path)."""
    x0, y0 = field.origin
    px = np.ascontiguousarray(px, dtype=np.float64)
    py = np.ascontiguousarray(py, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _bilinear_numba(field.values, x0, y0, field.cell_size, px, py)
    return _bilinear_numpy(field.values, x0, y0, field.cell_size, px, py)


def sample_bilinear(field: ScalarField, p) -> float | np.ndarray:
    """Bilinear interpolation of the field at one point ``(x, y)`` or an (n, 2) array.

    Raises :class:`FieldBoundsError` for points outside the field rectangle.
    """
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    _check_inside(field, pts)
    out = bilinear_unchecked(field, pts[:, 0], pts[:, 1])
    return float(out[0]) if single else out


# -- obstacles --------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleGrid:
    origin: tuple[float, float]
    cell_size: float
    occupancy: np.ndarray  # bool, shape (height, width)
    threshold: float

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    def occupied_at(self, points) -> np.ndarray:
        """Occupancy of the cells containing ``points``; points outside count as occupied."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0 = self.origin
        col = np.floor((p[:, 0] - x0) / self.cell_size).astype(np.int64)
        row = np.floor((p[:, 1] - y0) / self.cell_size).astype(np.int64)
        w, h = self.width, self.height
        xmax = x0 + w * self.cell_size
        ymax = y0 + h * self.cell_size
        inside = (p[:, 0] >= x0) & (p[:, 0] <= xmax) & (p[:, 1] >= y0) & (p[:, 1] <= ymax)
        col = np.clip(col, 0, w - 1)
        row = np.clip(row, 0, h - 1)
        return ~inside | self.occupancy[row, col]


def threshold_obstacles(field: ScalarField, threshold: float = 0.9) -> ObstacleGrid:
    """Cells whose value is strictly greater than ``threshold`` are occupied."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    occ = field.values > threshold
    occ.setflags(write=False)
    return ObstacleGrid(field.origin, field.cell_size, occ, float(threshold))


# -- synthetic scenarios ----------------------------------------------------


@dataclass(frozen=True)
class Step:
    """Half-plane offset: cells on the +normal side of the line get ``delta`` added."""

    x: float
    y: float
    angle: float  # direction of the normal
    delta: float


@dataclass(frozen=True)
class FieldSynthesis:
    """Parameters of the synthetic field generator.

    The field is ``base_level`` plus Gaussian lobes, half-plane steps and
    rectangular plateaus, clipped to [0, 1]. ``n_obstacles`` high-complexity
    blobs are painted at ``obstacle_level`` (> 0.9). A barrier is a band of
    obstacle level across the field with a single gap.
    """

    width: int = 160
    height: int = 160
    cell_size: float = 1.0
    base_level: float = 0.15
    n_lobes: int = 6
    lobe_amplitude: tuple[float, float] = (0.15, 0.45)
    lobe_sigma: tuple[float, float] = (8.0, 30.0)
    n_steps: int = 2
    step_delta: tuple[float, float] = (0.1, 0.3)
    steps: tuple[Step, ...] = ()
    n_plateaus: int = 2
    plateau_size: tuple[float, float] = (15.0, 45.0)
    plateau_delta: tuple[float, float] = (0.15, 0.4)
    n_obstacles: int = 2
    obstacle_size: tuple[float, float] = (10.0, 25.0)
    obstacle_level: float = 0.97
    barrier: bool = False
    barrier_width: float = 12.0
    barrier_gap: float = 30.0
    start_frac: tuple[float, float] = (0.05, 0.5)
    goal_frac: tuple[float, float] = (0.95, 0.5)
    clear_radius: float = 15.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2 or not self.cell_size > 0:
            raise ValueError("degenerate field dimensions")
        if min(self.n_lobes, self.n_steps, self.n_plateaus, self.n_obstacles) < 0:
            raise ValueError("feature counts must be non-negative")
        for frac in (self.start_frac, self.goal_frac):
            if not (0.0 < frac[0] < 1.0 and 0.0 < frac[1] < 1.0):
                raise ValueError("start/goal fractions must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class Scenario:
    name: str
    field: ScalarField
    start: Pose2
    goal: Pose2

    def __post_init__(self):
        for label, pose in (("start", self.start), ("goal", self.goal)):
            if not self.field.contains([pose.x, pose.y])[0]:
                raise ValueError(f"{label} pose lies outside the field")


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _rotated_rect_mask(gx, gy, cx, cy, half_w, half_h, angle):
    ca, sa = math.cos(angle), math.sin(angle)
    dx, dy = gx - cx, gy - cy
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    return (np.abs(u) <= half_w) & (np.abs(v) <= half_h)


def generate_field(seed: int, spec: FieldSynthesis = FieldSynthesis()) -> ScalarField:
    rng = np.random.default_rng(seed)
    c = spec.cell_size
    W, H = spec.width * c, spec.height * c
    xs = (np.arange(spec.width) + 0.5) * c
    ys = (np.arange(spec.height) + 0.5) * c
    gx, gy = np.meshgrid(xs, ys)
    v = np.full(gx.shape, spec.base_level)

    for _ in range(spec.n_lobes):
        cx, cy = rng.uniform(0, W), rng.uniform(0, H)
        amp = _uniform(rng, spec.lobe_amplitude)
        s = _uniform(rng, spec.lobe_sigma)
        v += amp * np.exp(-0.5 * ((gx - cx) ** 2 + (gy - cy) ** 2) / s**2)

    steps = list(spec.steps)
    for _ in range(spec.n_steps):
        # axis-aligned half the time, oblique otherwise
        if rng.random() < 0.5:
            angle = float(rng.choice([0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi]))
        else:
            angle = float(rng.uniform(-math.pi, math.pi))
        steps.append(Step(rng.uniform(0.2 * W, 0.8 * W), rng.uniform(0.2 * H, 0.8 * H),
                          angle, _uniform(rng, spec.step_delta)))
    for st in steps:
        side = (gx - st.x) * math.cos(st.angle) + (gy - st.y) * math.sin(st.angle)
        v += np.where(side > 0.0, st.delta, 0.0)

    for _ in range(spec.n_plateaus):
        cx, cy = rng.uniform(0, W), rng.uniform(0, H)
        hw = 0.5 * _uniform(rng, spec.plateau_size)
        hh = 0.5 * _uniform(rng, spec.plateau_size)
        ang = rng.uniform(0, math.pi)
        v += np.where(_rotated_rect_mask(gx, gy, cx, cy, hw, hh, ang),
                      _uniform(rng, spec.plateau_delta), 0.0)

    v = np.clip(v, 0.0, spec.obstacle_level - 0.1 if spec.n_obstacles or spec.barrier else 1.0)

    start = (spec.start_frac[0] * W, spec.start_frac[1] * H)
    goal = (spec.goal_frac[0] * W, spec.goal_frac[1] * H)

    for _ in range(spec.n_obstacles):
        # keep blobs off the start/goal clearings and the field border
        for _attempt in range(50):
            cx, cy = rng.uniform(0.25 * W, 0.75 * W), rng.uniform(0.15 * H, 0.85 * H)
            size = _uniform(rng, spec.obstacle_size)
            if min(math.dist((cx, cy), start), math.dist((cx, cy), goal)) > size + spec.clear_radius:
                break
        ex = 0.5 * size
        ey = 0.5 * size * rng.uniform(0.5, 1.0)
        ang = rng.uniform(0, math.pi)
        ca, sa = math.cos(ang), math.sin(ang)
        u = ca * (gx - cx) + sa * (gy - cy)
        w_ = -sa * (gx - cx) + ca * (gy - cy)
        blob = (u / ex) ** 2 + (w_ / ey) ** 2 <= 1.0
        v = np.where(blob, np.maximum(v, spec.obstacle_level), v)

    if spec.barrier:
        bx = rng.uniform(0.4 * W, 0.6 * W)
        gap_c = rng.uniform(0.2 * H, 0.8 * H)
        band = np.abs(gx - bx) <= 0.5 * spec.barrier_width
        gap = np.abs(gy - gap_c) <= 0.5 * spec.barrier_gap
        v = np.where(band & ~gap, np.maximum(v, spec.obstacle_level), v)

    # start and goal sit in low-complexity clearings
    for p in (start, goal):
        near = (gx - p[0]) ** 2 + (gy - p[1]) ** 2 <= spec.clear_radius**2
        v = np.where(near, np.minimum(v, spec.base_level), v)

    return ScalarField((0.0, 0.0), c, np.clip(v, 0.0, 1.0))


def generate_scenario(seed: int, spec: FieldSynthesis = FieldSynthesis(), name: str = "synthetic") -> Scenario:
    """Deterministic synthetic scenario: field plus start/goal poses facing +x."""
    fld = generate_field(seed, spec)
    W, H = fld.extent
    start = Pose2.make(spec.start_frac[0] * W, spec.start_frac[1] * H, 0.0)
    goal = Pose2.make(spec.goal_frac[0] * W, spec.goal_frac[1] * H, 0.0)
    return Scenario(name, fld, start, goal)


# Six default scenarios in the spirit of the field data: from a few smooth
# lobes (a) to many discontinuities (f); "c" carries a barrier with one gap.
DEFAULT_SCENARIO_SPECS: dict[str, FieldSynthesis] = {
    "a": FieldSynthesis(n_lobes=4, n_steps=1, n_plateaus=1, n_obstacles=1),
    "b": FieldSynthesis(n_lobes=6, n_steps=2, n_plateaus=2, n_obstacles=2),
    "c": FieldSynthesis(n_lobes=5, n_steps=1, n_plateaus=1, n_obstacles=0, barrier=True),
    "d": FieldSynthesis(n_lobes=10, n_steps=0, n_plateaus=0, n_obstacles=2),
    "e": FieldSynthesis(n_lobes=6, n_steps=3, n_plateaus=3, n_obstacles=2),
    "f": FieldSynthesis(n_lobes=8, n_steps=4, n_plateaus=4, n_obstacles=3),
}


def default_scenarios(seed: int = 0) -> list[Scenario]:
    out = []
    for k, (name, spec) in enumerate(DEFAULT_SCENARIO_SPECS.items()):
        out.append(generate_scenario(seed * 1000 + k, spec, name=name))
    return out


# -- persistence ------------------------------------------------------------


def save_field(field: ScalarField, path) -> None:
    x0, y0 = field.origin
    lines = [f"{field.width} {field.height} {field.cell_size!r} {x0!r} {y0!r}"]
    for row in field.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FieldFormatError(f"not a number: {tok!r}", line) from None


def load_field(path) -> ScalarField:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FieldFormatError("empty file", 1)
    head = text[0].split()
    if len(head) != 5:
        raise FieldFormatError("header must be 'width height cell_size origin_x origin_y'", 1)
    try:
        w, h = int(head[0]), int(head[1])
    except ValueError:
        raise FieldFormatError("width and height must be integers", 1) from None
    if w < 2 or h < 2:
        raise FieldFormatError(f"width and height must be >= 2, got {w}x{h}", 1)
    cell = _parse_float(head[2], 1)
    x0, y0 = _parse_float(head[3], 1), _parse_float(head[4], 1)
    if not (cell > 0 and math.isfinite(cell)):
        raise FieldFormatError("cell_size must be positive", 1)
    if not (math.isfinite(x0) and math.isfinite(y0)):
        raise FieldFormatError("origin must be finite", 1)

    body = text[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != h:
        raise FieldFormatError(f"expected {h} rows, found {len(body)}", 1 + len(body))
    values = np.empty((h, w))
    for i, line in enumerate(body):
        lineno = i + 2
        toks = line.split()
        if len(toks) != w:
            raise FieldFormatError(f"expected {w} values, found {len(toks)}", lineno)
        for j, tok in enumerate(toks):
            val = _parse_float(tok, lineno)
            if not math.isfinite(val):
                raise FieldFormatError(f"non-finite value {tok!r}", lineno)
            if not 0.0 <= val <= 1.0:
                raise FieldFormatError(f"value {tok} outside [0, 1]", lineno)
            values[i, j] = val
    return ScalarField((x0, y0), cell, values)


def save_scenario(scenario: Scenario, directory, field_name: str | None = None) -> Path:
    """Write ``<name>.field`` and ``<name>.yaml`` into ``directory``; returns the YAML path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    field_name = field_name or f"{scenario.name}.field"
    save_field(scenario.field, d / field_name)
    doc = {
        "name": scenario.name,
        "field": field_name,
        "start": [scenario.start.x, scenario.start.y, scenario.start.psi],
        "goal": [scenario.goal.x, scenario.goal.y, scenario.goal.psi],
    }
    out = d / f"{scenario.name}.yaml"
    out.write_text(yaml.safe_dump(doc, sort_keys=True))
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    doc = yaml.safe_load(path.read_text())
    if not isinstance(doc, dict):
        raise FieldFormatError(f"{path}: scenario must be a mapping")
    try:
        fld = load_field(path.parent / doc["field"])
        start = Pose2.make(*doc["start"])
        goal = Pose2.make(*doc["goal"])
        return Scenario(str(doc["name"]), fld, start, goal)
    except (KeyError, TypeError) as exc:
        raise FieldFormatError(f"{path}: bad scenario document ({exc})") from None
