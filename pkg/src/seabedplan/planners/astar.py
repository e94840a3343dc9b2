"""8-connected grid A* over the predicted complexity field.

Moving into cell ``v`` costs ``step + alpha * step * nb(v)`` where ``step`` is
the metric step length and ``nb(v)`` is the largest predicted complexity
within the safety radius of ``v``. Diagonal moves may not cut the corner of
an occupied cell.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.ndimage import maximum_filter

from .. import _accel
from .._accel import njit
from ..field import ObstacleGrid, ScalarField
from .common import CostWeights, PlannedPath, accumulated_complexity, attach_headings, polyline_length

SQRT2 = math.sqrt(2.0)
# (drow, dcol, diagonal)
_MOVES = np.array([[0, 1, 0], [1, 0, 0], [0, -1, 0], [-1, 0, 0],
                   [1, 1, 1], [1, -1, 1], [-1, 1, 1], [-1, -1, 1]], dtype=np.int64)


def neighborhood_max(field: ScalarField, radius: float) -> np.ndarray:
    """Per-cell maximum of the field over the disk of ``radius`` metres around each cell centre."""
    r = int(math.floor(radius / field.cell_size + 1e-9))
    if r <= 0:
        return field.values.copy()
    di, dj = np.mgrid[-r:r + 1, -r:r + 1]
    disk = (di**2 + dj**2) * field.cell_size**2 <= radius**2 + 1e-9
    return maximum_filter(field.values, footprint=disk, mode="nearest")


def edge_cost_tables(nb: np.ndarray, alpha: float, cell: float) -> tuple[np.ndarray, np.ndarray]:
    """Cost of entering each cell by a straight and by a diagonal move."""
    s1, s2 = cell, cell * SQRT2
    return s1 + alpha * s1 * nb, s2 + alpha * s2 * nb


@njit
def _search(straight, diag, occ, sr, sc, gr, gc, cell, use_heuristic):
    """Best-first search; returns (cost to goal or inf, parent array, expansions)."""
    h, w = occ.shape
    n = h * w
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    s = sr * w + sc
    goal = gr * w + gc
    g[s] = 0.0
    f0 = cell * math.hypot(sr - gr, sc - gc) if use_heuristic else 0.0
    heap = [(f0, s)]
    expanded = 0
    while len(heap) > 0:
        _, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = True
        expanded += 1
        if u == goal:
            return g[u], parent, expanded
        ur, uc = u // w, u % w
        for m in range(8):
            vr = ur + _MOVES[m, 0]
            vc = uc + _MOVES[m, 1]
            if vr < 0 or vr >= h or vc < 0 or vc >= w or occ[vr, vc]:
                continue
            if _MOVES[m, 2] == 1:
                if occ[ur, vc] or occ[vr, uc]:
                    continue
                step = diag[vr, vc]
            else:
                step = straight[vr, vc]
            v = vr * w + vc
            if closed[v]:
                continue
            cand = g[u] + step
            if cand < g[v]:
                g[v] = cand
                parent[v] = u
                hv = cell * math.hypot(vr - gr, vc - gc) if use_heuristic else 0.0
                heapq.heappush(heap, (cand + hv, v))
    return np.inf, parent, expanded


def _search_impl():
    return _search if _accel.USE_NUMBA else getattr(_search, "py_func", _search)


def _cell_of(field: ScalarField, p) -> tuple[int, int]:
    row, col = field.cell_index([p[0], p[1]])
    return int(row[0]), int(col[0])


def grid_search(field: ScalarField, obstacles: ObstacleGrid, start, goal, weights: CostWeights,
                heuristic: bool = True):
    """Run the search; returns (cost, list of (row, col) cells or None, expansions)."""
    if obstacles.occupancy.shape != field.values.shape:
        raise ValueError("obstacle grid and field differ in shape")
    occ = np.ascontiguousarray(obstacles.occupancy, dtype=np.bool_)
    for label, p in (("start", start), ("goal", goal)):
        if not field.contains(np.asarray(p[:2], dtype=float))[0]:
            raise ValueError(f"{label} lies outside the field")
        if occ[_cell_of(field, p)]:
            raise ValueError(f"{label} lies in an occupied cell")
    sr, sc = _cell_of(field, start)
    gr, gc = _cell_of(field, goal)
    nb = neighborhood_max(field, weights.safety_radius)
    straight, diag = edge_cost_tables(nb, weights.alpha, field.cell_size)
    cost, parent, expanded = _search_impl()(straight, diag, occ, sr, sc, gr, gc,
                                            float(field.cell_size), heuristic)
    if not math.isfinite(cost):
        return math.inf, None, int(expanded)
    w = field.width
    cells = []
    u = gr * w + gc
    while u != -1:
        cells.append((u // w, u % w))
        u = parent[u]
    return float(cost), cells[::-1], int(expanded)


def _simplify(points: np.ndarray) -> np.ndarray:
    """Drop interior vertices where the direction does not change."""
    if len(points) <= 2:
        return points
    keep = [0]
    for i in range(1, len(points) - 1):
        d0 = points[i] - points[keep[-1]]
        d1 = points[i + 1] - points[i]
        if abs(d0[0] * d1[1] - d0[1] * d1[0]) > 1e-9 or d0 @ d1 <= 0:
            keep.append(i)
    keep.append(len(points) - 1)
    return points[keep]


def astar_plan(field: ScalarField, obstacles: ObstacleGrid, start, goal,
               weights: CostWeights = CostWeights(), heuristic: bool = True) -> PlannedPath:
    """Cost-optimal 8-connected grid path from ``start`` to ``goal``.

    Waypoints are the cell centres of the optimal cell chain with the first
    and last replaced by the exact start and goal points, collinear runs
    merged, and headings taken from the outgoing segment bearing. The goal
    vertex keeps the goal heading when ``goal`` is a pose.
    """
    name = "astar" if heuristic else "dijkstra"
    cost, cells, expanded = grid_search(field, obstacles, start, goal, weights, heuristic)
    if cells is None:
        return PlannedPath.infeasible(name, weights.alpha, expanded=expanded)
    x0, y0 = field.origin
    c = field.cell_size
    pts = np.array([[x0 + (j + 0.5) * c, y0 + (i + 0.5) * c] for i, j in cells])
    pts[0] = start[:2]
    if len(pts) == 1:
        pts = np.vstack([pts, np.asarray(goal[:2], dtype=float)])
    else:
        pts[-1] = goal[:2]
    pts = _simplify(pts)
    final = goal[2] if len(goal) > 2 else None
    wps = attach_headings(pts, final)
    length = polyline_length(wps)
    chi = accumulated_complexity(field, wps)
    return PlannedPath(name, weights.alpha, wps, length, chi, True,
                       {"search_cost": cost, "expanded": expanded, "cells": len(cells)})


def dijkstra_plan(field, obstacles, start, goal, weights: CostWeights = CostWeights()) -> PlannedPath:
    """Uninformed search with the same edge costs; the reference for A*."""
    return astar_plan(field, obstacles, start, goal, weights, heuristic=False)
