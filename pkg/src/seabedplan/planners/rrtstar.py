"""Dubins RRT* over poses (x, y, psi) with the length + alpha * complexity edge cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _accel
from .._accel import njit
from ..dubins import _edge_numba, _edge_numpy, _shortest, nearest_by_dubins, sample_path, shortest_dubins
from ..field import ObstacleGrid, ScalarField
from ..geometry import Pose2, wrap_angle, wrap_angles
from .common import CostWeights, PlannedPath

UNIT_BALL_3D = 4.0 / 3.0 * math.pi


@dataclass(frozen=True)
class RRTStarOptions:
    iterations: int = 5000
    goal_bias: float = 0.05
    max_step: float = 20.0
    r_max: float = 50.0
    goal_radius: float = 5.0
    goal_heading_tol: float = math.radians(30.0)
    collision_step: float = 0.5
    waypoint_spacing: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if min(self.max_step, self.r_max, self.goal_radius, self.collision_step,
               self.waypoint_spacing) <= 0:
            raise ValueError("distances must be positive")


def near_radius_constant(free_area: float, rho: float) -> float:
    """gamma for the (x, y, rho * psi) configuration space."""
    volume = free_area * 2.0 * math.pi * rho
    return 2.0 * (volume / UNIT_BALL_3D) ** (1.0 / 3.0)


def near_radius(n: int, gamma: float, r_max: float) -> float:
    if n < 2:
        return r_max
    return min(gamma * (math.log(n) / n) ** (1.0 / 3.0), r_max)


# Both kernels first bound every candidate edge cost from below by
# ``unit * dubins_length`` with ``unit = 1 + alpha * min(field)`` (every
# interpolated value is at least the field minimum) and only
# integrate/collision-check the edges that could still win.


@njit
def _choose_parent_numba(P, costs, new, rho, alpha, unit, values, occ, ox, oy, cell, step):
    m = P.shape[0]
    lb = np.empty(m)
    for i in range(m):
        _, t, p, q = _shortest(P[i, 0], P[i, 1], P[i, 2], new[0], new[1], new[2], rho)
        lb[i] = costs[i] + (t + p + q) * rho * unit
    order = np.argsort(lb, kind="mergesort")
    best, best_cost, best_len, best_chi = -1, np.inf, 0.0, 0.0
    for k in order:
        if lb[k] >= best_cost:
            break
        length, chi, ok = _edge_numba(P[k, 0], P[k, 1], P[k, 2], new[0], new[1], new[2],
                                      rho, values, occ, ox, oy, cell, step)
        if ok:
            c = costs[k] + length + alpha * chi
            if c < best_cost:
                best, best_cost, best_len, best_chi = k, c, length, chi
    return best, best_cost, best_len, best_chi


def _choose_parent_numpy(P, costs, new, rho, alpha, unit, values, occ, ox, oy, cell, step):
    lb = np.empty(len(P))
    for i in range(len(P)):
        _, t, p, q = _shortest(P[i, 0], P[i, 1], P[i, 2], new[0], new[1], new[2], rho)
        lb[i] = costs[i] + (t + p + q) * rho * unit
    best, best_cost, best_len, best_chi = -1, math.inf, 0.0, 0.0
    for k in np.argsort(lb, kind="mergesort"):
        if lb[k] >= best_cost:
            break
        length, chi, ok = _edge_numpy(P[k, 0], P[k, 1], P[k, 2], new[0], new[1], new[2],
                                      rho, values, occ, ox, oy, cell, step)
        if ok and costs[k] + length + alpha * chi < best_cost:
            best, best_cost, best_len, best_chi = k, costs[k] + length + alpha * chi, length, chi
    return best, best_cost, best_len, best_chi


@njit
def _rewire_numba(new, new_cost, P, costs, rho, alpha, unit, values, occ, ox, oy, cell, step):
    m = P.shape[0]
    improved = np.zeros(m, dtype=np.bool_)
    cand = np.empty(m)
    lens = np.empty(m)
    chis = np.empty(m)
    for i in range(m):
        _, t, p, q = _shortest(new[0], new[1], new[2], P[i, 0], P[i, 1], P[i, 2], rho)
        if new_cost + (t + p + q) * rho * unit >= costs[i]:
            continue
        length, chi, ok = _edge_numba(new[0], new[1], new[2], P[i, 0], P[i, 1], P[i, 2],
                                      rho, values, occ, ox, oy, cell, step)
        c = new_cost + length + alpha * chi
        if ok and c < costs[i]:
            improved[i] = True
            cand[i], lens[i], chis[i] = c, length, chi
    return improved, cand, lens, chis


def _rewire_numpy(new, new_cost, P, costs, rho, alpha, unit, values, occ, ox, oy, cell, step):
    m = len(P)
    improved = np.zeros(m, dtype=bool)
    cand, lens, chis = np.empty(m), np.empty(m), np.empty(m)
    for i in range(m):
        _, t, p, q = _shortest(new[0], new[1], new[2], P[i, 0], P[i, 1], P[i, 2], rho)
        if new_cost + (t + p + q) * rho * unit >= costs[i]:
            continue
        length, chi, ok = _edge_numpy(new[0], new[1], new[2], P[i, 0], P[i, 1], P[i, 2],
                                      rho, values, occ, ox, oy, cell, step)
        c = new_cost + length + alpha * chi
        if ok and c < costs[i]:
            improved[i] = True
            cand[i], lens[i], chis[i] = c, length, chi
    return improved, cand, lens, chis


class _Tree:
    def __init__(self, capacity: int, root: Pose2):
        self.pose = np.empty((capacity, 3))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.cost = np.empty(capacity)
        self.edge_len = np.zeros(capacity)
        self.edge_chi = np.zeros(capacity)
        self.children: list[list[int]] = []
        self.n = 0
        self.add(root, -1, 0.0, 0.0, 0.0)

    def add(self, pose, parent, cost, length, chi) -> int:
        i = self.n
        self.pose[i] = pose
        self.parent[i] = parent
        self.cost[i] = cost
        self.edge_len[i] = length
        self.edge_chi[i] = chi
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    def distances(self, q: np.ndarray, rho: float) -> np.ndarray:
        P = self.pose[:self.n]
        dpsi = wrap_angles(P[:, 2] - q[2])
        return np.sqrt((P[:, 0] - q[0]) ** 2 + (P[:, 1] - q[1]) ** 2 + (rho * dpsi) ** 2)

    def reparent(self, i: int, new_parent: int, cost: float, length: float, chi: float) -> None:
        self.children[self.parent[i]].remove(i)
        self.children[new_parent].append(i)
        self.parent[i] = new_parent
        self.edge_len[i] = length
        self.edge_chi[i] = chi
        delta = cost - self.cost[i]
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] += delta
            stack.extend(self.children[k])

    def branch(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out[::-1]


def rrt_star_plan(field: ScalarField, obstacles: ObstacleGrid, start, goal,
                  weights: CostWeights = CostWeights(), rho: float = 10.0, seed: int = 0,
                  options: RRTStarOptions = RRTStarOptions()) -> PlannedPath:
    """Asymptotically optimal Dubins-RRT* plan from ``start`` to the goal region.

    Every edge is the shortest Dubins path between its end poses; it is
    feasible when all samples along it (``collision_step`` apart) are inside
    the field and in free cells. Its cost is its length plus ``alpha`` times
    the accumulated complexity along it. A node reaches the goal when it lies
    within ``goal_radius`` of the goal position and ``goal_heading_tol`` of
    its heading. ``stats["history"]`` holds the best goal cost after every
    iteration (``inf`` until the goal is first reached).
    """
    if not rho > 0:
        raise ValueError("turn radius must be positive")
    start, goal = Pose2.make(*start), Pose2.make(*goal)
    opt = options
    alpha = weights.alpha
    values = field.values
    occ = np.ascontiguousarray(obstacles.occupancy, dtype=np.bool_)
    if occ.shape != values.shape:
        raise ValueError("obstacle grid and field differ in shape")
    for label, p in (("start", start), ("goal", goal)):
        if obstacles.occupied_at([p.x, p.y])[0]:
            raise ValueError(f"{label} lies in an occupied cell or outside the field")

    origin, cell = field.origin, field.cell_size
    xmin, xmax, ymin, ymax = field.bounds
    free_area = float((~occ).sum()) * cell * cell
    gamma = near_radius_constant(free_area, rho)
    rng = np.random.default_rng(seed)
    goal_arr = np.array(goal)

    tree = _Tree(opt.iterations + 1, start)
    goal_nodes: list[int] = []
    history = np.full(opt.iterations, math.inf)
    best = math.inf
    best_node = -1
    rewires = 0

    if _accel.USE_NUMBA:
        choose, rewire = _choose_parent_numba, _rewire_numba
    else:
        choose, rewire = _choose_parent_numpy, _rewire_numpy
    unit = 1.0 + alpha * float(values.min())
    grid = (values, occ, float(origin[0]), float(origin[1]), float(cell), float(opt.collision_step))

    def in_goal(p) -> bool:
        return (math.hypot(p[0] - goal.x, p[1] - goal.y) <= opt.goal_radius
                and abs(wrap_angle(p[2] - goal.psi)) <= opt.goal_heading_tol + 1e-12)

    for it in range(opt.iterations):
        if rng.random() < opt.goal_bias:
            q = goal_arr.copy()
        else:
            while True:
                xy = rng.uniform((xmin, ymin), (xmax, ymax))
                if not occ[min(int((xy[1] - ymin) / cell), occ.shape[0] - 1),
                           min(int((xy[0] - xmin) / cell), occ.shape[1] - 1)]:
                    break
            q = np.array([xy[0], xy[1], rng.uniform(-math.pi, math.pi)])

        # nearest by Dubins length: the weighted metric misjudges nodes beside the sample
        nearest = nearest_by_dubins(tree.pose[:tree.n], q, rho)
        path = shortest_dubins(tuple(tree.pose[nearest]), tuple(q), rho)
        if path.length > opt.max_step:
            new = np.array(path.pose_at(opt.max_step))
        else:
            new = q
        if obstacles.occupied_at(new[:2])[0]:
            history[it] = best
            continue

        d_new = tree.distances(new, rho)
        if d_new.min() < 1e-9:
            history[it] = best
            continue
        r = near_radius(tree.n, gamma, opt.r_max)
        near = np.flatnonzero(d_new <= r)
        if nearest not in near:
            near = np.sort(np.append(near, nearest))
        k, total, length, chi = choose(tree.pose[near], tree.cost[near], new, rho, alpha, unit, *grid)
        if k < 0:
            history[it] = best
            continue
        parent = int(near[k])
        idx = tree.add(new, parent, float(total), float(length), float(chi))

        others = near[(near != parent) & (near != 0)]
        if len(others):
            improved, cand, lens, chis = rewire(tree.pose[idx], tree.cost[idx], tree.pose[others],
                                                tree.cost[others], rho, alpha, unit, *grid)
            for j in np.flatnonzero(improved):
                tree.reparent(int(others[j]), idx, float(cand[j]), float(lens[j]), float(chis[j]))
                rewires += 1

        if in_goal(new):
            goal_nodes.append(idx)
        if goal_nodes:
            gcost = tree.cost[goal_nodes]
            j = int(np.argmin(gcost))
            best, best_node = float(gcost[j]), goal_nodes[j]
        history[it] = best

    stats = {"nodes": tree.n, "goal_nodes": len(goal_nodes), "rewires": rewires,
             "history": history, "gamma": gamma, "seed": seed}
    if best_node < 0:
        return PlannedPath.infeasible("rrtstar", alpha, **stats)

    branch = tree.branch(best_node)
    pieces = []
    for a, b in zip(branch[:-1], branch[1:]):
        seg = shortest_dubins(tuple(tree.pose[a]), tuple(tree.pose[b]), rho)
        pts = sample_path(seg, opt.waypoint_spacing)
        pieces.append(pts if not pieces else pts[1:])
    waypoints = np.vstack(pieces) if pieces else tree.pose[[0]].copy()
    length = float(tree.edge_len[branch[1:]].sum())
    chi = float(tree.edge_chi[branch[1:]].sum())
    stats["branch"] = len(branch)
    stats["tree_cost"] = float(tree.cost[best_node])
    return PlannedPath("rrtstar", alpha, waypoints, length, chi, True, stats)

