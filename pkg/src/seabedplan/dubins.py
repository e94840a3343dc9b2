"""Shortest bounded-curvature (Dubins) paths between planar poses.

All six words are evaluated in the normalised frame where the start sits at
the origin, the goal on the +x axis and distances are in units of the turn
radius. Segment parameters follow the usual (t, p, q) convention: arc angles
in radians, and for the middle straight of a CSC word its length in turn
radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .geometry import Pose2, wrap_angle

WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
# turn direction per segment: +1 left, -1 right, 0 straight
_SEGMENT_TYPES = np.array([
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [-1, 1, -1],
    [1, -1, 1],
], dtype=np.int64)

TWO_PI = 2.0 * math.pi


@njit
def _mod2pi(a):
    r = a - TWO_PI * math.floor(a / TWO_PI)
    if r >= TWO_PI:
        r -= TWO_PI
    return r


@njit
def _word_params(word, alpha, beta, d):
    """(ok, t, p, q) of one word in the normalised frame."""
    sa, sb = math.sin(alpha), math.sin(beta)
    ca, cb = math.cos(alpha), math.cos(beta)
    c_ab = math.cos(alpha - beta)
    d2 = d * d
    if word == 0:  # LSL
        p2 = 2.0 + d2 - 2.0 * c_ab + 2.0 * d * (sa - sb)
        if p2 < 0.0:
            if p2 < -1e-10:
                return False, 0.0, 0.0, 0.0
            p2 = 0.0
        tmp = math.atan2(cb - ca, d + sa - sb)
        return True, _mod2pi(tmp - alpha), math.sqrt(p2), _mod2pi(beta - tmp)
    if word == 1:  # RSR
        p2 = 2.0 + d2 - 2.0 * c_ab + 2.0 * d * (sb - sa)
        if p2 < 0.0:
            if p2 < -1e-10:
                return False, 0.0, 0.0, 0.0
            p2 = 0.0
        tmp = math.atan2(ca - cb, d - sa + sb)
        return True, _mod2pi(alpha - tmp), math.sqrt(p2), _mod2pi(tmp - beta)
    if word == 2:  # LSR
        p2 = -2.0 + d2 + 2.0 * c_ab + 2.0 * d * (sa + sb)
        if p2 < 0.0:
            if p2 < -1e-10:
                return False, 0.0, 0.0, 0.0
            p2 = 0.0
        p = math.sqrt(p2)
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        return True, _mod2pi(tmp - alpha), p, _mod2pi(tmp - beta)
    if word == 3:  # RSL
        p2 = -2.0 + d2 + 2.0 * c_ab - 2.0 * d * (sa + sb)
        if p2 < 0.0:
            if p2 < -1e-10:
                return False, 0.0, 0.0, 0.0
            p2 = 0.0
        p = math.sqrt(p2)
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        return True, _mod2pi(alpha - tmp), p, _mod2pi(beta - tmp)
    if word == 4:  # RLR
        c = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0
        if abs(c) > 1.0:
            return False, 0.0, 0.0, 0.0
        phi = math.atan2(ca - cb, d - sa + sb)
        p = _mod2pi(TWO_PI - math.acos(c))
        t = _mod2pi(alpha - phi + 0.5 * p)
        return True, t, p, _mod2pi(alpha - beta - t + p)
    # LRL
    c = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0
    if abs(c) > 1.0:
        return False, 0.0, 0.0, 0.0
    phi = math.atan2(ca - cb, d + sa - sb)
    p = _mod2pi(TWO_PI - math.acos(c))
    t = _mod2pi(-alpha - phi + 0.5 * p)
    return True, t, p, _mod2pi(beta - alpha - t + p)


@njit
def _shortest(x0, y0, psi0, x1, y1, psi1, rho):
    """(word, t, p, q) of the shortest word; ties resolved by the order of WORDS."""
    dx, dy = x1 - x0, y1 - y0
    d = math.sqrt(dx * dx + dy * dy) / rho
    theta = math.atan2(dy, dx) if d > 0.0 else 0.0
    alpha = _mod2pi(psi0 - theta)
    beta = _mod2pi(psi1 - theta)
    best_w, best_len = -1, math.inf
    bt = bp = bq = 0.0
    for w in range(6):
        ok, t, p, q = _word_params(w, alpha, beta, d)
        if ok:
            total = t + p + q
            if total < best_len:
                best_w, best_len = w, total
                bt, bp, bq = t, p, q
    return best_w, bt, bp, bq


@njit
def _pose_at(x0, y0, psi0, word, t, p, q, rho, s):
    """Pose at arclength ``s`` (metres) along a Dubins path."""
    x, y, psi = x0, y0, psi0
    params = (t, p, q)
    for k in range(3):
        seg_len = params[k] * rho
        ds = min(s, seg_len)
        kind = _SEGMENT_TYPES[word, k]
        if kind == 0:
            x += ds * math.cos(psi)
            y += ds * math.sin(psi)
        else:
            dpsi = kind * ds / rho
            npsi = psi + dpsi
            if kind > 0:
                x += rho * (math.sin(npsi) - math.sin(psi))
                y -= rho * (math.cos(npsi) - math.cos(psi))
            else:
                x -= rho * (math.sin(npsi) - math.sin(psi))
                y += rho * (math.cos(npsi) - math.cos(psi))
            psi = npsi
        s -= ds
        if s <= 0.0:
            break
    return x, y, psi


@dataclass(frozen=True)
class DubinsPath:
    start: Pose2
    word: str
    params: tuple[float, float, float]  # (t, p, q) in the normalised frame
    rho: float

    @property
    def word_index(self) -> int:
        return WORDS.index(self.word)

    @property
    def segments(self) -> tuple[float, float, float]:
        """Segment parameters: arc angles in radians, straight length in metres."""
        t, p, q = self.params
        if self.word[1] == "S":
            return (t, p * self.rho, q)
        return (t, p, q)

    @property
    def segment_lengths(self) -> tuple[float, float, float]:
        return tuple(v * self.rho for v in self.params)

    @property
    def length(self) -> float:
        return sum(self.segment_lengths)

    def pose_at(self, s: float) -> Pose2:
        s = min(max(s, 0.0), self.length)
        x, y, psi = _pose_at(self.start.x, self.start.y, self.start.psi, self.word_index,
                             *self.params, self.rho, s)
        return Pose2(x, y, wrap_angle(psi))

    @property
    def end(self) -> Pose2:
        return self.pose_at(self.length)


def shortest_dubins(start: Pose2, goal: Pose2, rho: float) -> DubinsPath:
    """Minimum-length path over all six words."""
    if not rho > 0:
        raise ValueError("turn radius must be positive")
    start, goal = Pose2.make(*start), Pose2.make(*goal)
    w, t, p, q = _shortest(start.x, start.y, start.psi, goal.x, goal.y, goal.psi, float(rho))
    return DubinsPath(start, WORDS[w], (float(t), float(p), float(q)), float(rho))


def _poses_numpy(path: DubinsPath, s: np.ndarray) -> np.ndarray:
    """Vectorised pose evaluation at arclengths ``s``."""
    rho = path.rho
    types = _SEGMENT_TYPES[path.word_index]
    x = np.full(s.shape, path.start.x)
    y = np.full(s.shape, path.start.y)
    psi = np.full(s.shape, path.start.psi)
    rem = s.astype(float).copy()
    for k in range(3):
        ds = np.minimum(rem, path.params[k] * rho)
        kind = types[k]
        if kind == 0:
            x = x + ds * np.cos(psi)
            y = y + ds * np.sin(psi)
        else:
            npsi = psi + kind * ds / rho
            if kind > 0:
                x = x + rho * (np.sin(npsi) - np.sin(psi))
                y = y - rho * (np.cos(npsi) - np.cos(psi))
            else:
                x = x - rho * (np.sin(npsi) - np.sin(psi))
                y = y + rho * (np.cos(npsi) - np.cos(psi))
            psi = npsi
        rem = np.maximum(rem - ds, 0.0)
    return np.column_stack([x, y, psi])


def sample_arclengths(length: float, spacing: float) -> np.ndarray:
    """0, spacing, 2*spacing, ... plus the end point, never farther apart than ``spacing``."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    n = int(math.floor(length / spacing + 1e-9))
    s = spacing * np.arange(n + 1)
    if length - s[-1] > 1e-9:
        s = np.append(s, length)
    else:
        s[-1] = length
    return s


def sample_path(path: DubinsPath, spacing: float, start: Pose2 | None = None) -> np.ndarray:
    """Poses ``(x, y, psi)`` at arclengths 0, spacing, ..., L; the goal pose is the last row."""
    if start is not None:
        path = DubinsPath(Pose2.make(*start), path.word, path.params, path.rho)
    s = sample_arclengths(path.length, spacing)
    out = _poses_numpy(path, s)
    out[:, 2] = (out[:, 2] + math.pi) % TWO_PI - math.pi
    out[out[:, 2] <= -math.pi, 2] += TWO_PI
    return out


# -- edge evaluation for the planner (hot kernel) ---------------------------


@njit
def _edge_numba(x0, y0, psi0, x1, y1, psi1, rho, values, occ, ox, oy, cell, step):
    """(length, accumulated complexity, feasible) of the Dubins edge between two poses.

    Collision samples are spaced at most ``step`` apart; the complexity
    integral uses the midpoints of the same pieces.
    """
    w, t, p, q = _shortest(x0, y0, psi0, x1, y1, psi1, rho)
    length = (t + p + q) * rho
    h, wd = values.shape
    xmax = ox + wd * cell
    ymax = oy + h * cell
    n = max(1, int(math.ceil(length / step - 1e-9)))
    ds = length / n
    chi = 0.0
    for k in range(2 * n + 1):
        s = 0.5 * k * ds
        x, y, _ = _pose_at(x0, y0, psi0, w, t, p, q, rho, s)
        if x < ox or x > xmax or y < oy or y > ymax:
            return length, chi, False
        if k % 2 == 0:
            col = min(int((x - ox) / cell), wd - 1)
            row = min(int((y - oy) / cell), h - 1)
            if occ[row, col]:
                return length, chi, False
        else:
            fx = min(max((x - ox) / cell - 0.5, 0.0), wd - 1.0)
            fy = min(max((y - oy) / cell - 0.5, 0.0), h - 1.0)
            j = min(int(fx), wd - 2)
            i = min(int(fy), h - 2)
            tx = fx - j
            ty = fy - i
            v = ((1.0 - tx) * (1.0 - ty) * values[i, j] + tx * (1.0 - ty) * values[i, j + 1]
                 + (1.0 - tx) * ty * values[i + 1, j] + tx * ty * values[i + 1, j + 1])
            chi += v * ds
    return length, chi, True


def _edge_numpy(x0, y0, psi0, x1, y1, psi1, rho, values, occ, ox, oy, cell, step):
    from .field import _bilinear_numpy

    w, t, p, q = _shortest(x0, y0, psi0, x1, y1, psi1, rho)
    path = DubinsPath(Pose2(x0, y0, psi0), WORDS[w], (t, p, q), rho)
    length = (t + p + q) * rho
    n = max(1, int(math.ceil(length / step - 1e-9)))
    ds = length / n
    P = _poses_numpy(path, 0.5 * ds * np.arange(2 * n + 1))
    h, wd = values.shape
    inside = ((P[:, 0] >= ox) & (P[:, 0] <= ox + wd * cell)
              & (P[:, 1] >= oy) & (P[:, 1] <= oy + h * cell))
    if not inside.all():
        return length, 0.0, False
    ends = P[0::2]
    col = np.minimum(((ends[:, 0] - ox) / cell).astype(np.int64), wd - 1)
    row = np.minimum(((ends[:, 1] - oy) / cell).astype(np.int64), h - 1)
    if occ[row, col].any():
        return length, 0.0, False
    mids = P[1::2]
    chi = float(_bilinear_numpy(values, ox, oy, cell, mids[:, 0], mids[:, 1]).sum() * ds)
    return length, chi, True


def edge_cost_terms(a: Pose2, b: Pose2, rho: float, values: np.ndarray, occ: np.ndarray,
                    origin: tuple[float, float], cell: float, step: float = 0.5):
    """Length, accumulated complexity and feasibility of the Dubins edge ``a -> b``."""
    fn = _edge_numba if _accel.USE_NUMBA else _edge_numpy
    return fn(a[0], a[1], a[2], b[0], b[1], b[2], float(rho), values, occ,
              float(origin[0]), float(origin[1]), float(cell), float(step))


@njit
def _edge_batch_numba(A, B, rho, values, occ, ox, oy, cell, step):
    m = A.shape[0]
    length = np.empty(m)
    chi = np.empty(m)
    ok = np.empty(m, dtype=np.bool_)
    for i in range(m):
        length[i], chi[i], ok[i] = _edge_numba(A[i, 0], A[i, 1], A[i, 2], B[i, 0], B[i, 1], B[i, 2],
                                               rho, values, occ, ox, oy, cell, step)
    return length, chi, ok


def _edge_batch_numpy(A, B, rho, values, occ, ox, oy, cell, step):
    m = A.shape[0]
    length, chi, ok = np.empty(m), np.empty(m), np.empty(m, dtype=bool)
    for i in range(m):
        length[i], chi[i], ok[i] = _edge_numpy(A[i, 0], A[i, 1], A[i, 2], B[i, 0], B[i, 1], B[i, 2],
                                               rho, values, occ, ox, oy, cell, step)
    return length, chi, ok


def edge_cost_batch(A: np.ndarray, B: np.ndarray, rho: float, values: np.ndarray, occ: np.ndarray,
                    origin: tuple[float, float], cell: float, step: float = 0.5):
    """Vectorised :func:`edge_cost_terms` over row-aligned pose arrays ``A -> B``."""
    A = np.ascontiguousarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.ascontiguousarray(B, dtype=np.float64).reshape(-1, 3)
    if A.shape != B.shape:
        A, B = np.broadcast_arrays(A, B)
        A, B = np.ascontiguousarray(A), np.ascontiguousarray(B)
    fn = _edge_batch_numba if _accel.USE_NUMBA else _edge_batch_numpy
    return fn(A, B, float(rho), values, occ, float(origin[0]), float(origin[1]), float(cell), float(step))


@njit
def _lengths_to_numba(P, q, rho):
    out = np.empty(P.shape[0])
    for i in range(P.shape[0]):
        _, t, p, r = _shortest(P[i, 0], P[i, 1], P[i, 2], q[0], q[1], q[2], rho)
        out[i] = (t + p + r) * rho
    return out


def _mod2pi_np(a):
    return np.mod(a, TWO_PI)


def _lengths_to_numpy(P, q, rho):
    """All six words evaluated on arrays; same formulas as the scalar kernel."""
    dx, dy = q[0] - P[:, 0], q[1] - P[:, 1]
    d = np.hypot(dx, dy) / rho
    theta = np.where(d > 0.0, np.arctan2(dy, dx), 0.0)
    a = _mod2pi_np(P[:, 2] - theta)
    b = _mod2pi_np(q[2] - theta)
    sa, sb, ca, cb = np.sin(a), np.sin(b), np.cos(a), np.cos(b)
    c_ab = np.cos(a - b)
    d2 = d * d
    best = np.full(len(P), np.inf)
    with np.errstate(invalid="ignore"):
        # LSL, RSR
        for sgn in (1.0, -1.0):
            p2 = 2.0 + d2 - 2.0 * c_ab + sgn * 2.0 * d * (sa - sb)
            ok = p2 >= -1e-10
            p = np.sqrt(np.maximum(p2, 0.0))
            if sgn > 0:
                tmp = np.arctan2(cb - ca, d + sa - sb)
                tot = _mod2pi_np(tmp - a) + p + _mod2pi_np(b - tmp)
            else:
                tmp = np.arctan2(ca - cb, d - sa + sb)
                tot = _mod2pi_np(a - tmp) + p + _mod2pi_np(tmp - b)
            best = np.where(ok, np.minimum(best, tot), best)
        # LSR
        p2 = -2.0 + d2 + 2.0 * c_ab + 2.0 * d * (sa + sb)
        ok = p2 >= -1e-10
        p = np.sqrt(np.maximum(p2, 0.0))
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        best = np.where(ok, np.minimum(best, _mod2pi_np(tmp - a) + p + _mod2pi_np(tmp - b)), best)
        # RSL
        p2 = -2.0 + d2 + 2.0 * c_ab - 2.0 * d * (sa + sb)
        ok = p2 >= -1e-10
        p = np.sqrt(np.maximum(p2, 0.0))
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        best = np.where(ok, np.minimum(best, _mod2pi_np(a - tmp) + p + _mod2pi_np(b - tmp)), best)
        # RLR
        c = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0
        ok = np.abs(c) <= 1.0
        phi = np.arctan2(ca - cb, d - sa + sb)
        p = _mod2pi_np(TWO_PI - np.arccos(np.clip(c, -1.0, 1.0)))
        t = _mod2pi_np(a - phi + 0.5 * p)
        best = np.where(ok, np.minimum(best, t + p + _mod2pi_np(a - b - t + p)), best)
        # LRL
        c = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0
        ok = np.abs(c) <= 1.0
        phi = np.arctan2(ca - cb, d + sa - sb)
        p = _mod2pi_np(TWO_PI - np.arccos(np.clip(c, -1.0, 1.0)))
        t = _mod2pi_np(-a - phi + 0.5 * p)
        best = np.where(ok, np.minimum(best, t + p + _mod2pi_np(b - a - t + p)), best)
    return best * rho


def dubins_lengths_to(P: np.ndarray, q, rho: float) -> np.ndarray:
    """Shortest Dubins length from every pose row of ``P`` to the pose ``q``."""
    P = np.ascontiguousarray(P, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _lengths_to_numba(P, q, float(rho))
    return _lengths_to_numpy(P, q, float(rho))


@njit
def _nearest_numba(P, q, rho):
    n = P.shape[0]
    e = np.empty(n)
    for i in range(n):
        e[i] = math.hypot(P[i, 0] - q[0], P[i, 1] - q[1])
    order = np.argsort(e, kind="mergesort")
    best, best_len = -1, np.inf
    for i in order:
        if e[i] > best_len:
            break
        _, t, p, r = _shortest(P[i, 0], P[i, 1], P[i, 2], q[0], q[1], q[2], rho)
        length = (t + p + r) * rho
        if length < best_len or (length == best_len and i < best):
            best, best_len = i, length
    return best


def _nearest_numpy(P, q, rho):
    e = np.hypot(P[:, 0] - q[0], P[:, 1] - q[1])
    bound = _lengths_to_numpy(P[[int(np.argmin(e))]], q, rho)[0]
    cand = np.flatnonzero(e <= bound)
    return int(cand[np.argmin(_lengths_to_numpy(P[cand], q, rho))])


def nearest_by_dubins(P: np.ndarray, q, rho: float) -> int:
    """Index of the pose in ``P`` with the shortest Dubins path to ``q`` (lowest index on ties).

    Euclidean distance bounds the Dubins length from below, so only poses
    closer than the best length found so far are evaluated.
    """
    P = np.ascontiguousarray(P, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64)
    if _accel.USE_NUMBA:
        return int(_nearest_numba(P, q, float(rho)))
    return _nearest_numpy(P, q, float(rho))
