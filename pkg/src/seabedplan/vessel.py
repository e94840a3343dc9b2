"""3-DOF surface-vessel model, line-of-sight guidance and heading control.

State is ``(x, y, psi, u, v, r)``: position and heading in the world frame,
surge/sway velocity and yaw rate in the body frame. The model is

    eta_dot = R(psi) nu
    M nu_dot + C(nu) nu + D nu = B tau,   tau = (thrust, rudder)

with the Coriolis/centripetal matrix built from ``M`` so that it is
skew-symmetric for every ``nu``. Integration is classical RK4 with the
input held over the step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import fsolve

from . import _accel
from .field import ScalarField, bilinear_unchecked
from .geometry import wrap_angle
from .planners.common import PlannedPath, polyline_length, polyline_midpoints

GOAL_TOLERANCE = 5.0
DEFAULT_DT = 0.1
MAX_DT = 0.5


class NumericalDivergenceError(FloatingPointError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"vessel state became non-finite at step {step}")


@dataclass(frozen=True)
class VesselState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.as_array()):
            raise ValueError("vessel state must be finite")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.u, self.v, self.r], dtype=float)

    @classmethod
    def from_array(cls, a) -> "VesselState":
        return cls(*(float(c) for c in a))


def _default_M():
    return np.array([[30.0, 0.0, 0.0], [0.0, 45.0, 3.0], [0.0, 3.0, 10.0]])


def _default_D():
    return np.array([[2.0, 0.0, 0.0], [0.0, 30.0, 2.0], [0.0, 2.0, 8.0]])


def _default_B():
    # unit thrust in surge; rudder at the stern: yaw moment with an opposing sway force
    return np.array([[1.0, 0.0], [0.0, -6.0], [0.0, 6.0]])


@dataclass(frozen=True)
class VesselParams:
    """Physical parameters, actuator limits and controller tuning.

    The defaults describe a small survey boat in SI units: about 30 kg in
    surge including added mass, nominal speed 1.5 m/s, and linear damping.
    Heading gains place the feedback-linearised yaw loop at natural
    frequency ``omega_n`` with damping ratio ``zeta``; the surge loop has
    time constant ``speed_time_constant``.
    """

    M: np.ndarray = dc_field(default_factory=_default_M)
    D: np.ndarray = dc_field(default_factory=_default_D)
    B: np.ndarray = dc_field(default_factory=_default_B)
    thrust_max: float = 20.0
    rudder_max: float = math.radians(35.0)
    u_d: float = 1.5
    omega_n: float = 0.3
    zeta: float = 1.0
    speed_time_constant: float = 10.0

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        D = np.array(self.D, dtype=float)
        B = np.array(self.B, dtype=float)
        if M.shape != (3, 3) or D.shape != (3, 3) or B.shape != (3, 2):
            raise ValueError("M and D must be 3x3 and B 3x2")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12):
            raise ValueError("M must be symmetric")
        if np.linalg.eigvalsh(M).min() <= 0:
            raise ValueError("M must be positive definite")
        if np.linalg.eigvalsh(0.5 * (D + D.T)).min() <= 0:
            raise ValueError("D must be positive definite")
        if self.thrust_max <= 0 or not 0 < self.rudder_max <= 0.5 * math.pi:
            raise ValueError("actuator limits must be positive")
        if self.u_d <= 0 or self.omega_n <= 0 or self.zeta <= 0 or self.speed_time_constant <= 0:
            raise ValueError("speed and controller tuning must be positive")
        Minv = np.linalg.inv(M)
        if abs(Minv[2] @ B[:, 1]) < 1e-12:
            raise ValueError("rudder has no authority over yaw acceleration")
        for name, arr in (("M", M), ("D", D), ("B", B)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def heading_gains(self) -> tuple[float, float]:
        """(kp, kd) of the linearised yaw loop."""
        return self.omega_n**2, 2.0 * self.zeta * self.omega_n

    @property
    def surge_gain(self) -> float:
        return self.M[0, 0] / self.speed_time_constant

    def packed(self) -> np.ndarray:
        """Flat parameter vector used by the simulation kernels."""
        kp, kd = self.heading_gains
        return np.concatenate([self.M.ravel(), np.linalg.inv(self.M).ravel(), self.D.ravel(),
                               self.B.ravel(),
                               [self.thrust_max, self.rudder_max, self.u_d, kp, kd, self.surge_gain]])


# packed layout offsets
_M, _MI, _D, _B, _TMAX = 0, 9, 18, 27, 33


def coriolis_matrix(M: np.ndarray, nu) -> np.ndarray:
    """C(nu) for a 3-DOF vessel; skew-symmetric by construction."""
    a = np.asarray(M) @ np.asarray(nu, dtype=float)
    return np.array([[0.0, 0.0, -a[1]], [0.0, 0.0, a[0]], [a[1], -a[0], 0.0]])


def rotation(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _build_kernels(jit):
    """Scalar simulation kernels, compiled with ``jit`` (numba or identity)."""

    @jit
    def deriv(s, T, delta, P):
        u, v, r = s[3], s[4], s[5]
        a0 = P[0] * u + P[1] * v + P[2] * r
        a1 = P[3] * u + P[4] * v + P[5] * r
        cu, cv, cr = -a1 * r, a0 * r, a1 * u - a0 * v
        f0 = P[27] * T + P[28] * delta - cu - (P[18] * u + P[19] * v + P[20] * r)
        f1 = P[29] * T + P[30] * delta - cv - (P[21] * u + P[22] * v + P[23] * r)
        f2 = P[31] * T + P[32] * delta - cr - (P[24] * u + P[25] * v + P[26] * r)
        out = np.empty(6)
        c, sn = math.cos(s[2]), math.sin(s[2])
        out[0] = c * u - sn * v
        out[1] = sn * u + c * v
        out[2] = r
        out[3] = P[9] * f0 + P[10] * f1 + P[11] * f2
        out[4] = P[12] * f0 + P[13] * f1 + P[14] * f2
        out[5] = P[15] * f0 + P[16] * f1 + P[17] * f2
        return out

    @jit
    def rk4(s, T, delta, dt, P):
        k1 = deriv(s, T, delta, P)
        k2 = deriv(s + 0.5 * dt * k1, T, delta, P)
        k3 = deriv(s + 0.5 * dt * k2, T, delta, P)
        k4 = deriv(s + dt * k3, T, delta, P)
        out = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[2] = math.atan2(math.sin(out[2]), math.cos(out[2]))
        return out

    @jit
    def control(s, psi_d, P):
        u, v, r = s[3], s[4], s[5]
        tmax, dmax, ud, kp, kd, ku = P[33], P[34], P[35], P[36], P[37], P[38]
        T = P[18] * u + P[19] * v + P[20] * r + ku * (ud - u)
        T = min(max(T, -tmax), tmax)
        a0 = P[0] * u + P[1] * v + P[2] * r
        a1 = P[3] * u + P[4] * v + P[5] * r
        cu, cv, cr = -a1 * r, a0 * r, a1 * u - a0 * v
        h0 = -cu - (P[18] * u + P[19] * v + P[20] * r)
        h1 = -cv - (P[21] * u + P[22] * v + P[23] * r)
        h2 = -cr - (P[24] * u + P[25] * v + P[26] * r)
        f_r = P[15] * h0 + P[16] * h1 + P[17] * h2
        g_T = P[15] * P[27] + P[16] * P[29] + P[17] * P[31]
        g_d = P[15] * P[28] + P[16] * P[30] + P[17] * P[32]
        err = math.atan2(math.sin(s[2] - psi_d), math.cos(s[2] - psi_d))
        rdot = -kp * err - kd * r
        delta = (rdot - f_r - g_T * T) / g_d
        delta = min(max(delta, -dmax), dmax)
        return T, delta

    @jit
    def los(W, k, x, y, lookahead):
        n = W.shape[0]
        while True:
            dx = W[k + 1, 0] - W[k, 0]
            dy = W[k + 1, 1] - W[k, 1]
            L = math.sqrt(dx * dx + dy * dy)
            if k + 2 >= n:
                break
            if L == 0.0:
                k += 1
                continue
            s = ((x - W[k, 0]) * dx + (y - W[k, 1]) * dy) / L
            if s < L:
                break
            k += 1
        bearing = math.atan2(dy, dx)
        e = -(x - W[k, 0]) * math.sin(bearing) + (y - W[k, 1]) * math.cos(bearing)
        psi_d = bearing + math.atan2(-e, lookahead)
        return math.atan2(math.sin(psi_d), math.cos(psi_d)), e, k

    @jit
    def closed_loop(W, s0, P, dt, n_max, lookahead, goal_tol):
        out = np.empty((n_max + 1, 8))
        s = s0.copy()
        k = 0
        gx, gy = W[W.shape[0] - 1, 0], W[W.shape[0] - 1, 1]
        status = 0  # 0 timeout, 1 reached goal, 2 diverged
        i = 0
        while True:
            psi_d, e, k = los(W, k, s[0], s[1], lookahead)
            out[i, 0] = i * dt
            out[i, 1:7] = s
            out[i, 7] = e
            if k == W.shape[0] - 2 and math.hypot(s[0] - gx, s[1] - gy) <= goal_tol:
                status = 1
                break
            if i == n_max:
                break
            T, delta = control(s, psi_d, P)
            s = rk4(s, T, delta, dt, P)
            i += 1
            ok = True
            for c in range(6):
                if not math.isfinite(s[c]):
                    ok = False
            if not ok:
                status = 2
                break
        return out[: i + 1], status

    return deriv, rk4, control, los, closed_loop


_PY = _build_kernels(lambda f: f)
if _accel.HAVE_NUMBA:
    _NB = _build_kernels(_accel.numba.njit(cache=False))
else:  # pragma: no cover
    _NB = _PY


def _kernels():
    return _NB if _accel.USE_NUMBA else _PY


def step_dynamics(state: VesselState, tau, dt: float, params: VesselParams) -> VesselState:
    """One RK4 step of length ``dt`` with ``tau = (thrust, rudder)`` held constant."""
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}]")
    s = _kernels()[1](state.as_array(), float(tau[0]), float(tau[1]), float(dt), params.packed())
    if not np.all(np.isfinite(s)):
        raise NumericalDivergenceError(1)
    return VesselState.from_array(s)


def state_derivative(state: VesselState, tau, params: VesselParams) -> np.ndarray:
    return _kernels()[0](state.as_array(), float(tau[0]), float(tau[1]), params.packed())


def heading_controller(state: VesselState, psi_d: float, params: VesselParams) -> tuple[float, float]:
    """``(thrust, rudder)`` from the feedback-linearising yaw law and the surge P law.

    Thrust cancels surge damping and adds a proportional term toward ``u_d``.
    The rudder cancels the yaw-acceleration terms of the model so the yaw
    error obeys a critically damped second-order response. Both are saturated.
    """
    T, delta = _kernels()[2](state.as_array(), float(psi_d), params.packed())
    return float(T), float(delta)


@dataclass
class GuidanceState:
    lookahead: float = 20.0
    segment: int = 0

    def __post_init__(self):
        if not self.lookahead > 0:
            raise ValueError("lookahead must be positive")


def _path_points(path) -> np.ndarray:
    pts = path.waypoints if isinstance(path, PlannedPath) else np.asarray(path, dtype=float)
    pts = np.ascontiguousarray(pts[:, :2], dtype=float)
    if len(pts) < 2 or polyline_length(pts) == 0.0:
        raise ValueError("path must have at least one segment of positive length")
    return pts


def los_heading(path, position, g: GuidanceState) -> tuple[float, float]:
    """Desired heading and signed cross-track error (positive left of the path).

    Advances ``g.segment`` past every segment whose end the along-track
    projection has reached.
    """
    W = _path_points(path)
    psi_d, e, k = _kernels()[3](W, min(g.segment, len(W) - 2), float(position[0]),
                                float(position[1]), float(g.lookahead))
    g.segment = int(k)
    return float(psi_d), float(e)


def achievable_turn_radius(params: VesselParams) -> float:
    """Radius of the steady turn at full rudder while holding the nominal surge speed."""
    P = params.packed()
    deriv = _PY[0]

    def residual(z):
        v, r, T = z
        d = deriv(np.array([0.0, 0.0, 0.0, params.u_d, v, r]), T, params.rudder_max, P)
        return d[3:]

    z, _, ier, msg = fsolve(residual, [0.0, 0.1, params.D[0, 0] * params.u_d], full_output=True)
    if ier != 1 and np.abs(residual(z)).max() > 1e-9:
        raise RuntimeError(f"steady-turn solve failed: {msg}")
    v, r, _ = z
    speed = math.hypot(params.u_d, v)
    return speed / abs(r)


@dataclass(frozen=True)
class Execution:
    """Simulated run: ``trajectory`` columns are t, x, y, psi, u, v, r, e."""

    trajectory: np.ndarray
    executed_path: np.ndarray
    executed_length: float
    executed_chi: float
    alpha: float
    max_e: float
    rms_e: float
    completed: bool

    @property
    def executed_cost(self) -> float:
        return self.executed_length + self.alpha * self.executed_chi

    def metrics(self) -> dict:
        return {"executed_length": self.executed_length, "executed_chi": self.executed_chi,
                "executed_cost": self.executed_cost, "max_e": self.max_e, "rms_e": self.rms_e,
                "completed": self.completed}

    def metrics_json(self) -> str:
        return json.dumps(self.metrics(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "psi", "u", "v", "r", "e"])
        for row in self.trajectory:
            w.writerow([repr(float(c)) for c in row])
        return buf.getvalue()


def path_complexity_clamped(field: ScalarField, points: np.ndarray, step: float = 0.5) -> float:
    """Midpoint-rule complexity integral; points outside the field read the border value."""
    mids, lens = polyline_midpoints(points, step)
    if len(lens) == 0:
        return 0.0
    return float(bilinear_unchecked(field, mids[:, 0], mids[:, 1]) @ lens)


def simulate_tracking(path, params: VesselParams, field: ScalarField, alpha: float = 0.0,
                      dt: float = DEFAULT_DT, timeout: float | None = None,
                      lookahead: float = 20.0, goal_tolerance: float = GOAL_TOLERANCE,
                      transient: float = 0.0) -> Execution:
    """Track ``path`` with LOS guidance from its first pose at the nominal speed.

    The run ends when the vessel is on the last segment within
    ``goal_tolerance`` of the goal, or at ``timeout`` (default three times
    the planned length over ``u_d``). A completed run's executed path is the
    simulated track closed with the goal point. Cross-track statistics
    ignore the first ``transient`` seconds.
    """
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}]")
    if not lookahead > 0:
        raise ValueError("lookahead must be positive")
    W = _path_points(path)
    if isinstance(path, PlannedPath):
        psi0 = float(path.waypoints[0, 2])
    elif np.asarray(path).shape[1] >= 3:
        psi0 = float(np.asarray(path)[0, 2])
    else:
        psi0 = math.atan2(W[1, 1] - W[0, 1], W[1, 0] - W[0, 0])
    planned_length = polyline_length(W)
    if timeout is None:
        timeout = 3.0 * planned_length / params.u_d
    n_max = max(1, int(math.ceil(timeout / dt - 1e-9)))
    s0 = np.array([W[0, 0], W[0, 1], wrap_angle(psi0), params.u_d, 0.0, 0.0])
    traj, status = _kernels()[4](W, s0, params.packed(), float(dt), n_max, float(lookahead),
                                 float(goal_tolerance))
    if status == 2:
        raise NumericalDivergenceError(len(traj))
    completed = status == 1
    track = traj[:, 1:3]
    if completed:
        track = np.vstack([track, W[-1]])
    e = traj[traj[:, 0] >= transient, 7]
    if len(e) == 0:
        e = traj[-1:, 7]
    return Execution(
        trajectory=traj,
        executed_path=track,
        executed_length=polyline_length(track),
        executed_chi=path_complexity_clamped(field, track),
        alpha=float(alpha),
        max_e=float(np.abs(e).max()),
        rms_e=float(np.sqrt(np.mean(e**2))),
        completed=completed,
    )
