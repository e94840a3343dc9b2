import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seabedplan.field import ScalarField
from seabedplan.planners.common import polyline_length
from seabedplan.vessel import (
    GuidanceState,
    VesselParams,
    VesselState,
    achievable_turn_radius,
    coriolis_matrix,
    heading_controller,
    los_heading,
    rotation,
    simulate_tracking,
    state_derivative,
    step_dynamics,
)

P = VesselParams()
vel = st.floats(-3, 3, allow_nan=False)


@pytest.fixture(scope="module")
def sea():
    return ScalarField((-100.0, -100.0), 2.0, np.zeros((150, 400)))


@given(u=vel, v=vel, r=vel)
def test_coriolis_is_skew_and_workless(u, v, r):
    nu = np.array([u, v, r])
    C = coriolis_matrix(P.M, nu)
    assert np.abs(C + C.T).max() <= 1e-12
    assert abs(nu @ C @ nu) <= 1e-12


@given(psi=st.floats(-10, 10))
def test_rotation_orthonormal(psi):
    R = rotation(psi)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)


def test_equilibrium_at_rest(backend):
    s = VesselState(3.0, -2.0, 0.4)
    for _ in range(50):
        s = step_dynamics(s, (0.0, 0.0), 0.1, P)
    assert s == VesselState(3.0, -2.0, 0.4)


def _integrate(dt, T=5.0):
    s = VesselState(0, 0, 0.2, 1.0, 0.3, 0.1)
    for _ in range(int(round(T / dt))):
        s = step_dynamics(s, (8.0, 0.2), dt, P)
    return s.as_array()


def test_rk4_fourth_order(backend):
    a, b, c = _integrate(0.2), _integrate(0.1), _integrate(0.05)
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert ratio >= 8.0


def test_steady_surge_under_constant_thrust(backend):
    s = VesselState()
    for _ in range(1500):
        s = step_dynamics(s, (6.0, 0.0), 0.2, P)
    assert s.u == pytest.approx(6.0 * P.B[0, 0] / P.D[0, 0], rel=1e-6)
    assert s.v == 0.0 and s.r == 0.0


@given(u=vel, v=vel, r=st.floats(-0.5, 0.5))
def test_unforced_energy_decays(u, v, r):
    nu0 = np.array([u, v, r])
    if np.abs(nu0).max() < 1e-3:
        return
    s = VesselState(0, 0, 0, u, v, r)
    energy = 0.5 * nu0 @ P.M @ nu0
    for _ in range(5):
        s = step_dynamics(s, (0.0, 0.0), 0.1, P)
        nu = s.as_array()[3:]
        e = 0.5 * nu @ P.M @ nu
        assert e < energy
        energy = e


def test_dt_validation():
    with pytest.raises(ValueError):
        step_dynamics(VesselState(), (0, 0), 0.6, P)
    with pytest.raises(ValueError):
        step_dynamics(VesselState(), (0, 0), 0.0, P)


def test_params_validation():
    with pytest.raises(ValueError):
        VesselParams(M=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        VesselParams(u_d=0.0)


def test_controller_equilibrium(backend):
    s = VesselState(0, 0, 0.3, P.u_d, 0.0, 0.0)
    T, delta = heading_controller(s, 0.3, P)
    assert delta == pytest.approx(0.0, abs=1e-12)
    assert T == pytest.approx(P.D[0, 0] * P.u_d, rel=1e-12)


def test_controller_turns_toward_target(backend):
    s = VesselState(0, 0, 0.0, P.u_d, 0.0, 0.0)
    for err in (0.1, -0.1):
        T, delta = heading_controller(s, err, P)
        rdot = state_derivative(s, (T, delta), P)[5]
        assert math.copysign(1, rdot) == math.copysign(1, err)


def test_controller_saturates(backend):
    T, delta = heading_controller(VesselState(0, 0, 0, 0, 0, 0), 3.0, P)
    assert abs(delta) <= P.rudder_max + 1e-12 and abs(T) <= P.thrust_max + 1e-12


@pytest.mark.parametrize("e_sign, expect", [(0, 0.0), (1, -math.pi / 4), (-1, math.pi / 4)])
def test_los_examples(e_sign, expect, backend):
    bearing = 0.7
    path = np.array([[0.0, 0.0], [200 * math.cos(bearing), 200 * math.sin(bearing)]])
    g = GuidanceState(lookahead=20.0)
    along = 50.0
    # positive cross-track error lies to the left of the direction of travel
    left = np.array([-math.sin(bearing), math.cos(bearing)])
    pos = along * np.array([math.cos(bearing), math.sin(bearing)]) + e_sign * 20.0 * left
    psi_d, e = los_heading(path, pos, g)
    assert e == pytest.approx(e_sign * 20.0, abs=1e-9)
    assert math.remainder(psi_d - (bearing + expect), 2 * math.pi) == pytest.approx(0.0, abs=1e-12)


def test_los_advances_segments(backend):
    path = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
    g = GuidanceState()
    los_heading(path, (12.0, 1.0), g)
    assert g.segment == 1


def test_heading_step_response():
    path = np.array([[0.0, 0.0], [2000.0, 0.0]])
    s = VesselState(0.0, 0.0, math.radians(30), P.u_d, 0.0, 0.0)
    g = GuidanceState(lookahead=20.0)
    errs, headings = [], []
    for k in range(int(90 / 0.1)):
        psi_d, _ = los_heading(path, (s.x, s.y), g)
        s = step_dynamics(s, heading_controller(s, psi_d, P), 0.1, P)
        errs.append(math.remainder(s.psi - psi_d, 2 * math.pi))
        headings.append(s.psi)
    t = 0.1 * (np.arange(len(errs)) + 1)
    assert np.abs(np.array(errs)[t >= 60]).max() < math.radians(1)
    assert min(errs) > -math.radians(10)  # overshoot relative to the command
    assert min(headings) > -math.radians(10)  # overshoot relative to the path


def test_straight_path_tracking(sea):
    path = np.array([[0.0, 0.0, 0.0], [500.0, 0.0, 0.0]])
    ex = simulate_tracking(path, P, sea, lookahead=20.0, transient=10.0)
    assert ex.completed
    assert ex.executed_length == pytest.approx(500.0, rel=0.01)
    assert ex.max_e < 0.5
    assert ex.executed_chi == 0.0


def test_sharp_turn_executes_longer(sea):
    assert achievable_turn_radius(P) > 4.0 / 2
    path = np.array([[0.0, 0.0], [150.0, 0.0], [150.0, 4.0], [0.0, 4.0]])
    ex = simulate_tracking(path, P, sea)
    assert ex.completed and ex.executed_length > polyline_length(path)


def test_timeout_gives_incomplete_run(sea):
    ex = simulate_tracking(np.array([[0.0, 0.0], [400.0, 0.0]]), P, sea, timeout=20.0)
    assert not ex.completed
    assert ex.trajectory[-1, 0] == pytest.approx(20.0)
    assert ex.executed_length == pytest.approx(P.u_d * 20.0, rel=0.05)


def test_executed_cost_and_exports(sea):
    vals = np.full((150, 400), 0.25)
    field = ScalarField((-100.0, -100.0), 2.0, vals)
    ex = simulate_tracking(np.array([[0.0, 0.0], [100.0, 0.0]]), P, field, alpha=2.0)
    assert ex.executed_chi == pytest.approx(0.25 * ex.executed_length, rel=1e-9)
    assert ex.executed_cost == pytest.approx(ex.executed_length * 1.5, rel=1e-9)
    lines = ex.to_csv().splitlines()
    assert lines[0] == "t,x,y,psi,u,v,r,e" and len(lines) == len(ex.trajectory) + 1


def test_backends_agree_on_closed_loop(sea):
    from seabedplan import _accel

    path = np.array([[0.0, 0.0], [80.0, 0.0], [80.0, 60.0]])
    saved = _accel.USE_NUMBA
    try:
        _accel.USE_NUMBA = True
        a = simulate_tracking(path, P, sea)
        _accel.USE_NUMBA = False
        b = simulate_tracking(path, P, sea)
    finally:
        _accel.USE_NUMBA = saved
    assert a.trajectory.shape == b.trajectory.shape
    assert np.allclose(a.trajectory, b.trajectory, atol=1e-9)
