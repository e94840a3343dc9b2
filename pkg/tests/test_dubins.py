import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seabedplan.dubins import (
    WORDS,
    DubinsPath,
    dubins_lengths_to,
    edge_cost_batch,
    edge_cost_terms,
    nearest_by_dubins,
    sample_path,
    shortest_dubins,
)
from seabedplan.dubins import _lengths_to_numba, _lengths_to_numpy, _nearest_numba, _nearest_numpy
from seabedplan.field import ScalarField
from seabedplan.geometry import Pose2
from seabedplan.planners import accumulated_complexity

coord = st.floats(-40, 40, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
pose = st.builds(Pose2.make, coord, coord, angle)


def random_pairs(n, seed, span=50.0):
    r = np.random.default_rng(seed)
    a = np.column_stack([r.uniform(-span, span, (n, 2)), r.uniform(-math.pi, math.pi, n)])
    b = np.column_stack([r.uniform(-span, span, (n, 2)), r.uniform(-math.pi, math.pi, n)])
    return a, b


def test_straight_line():
    p = shortest_dubins(Pose2(0, 0, 0), Pose2(10, 0, 0), 1.0)
    assert p.length == pytest.approx(10.0, abs=1e-12)
    assert p.segments[1] == pytest.approx(10.0)


def test_semicircle():
    p = shortest_dubins(Pose2(0, 0, 0), Pose2(0, 2, math.pi), 1.0)
    assert p.length == pytest.approx(math.pi, abs=1e-12)
    assert p.word[0] == "L"


def test_invalid_radius():
    with pytest.raises(ValueError):
        shortest_dubins(Pose2(0, 0, 0), Pose2(1, 0, 0), 0.0)


def test_sample_path_straight():
    p = shortest_dubins(Pose2(0, 0, 0), Pose2(10, 0, 0), 1.0)
    s = sample_path(p, 2.5)
    assert s[:, 0] == pytest.approx([0, 2.5, 5, 7.5, 10], abs=1e-12)


def test_sample_path_semicircle_midpoint():
    p = shortest_dubins(Pose2(0, 0, 0), Pose2(0, 2, math.pi), 1.0)
    s = sample_path(p, math.pi / 2)
    assert len(s) == 3
    assert s[1] == pytest.approx([1.0, 1.0, math.pi / 2], abs=1e-12)


def test_1000_pairs_length_and_endpoint():
    a, b = random_pairs(1000, 0)
    for pa, pb in zip(a, b):
        path = shortest_dubins(Pose2.make(*pa), Pose2.make(*pb), 10.0)
        assert path.length == pytest.approx(sum(path.segment_lengths), abs=1e-9)
        assert path.length >= math.dist(pa[:2], pb[:2]) - 1e-9
        end = path.end
        assert math.dist(end[:2], pb[:2]) < 1e-6
        assert abs(math.remainder(end[2] - pb[2], 2 * math.pi)) < 1e-6


def test_sampled_arclength_matches_length():
    a, b = random_pairs(200, 1)
    for pa, pb in zip(a, b):
        path = shortest_dubins(Pose2.make(*pa), Pose2.make(*pb), 10.0)
        s = sample_path(path, 0.01)
        integ = np.hypot(*np.diff(s[:, :2], axis=0).T).sum()
        assert abs(integ - path.length) < 0.02
        assert np.hypot(*np.diff(s[:, :2], axis=0).T).max() <= 0.01 + 1e-12
        assert s[-1] == pytest.approx(list(pb), abs=1e-9) or \
            abs(math.remainder(s[-1, 2] - pb[2], 2 * math.pi)) < 1e-9


def test_word_names_and_parameters_nonnegative():
    a, b = random_pairs(300, 2, span=15.0)
    seen = set()
    for pa, pb in zip(a, b):
        path = shortest_dubins(Pose2.make(*pa), Pose2.make(*pb), 5.0)
        assert path.word in WORDS and min(path.params) >= 0
        seen.add(path.word)
    assert {"LSL", "RSR", "LSR", "RSL"} <= seen


@given(a=pose, b=pose, tx=coord, ty=coord, rot=angle)
def test_rigid_motion_invariance(a, b, tx, ty, rot):
    c, s = math.cos(rot), math.sin(rot)

    def move(p):
        return Pose2.make(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.psi + rot)

    l0 = shortest_dubins(a, b, 3.0).length
    l1 = shortest_dubins(move(a), move(b), 3.0).length
    assert l1 == pytest.approx(l0, abs=1e-9 * max(1.0, l0) * 10)


@given(a=pose, b=pose)
def test_reflection_swaps_turn_directions(a, b):
    p = shortest_dubins(a, b, 3.0)
    ma, mb = Pose2.make(a.x, -a.y, -a.psi), Pose2.make(b.x, -b.y, -b.psi)
    q = shortest_dubins(ma, mb, 3.0)
    assert q.length == pytest.approx(p.length, abs=1e-8)
    mirrored = DubinsPath(ma, p.word.translate(str.maketrans("LR", "RL")), p.params, 3.0)
    assert math.dist(mirrored.end[:2], mb[:2]) < 1e-6


@given(a=pose, b=pose)
def test_length_monotone_in_radius(a, b):
    lengths = [shortest_dubins(a, b, r).length for r in (4.0, 2.0, 1.0)]
    assert lengths[0] >= lengths[1] - 1e-9 and lengths[1] >= lengths[2] - 1e-9


def test_pose_at_is_continuous():
    path = shortest_dubins(Pose2(0, 0, 0.3), Pose2(-5, 8, -2.0), 4.0)
    s = np.linspace(0, path.length, 4001)
    P = np.array([path.pose_at(v)[:2] for v in s])
    assert np.hypot(*np.diff(P, axis=0).T).max() <= (s[1] - s[0]) * (1 + 1e-9)


def test_batched_lengths_agree_with_scalar():
    a, b = random_pairs(300, 3)
    q = b[0]
    ref = np.array([shortest_dubins(Pose2.make(*p), Pose2.make(*q), 7.0).length for p in a])
    assert np.allclose(_lengths_to_numba(a, q, 7.0), ref, atol=1e-9)
    assert np.allclose(_lengths_to_numpy(a, q, 7.0), ref, atol=1e-9)
    assert np.allclose(dubins_lengths_to(a, q, 7.0), ref, atol=1e-9)


def test_nearest_agrees_with_brute_force():
    a, b = random_pairs(400, 4)
    for q in b[:20]:
        ref = int(np.argmin(dubins_lengths_to(a, q, 7.0)))
        assert _nearest_numba(a, q, 7.0) == ref
        assert _nearest_numpy(a, q, 7.0) == ref
        assert nearest_by_dubins(a, q, 7.0) == ref


def _field(seed):
    vals = np.random.default_rng(seed).uniform(0, 0.8, size=(60, 60))
    return ScalarField((0.0, 0.0), 1.0, vals)


def test_edge_cost_matches_path_integral(backend):
    f = _field(5)
    occ = np.zeros(f.values.shape, dtype=bool)
    a, b = Pose2(10, 10, 0.5), Pose2(45, 40, 2.0)
    length, chi, ok = edge_cost_terms(a, b, 8.0, f.values, occ, f.origin, f.cell_size)
    path = shortest_dubins(a, b, 8.0)
    assert ok and length == pytest.approx(path.length, abs=1e-12)
    assert chi == pytest.approx(accumulated_complexity(f, path), rel=1e-12)


def test_edge_blocked_by_obstacle(backend):
    f = _field(6)
    occ = np.zeros(f.values.shape, dtype=bool)
    occ[:, 30] = True
    _, _, ok = edge_cost_terms(Pose2(10, 30, 0), Pose2(50, 30, 0), 5.0, f.values, occ, f.origin, 1.0)
    assert not ok
    _, _, ok = edge_cost_terms(Pose2(10, 30, 0), Pose2(25, 30, 0), 5.0, f.values, occ, f.origin, 1.0)
    assert ok


def test_edge_leaving_field_is_infeasible(backend):
    f = _field(7)
    occ = np.zeros(f.values.shape, dtype=bool)
    # a U-turn of radius 10 from the border must leave the 60 m square
    _, _, ok = edge_cost_terms(Pose2(55, 30, 0), Pose2(55, 20, math.pi), 10.0, f.values, occ, f.origin, 1.0)
    assert not ok


def test_edge_batch_backends_agree():
    from seabedplan import _accel

    f = _field(8)
    occ = f.values > 0.78
    r = np.random.default_rng(9)
    A = np.column_stack([r.uniform(5, 55, (100, 2)), r.uniform(-3, 3, 100)])
    B = np.column_stack([r.uniform(5, 55, (100, 2)), r.uniform(-3, 3, 100)])
    out = []
    for flag in (True, False):
        _accel.USE_NUMBA, saved = flag, _accel.USE_NUMBA
        try:
            out.append(edge_cost_batch(A, B, 6.0, f.values, occ, f.origin, 1.0))
        finally:
            _accel.USE_NUMBA = saved
    (l1, c1, k1), (l2, c2, k2) = out
    assert np.array_equal(k1, k2)
    assert np.allclose(l1, l2, atol=1e-12)
    assert np.allclose(c1[k1], c2[k2], rtol=1e-12)
