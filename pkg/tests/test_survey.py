import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seabedplan.field import FieldSynthesis, ScalarField, default_scenarios, generate_scenario, sample_bilinear
from seabedplan.kernels import MATERN3, SE
from seabedplan.survey import (
    Leg,
    SensorModel,
    SurveyOptions,
    generate_lawnmower,
    reestimation_turns,
    run_survey,
    sample_swath,
    swath_points,
)


def flat(extent, value=0.5):
    return ScalarField((0.0, 0.0), 1.0, np.full((extent, extent), value))


def test_leg_count_for_100m_field():
    plan = generate_lawnmower(flat(100), 20.0)
    assert len(plan.legs) == 6 and plan.turns == 5


def test_spacing_equal_to_extent():
    plan = generate_lawnmower(flat(50), 50.0)
    assert len(plan.legs) == 2 and plan.turns == 1


def test_spacing_larger_than_field_rejected():
    with pytest.raises(ValueError):
        generate_lawnmower(flat(50), 60.0)


@given(spacing=st.floats(3.0, 80.0))
def test_legs_alternate_and_stay_inside(spacing):
    f = flat(80)
    plan = generate_lawnmower(f, spacing)
    assert plan.turns == math.ceil(80 / spacing - 1e-9)
    for a, b in zip(plan.legs, plan.legs[1:]):
        assert math.cos(a.heading - b.heading) == pytest.approx(-1.0)
    for leg in plan.legs:
        assert f.contains([leg.start, leg.end]).all()


def test_noise_free_samples_equal_field():
    sc = default_scenarios(0)[0]
    sensor = SensorModel(noise_fraction=0.0)
    leg = Leg((40.0, 0.0), (40.0, 160.0))
    ts = sample_swath(sc.field, leg.stations(2.0), sensor, 0)
    assert np.array_equal(ts.y, sample_bilinear(sc.field, ts.X))


def test_noise_bounded_by_fraction_of_max():
    sc = default_scenarios(0)[1]
    sensor = SensorModel(noise_fraction=0.01)
    leg = Leg((60.0, 0.0), (60.0, 160.0))
    ts = sample_swath(sc.field, leg.stations(2.0), sensor, 3)
    eps = 0.01 * sc.field.values.max()
    assert np.abs(ts.y - sample_bilinear(sc.field, ts.X)).max() <= eps


@given(x=st.floats(0.0, 100.0), heading_up=st.booleans())
def test_swath_within_sensor_band(x, heading_up):
    f = flat(100)
    leg = Leg((x, 0.0), (x, 100.0)) if heading_up else Leg((x, 100.0), (x, 0.0))
    pts = swath_points(f, leg.stations(2.0), SensorModel())
    d = np.abs(pts[:, 0] - x)
    assert len(pts) == 0 or (d.min() >= 10.0 - 1e-9 and d.max() <= 20.0 + 1e-9)


def test_leg_near_boundary_is_single_sided():
    pts = swath_points(flat(100), Leg((2.0, 0.0), (2.0, 100.0)).stations(2.0), SensorModel())
    assert len(pts) > 0 and np.all(pts[:, 0] > 2.0)


def test_reestimation_schedule():
    assert reestimation_turns(10) == [1, 5, 9]
    assert reestimation_turns(4) == [1]


def small_scenario():
    spec = FieldSynthesis(width=60, height=60, n_obstacles=1, clear_radius=6.0)
    return generate_scenario(4, spec)


def test_survey_log_shape_and_growth():
    sc = small_scenario()
    plan = generate_lawnmower(sc.field, 15.0)
    log = run_survey(sc, SE, plan=plan, seed=1)
    assert len(log.rmse) == plan.turns
    assert [r.turn for r in log.records] == list(range(1, plan.turns + 1))
    sizes = [r.n_samples for r in log.records]
    assert sizes == sorted(sizes)
    assert [r.reestimated for r in log.records] == [t in (1, 5) for t in range(1, plan.turns + 1)]
    assert log.final_model is not None


def test_survey_deterministic():
    sc = small_scenario()
    a = run_survey(sc, MATERN3, plan=generate_lawnmower(sc.field, 15.0), seed=2)
    b = run_survey(sc, MATERN3, plan=generate_lawnmower(sc.field, 15.0), seed=2)
    assert a.to_csv() == b.to_csv()


def test_hyperparameters_respect_cap_per_reestimation():
    sc = small_scenario()
    log = run_survey(sc, SE, plan=generate_lawnmower(sc.field, 15.0), seed=0)
    prev = SurveyOptions().initial
    for r in log.records:
        for name in ("length_scale", "signal_variance", "noise_variance"):
            ratio = getattr(r.hyper, name) / getattr(prev, name)
            assert 1 / 3 - 1e-9 <= ratio <= 3 + 1e-9
        prev = r.hyper


def test_rmse_drops_over_survey():
    sc = default_scenarios(0)[1]
    log = run_survey(sc, SE, seed=0)
    assert log.rmse[-1] < log.rmse[0]
