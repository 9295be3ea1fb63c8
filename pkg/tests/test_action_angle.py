import numpy as np
import pytest
from hypothesis import given, strategies as st

from slitbilliard.action_angle import (AngleAction, build_geometry, from_angle_action,
                                       invariant_drift, loglog_slope, to_angle_action)
from slitbilliard.errors import WrongChamberSign
from slitbilliard.exact_billiard import Chamber
from slitbilliard.wall_motion import SlitConfig, TrigSeries, example_config

STATIC = SlitConfig(TrigSeries(0.5), TrigSeries(0.5), 0.6, 0.1)
EXAMPLE = example_config(0.6, 0.1)
UPPER = build_geometry(EXAMPLE, Chamber.UPPER)


def test_constant_wall_closed_forms():
    g = build_geometry(STATIC, Chamber.UPPER)
    assert g.total == pytest.approx(8.0, rel=1e-14)
    for t in (0.0, 0.3, 1.7):
        assert g.theta(t) == pytest.approx(t, abs=1e-13)
    aa = to_angle_action(g, 0.0, 100.0)
    assert (aa.theta, aa.action) == pytest.approx((0.0, 200.0), abs=1e-12)
    t, v = from_angle_action(g, AngleAction(0.4, 1000.0))
    assert (t, v) == pytest.approx((0.4, 500.0), rel=1e-13)


def test_total_against_riemann_sum():
    n = 1_000_000
    t = (np.arange(n) + 0.5) * 2.0 / n
    f = np.where((t >= EXAMPLE.t1_star) & (t < EXAMPLE.t2_star),
                 EXAMPLE.f_R.value(t), EXAMPLE.f_L.value(t))
    riemann = np.sum(1.0 / (1.0 - f) ** 2) * 2.0 / n
    assert UPPER.total == pytest.approx(riemann, rel=1e-8)


def test_lower_total_is_mirrored_upper():
    lower = build_geometry(EXAMPLE, Chamber.LOWER)
    mirror = build_geometry(EXAMPLE.mirrored(), Chamber.UPPER)
    assert lower.total == pytest.approx(mirror.total, rel=1e-12)


def test_third_term_is_small():
    g, gd, gdd = UPPER.gap(0.3)
    third = abs(g * g * gdd / (3 * 500.0)) * UPPER.total / 2
    assert third < 1e-2 * UPPER.total


def test_lower_action_positive():
    lower = build_geometry(EXAMPLE, Chamber.LOWER)
    assert to_angle_action(lower, 0.3, -500.0).action > 0


def test_wrong_sign_rejected():
    with pytest.raises(WrongChamberSign):
        to_angle_action(UPPER, 0.3, -500.0)


@given(st.floats(0, 2, exclude_max=True), st.floats(3, 6))
def test_round_trip(theta, logI):
    aa = AngleAction(theta, 10.0 ** logI)
    t, v = from_angle_action(UPPER, aa)
    back = to_angle_action(UPPER, t, v)
    d = (back.theta - theta + 1.0) % 2.0 - 1.0
    assert abs(d) < 1e-9
    assert back.action == pytest.approx(aa.action, rel=1e-9)


def test_action_formula_residual():
    t, v = from_angle_action(UPPER, AngleAction(0.7, 1e4))
    assert abs(UPPER.action(t, v) - 1e4) < 1e-10 * 1e4


def test_smooth_drift_slopes():
    s = TrigSeries(0.5, ((1, 0.3),))
    cfg = SlitConfig(s, s, 0.6, 0.1)
    rows = invariant_drift(cfg, Chamber.UPPER, actions=[1e3, 1e4, 1e5], n_collisions=8)
    x = [r.action for r in rows]
    assert -3.4 <= loglog_slope(x, [r.max_action_change for r in rows]) <= -2.6
    assert -4.5 <= loglog_slope(x, [r.max_angle_defect for r in rows]) <= -3.5


def test_constant_wall_no_drift():
    rows = invariant_drift(STATIC, Chamber.LOWER, v_list=[1e3], n_collisions=4)
    assert rows[0].max_action_change < 1e-30
