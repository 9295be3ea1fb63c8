import math

import pytest
from hypothesis import given, strategies as st

from slitbilliard.errors import ConfigError
from slitbilliard.wall_motion import (Side, SlitConfig, TrigSeries, example_config, format_coeffs,
                                      jump_data, parse_coeffs, wall_at)

PI2 = math.pi ** 2


def test_example_series_values():
    cfg = example_config()
    assert cfg.f_L.evaluate(0.0) == pytest.approx((0.8, 0.0, -0.3 * PI2), abs=1e-14)
    assert cfg.f_R.evaluate(0.5) == pytest.approx((0.8, 0.0, -0.3 * PI2), abs=1e-14)


@given(st.floats(-10, 10))
def test_constant_series(t):
    assert TrigSeries(0.5).evaluate(t) == (0.5, 0.0, 0.0)


def test_one_sided_values_at_jump():
    cfg = example_config(0.5, 0.0)
    assert cfg.t1_star == pytest.approx(0.5)
    assert wall_at(cfg, 0.5, Side.LEFT_LIMIT)[0] == pytest.approx(0.5, abs=1e-14)
    assert wall_at(cfg, 0.5, Side.RIGHT_LIMIT)[0] == pytest.approx(0.8, abs=1e-14)


@given(st.floats(0.55, 1.25))
def test_interior_sides_agree(t):
    cfg = example_config(0.6, 0.1)
    assert wall_at(cfg, t, Side.LEFT_LIMIT) == wall_at(cfg, t, Side.RIGHT_LIMIT)


def test_no_jump_when_slits_equal():
    s = TrigSeries(0.5, ((1, 0.2),), ((2, 0.1),))
    cfg = SlitConfig(s, s, 0.6, 0.1)
    for i in (1, 2):
        j = jump_data(cfg, i)
        assert j.f_minus == j.f_plus
        assert j.a == 0.0 and j.a_prime == 0.0


def test_jump_data_example():
    cfg = example_config(0.6, 0.1)
    j1, j2 = jump_data(cfg, 1), jump_data(cfg, 2)
    assert j1.t_star == pytest.approx(0.5)
    assert (j1.f_minus, j1.f_plus) == pytest.approx((0.5, 0.8), abs=1e-14)
    assert (j1.l_minus, j1.l_plus) == pytest.approx((0.5, 0.2), abs=1e-14)
    assert j2.t_star == pytest.approx(1.3)
    assert j2.f_minus == pytest.approx(0.2573, abs=1e-4)
    assert j2.f_plus == pytest.approx(0.3237, abs=1e-4)


def test_containment_rejected():
    with pytest.raises(ConfigError):
        TrigSeries(0.5, ((1, 0.3), (2, 0.2)))
    with pytest.raises(ConfigError):
        TrigSeries(0.9, (), ((1, 0.2),))


def test_geometry_rejected():
    s = TrigSeries(0.5)
    with pytest.raises(ConfigError):
        SlitConfig(s, s, 0.3, 0.3)
    with pytest.raises(ConfigError):
        SlitConfig(s, s, 1.2, 0.1)


amps = st.floats(-0.15, 0.15)


@given(amps, amps, st.floats(0, 2), st.floats(-1, 1))
def test_shift_and_mirror(a, b, t, dt):
    s = TrigSeries(0.5, ((1, a), (3, b)), ((2, b),))
    assert s.shifted(dt).value(t) == pytest.approx(s.value(t + dt), abs=1e-12)
    assert s.mirrored().value(t) == pytest.approx(1.0 - s.value(t), abs=1e-14)


@given(amps, amps, st.floats(0, 2))
def test_derivatives_match_finite_differences(a, b, t):
    s = TrigSeries(0.5, ((1, a),), ((3, b),))
    h = 1e-5
    f0, fd, fdd = s.evaluate(t)
    fp, fm = s.value(t + h), s.value(t - h)
    assert fd == pytest.approx((fp - fm) / (2 * h), abs=1e-7)
    assert fdd == pytest.approx((fp - 2 * f0 + fm) / h ** 2, abs=1e-3)


@given(st.lists(st.tuples(st.integers(1, 9), st.floats(-1, 1)), max_size=5))
def test_coefficient_text_round_trip(coeffs):
    coeffs = tuple(coeffs)
    assert parse_coeffs(format_coeffs(coeffs)) == coeffs


def test_bad_coefficient_text():
    with pytest.raises(ConfigError):
        parse_coeffs("1=0.3")
