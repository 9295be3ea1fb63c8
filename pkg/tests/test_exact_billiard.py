import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slitbilliard.errors import StencilCrossesSingularity
from slitbilliard.exact_billiard import (Chamber, CollisionRecord, Kind, Status, config_hash,
                                         monodromy, next_collision, relation_residuals, simulate,
                                         wall_value, write_trajectory_csv)
from slitbilliard.wall_motion import SlitConfig, TrigSeries, elliptic_config, example_config

STATIC = SlitConfig(TrigSeries(0.5), TrigSeries(0.5), 0.6, 0.1)


def on_wall(cfg, t, v, ch):
    rec = CollisionRecord(t=t, v=v, chamber=ch)
    return replace(rec, y=float(wall_value(cfg, rec)[0]))


def test_static_free_fall():
    rec = CollisionRecord(t=0.0, v=-1.0, chamber=Chamber.UPPER, y=1.0, kind=Kind.CEILING)
    nxt = next_collision(STATIC, rec)
    assert nxt.kind is Kind.SLIT
    assert nxt.t == pytest.approx(0.5, abs=1e-12)
    assert nxt.v == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0, 2), st.floats(1, 1e4), st.booleans())
def test_static_wall_keeps_speed(t, v, upper):
    ch = Chamber.UPPER if upper else Chamber.LOWER
    traj = simulate(STATIC, on_wall(STATIC, t, ch.sign * v, ch), 5)
    assert all(abs(r.v) == v for r in traj.records)


@pytest.mark.parametrize("a", [0.01, 0.02])
def test_elliptic_orbit(a):
    cfg = elliptic_config(a)
    v0 = 2 + 4 * a
    rec = on_wall(cfg, 0.25, v0, Chamber.UPPER)
    assert rec.y == pytest.approx(0.5 - a)
    traj = simulate(cfg, rec, 40)
    first = traj.records[0]
    assert (first.t, first.v) == pytest.approx((0.75, v0), abs=1e-12)
    assert traj.records[3].t == pytest.approx(2.25, abs=1e-12)
    assert max(abs(r.v - v0) for r in traj.records) < 1e-9


@pytest.mark.parametrize("a", [0.01, 0.02])
def test_elliptic_traces(a):
    cfg = elliptic_config(a)
    rec = on_wall(cfg, 0.25, 2 + 4 * a, Chamber.UPPER)
    want = 2 - 8 * a * math.pi ** 2 / (1 + 2 * a)
    J1, J4 = monodromy(cfg, rec, 1), monodromy(cfg, rec, 4)
    assert np.trace(J1) == pytest.approx(want, abs=1e-4)
    assert np.trace(J4) == pytest.approx(2 * math.cos(4 * math.acos(want / 2)), abs=1e-4)
    assert np.linalg.det(J4) == pytest.approx(1.0, abs=1e-6)


def test_elliptic_reference_values():
    assert 2 - 8 * 0.01 * math.pi ** 2 / 1.02 == pytest.approx(1.2259, abs=1e-4)


def test_static_jacobian_unit_determinant():
    rec = on_wall(STATIC, 0.3, 7.3, Chamber.UPPER)
    assert np.linalg.det(monodromy(STATIC, rec, 1)) == pytest.approx(1.0, abs=1e-8)


@given(st.floats(0, 2), st.floats(50, 2000), st.booleans())
def test_weighted_jacobian_determinant(t, v, upper):
    cfg = example_config(0.6, 0.1)
    ch = Chamber.UPPER if upper else Chamber.LOWER
    rec = on_wall(cfg, t, ch.sign * v, ch)
    try:
        J = monodromy(cfg, rec, 1)
    except StencilCrossesSingularity:
        return
    nxt = simulate(cfg, rec, 1).records[0]
    w = (nxt.v - wall_value(cfg, nxt)[1]) / (rec.v - wall_value(cfg, rec)[1])
    assert np.linalg.det(J) * w == pytest.approx(1.0, abs=1e-6)


def test_upper_to_lower_crossing():
    cfg = example_config(0.6, 0.1)
    rng = np.random.default_rng(3)
    found = 0
    for _ in range(400):
        v = 10 ** rng.uniform(2, 3)
        rec = on_wall(cfg, 0.5 - rng.uniform(0, 1.5) / v, v, Chamber.UPPER)
        prev = rec
        for r in simulate(cfg, rec, 2).records:
            if r.chamber is Chamber.LOWER and prev.chamber is Chamber.UPPER:
                found += 1
                assert r.relation in (3, 4)
                rt, rv = relation_residuals(cfg, prev, r)
                assert abs(rt) < 1e-10 and abs(rv) < 1e-10
            prev = r
    assert found > 0


def test_one_period_growth_in_trap():
    cfg = example_config(0.6, 0.1)
    rec = on_wall(cfg, 0.1, -200.0, Chamber.LOWER)
    traj = simulate(cfg, rec, 2000)
    last = [r for r in traj.records if r.t <= 2.1][-1]
    assert abs(last.v) == pytest.approx(2.013 * 200, abs=5.0)
    assert last.chamber is Chamber.LOWER


def test_zero_collisions():
    rec = on_wall(STATIC, 0.2, 3.0, Chamber.UPPER)
    traj = simulate(STATIC, rec, 0)
    assert len(traj) == 0 and traj.initial == rec and traj.status is Status.RUNNING


def test_trajectory_csv_header(tmp_path):
    cfg = elliptic_config(0.01)
    traj = simulate(cfg, on_wall(cfg, 0.25, 2.04, Chamber.UPPER), 4)
    p = tmp_path / "t.csv"
    write_trajectory_csv(p, cfg, traj)
    lines = p.read_text().splitlines()
    assert lines[0] == f"# config_hash={config_hash(cfg)}"
    assert lines[1].startswith("# version=")
    assert lines[3] == "t,v,chamber,kind,y"
    assert len(lines) == 8
