import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slitbilliard import affine_escape as E
from slitbilliard.errors import NotHyperbolic, NotTrapping
from slitbilliard.exact_billiard import Chamber
from slitbilliard.normal_forms import compute_constants
from slitbilliard.wall_motion import SlitConfig, TrigSeries, example_config

SYS = E.build_affine(example_config(0.6, 0.1))
amp = st.floats(-0.2, 0.2)


def test_example_system():
    assert SYS.chamber is Chamber.UPPER
    assert SYS.trace == pytest.approx(SYS.tr_reference, abs=1e-8)
    assert SYS.det == pytest.approx(1.0, abs=1e-12)
    assert SYS.hyperbolic
    assert SYS.ratio == pytest.approx(0.4, abs=1e-14)
    assert SYS.lambda_u * SYS.lambda_s == pytest.approx(1.0, abs=1e-12)


def test_upper_trapping_uses_lower_chamber():
    s = E.build_affine(example_config(0.5, 0.4))
    assert s.chamber is Chamber.LOWER
    assert s.det == pytest.approx(1.0, abs=1e-12)


@given(amp, amp, amp, st.floats(0.1, 0.9), st.floats(0, 1, exclude_max=True))
def test_trace_and_determinant_identities(a, b, c, lam, frac):
    cfg = SlitConfig(TrigSeries(0.5, ((1, a),), ((2, b),)), TrigSeries(0.5, ((1, c),)),
                     lam, frac * lam)
    const = compute_constants(cfg, extended=False)
    s = E.build_affine(const, Chamber.UPPER)
    assert s.det == pytest.approx(1.0, abs=1e-12)
    assert s.trace == pytest.approx(const.tr_U, abs=1e-8 * max(1.0, abs(const.tr_U)))


def test_equal_slits_never_escape():
    s = TrigSeries(0.5, ((1, 0.3),))
    sysd = E.build_affine(SlitConfig(s, s, 0.6, 0.1), Chamber.UPPER)
    assert sysd.trace == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(NotHyperbolic):
        sysd.require_hyperbolic()
    rng = np.random.default_rng(0)
    tau, act = rng.uniform(0, 2, 1000), rng.uniform(10, 20, 1000)
    for _ in range(5):
        tau, act, code = sysd.period(tau, act)
        assert np.all(code == 0)


def test_immediate_escape_at_t1():
    rng = np.random.default_rng(1)
    tau, act = E.sample_box(SYS, 0, 1000, rng)
    _, _, code = SYS.period(tau, act)
    i = int(np.nonzero(code == 1)[0][0])
    out = E.iterate(SYS, (tau[i], act[i]), 10)
    assert out.exit_period == 1 and out.exit_leg is E.ExitLeg.AT_T1


def test_outside_first_box_exits_at_t2():
    h = SYS.leg12.half_width
    out = E.iterate(SYS, (0.0, (1.0 + h + 0.01) / SYS.leg12.w), 5)
    assert out.exit_period == 1 and out.exit_leg is E.ExitLeg.AT_T2


def test_box_orbits_escape_fast():
    tau, act = E.sample_box(SYS, 0, 500, np.random.default_rng(2))
    periods = [E.iterate(SYS, (t, a), 50).exit_period or 51 for t, a in zip(tau, act)]
    assert np.median(periods) <= 3


@given(st.integers(0, 1000))
def test_survival_nonincreasing(seed):
    s = E.survival_curve(SYS, 0, 2000, 8, seed)
    assert s[0] == 1.0 and np.all(np.diff(s) <= 0)


def test_good_line_bound_examples():
    assert E.good_line_bound(0.4) == pytest.approx(0.75)
    assert E.good_line_bound(0.5) == pytest.approx(0.8)
    assert E.good_line_bound(0.999999) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(NotTrapping):
        E.good_line_bound(1.0)


def test_good_lines_respect_bound():
    g = E.good_line_statistics(SYS, 500, seed=1)
    assert g.good > 0 and g.max_surviving <= g.bound + 0.01


def test_fragmentation():
    eps = [0.005, 0.01, 0.02, 0.05]
    stats = E.line_fragmentation(SYS, (1.0, 0.05, 0.3), 10, eps, samples=50_000, seed=0)
    assert stats[0].measures == pytest.approx([min(2 * e, 0.3) for e in eps], rel=1e-9)
    for s in stats:
        if s.surviving > 0:
            assert s.fitted_constant()[1] > 0.95
    for a, b in zip(stats, stats[1:]):
        if a.piece_count and b.piece_count:
            assert b.piece_count <= a.piece_count * (abs(SYS.lambda_u) + 2)


def test_choose_kl_example():
    k, _ = E.choose_kl(0.75, 61.3, 0.1, 2.0, 2.0)
    assert k == 16
    assert k == math.floor(math.log(0.0125) / math.log(0.75)) + 1
    k2, _ = E.choose_kl(0.75, 61.3, 0.05, 2.0, 2.0)
    assert 0 <= k2 - k <= math.ceil(math.log(2) / math.log(1 / 0.75))
    assert E.choose_kl(0.9999, 61.3, 0.1, 2.0, 2.0)[0] > 10_000


def test_waiting_time_survival():
    c = E.fitted_growth_constant(E.line_fragmentation(SYS, None, 6, [0.01, 0.05], samples=50_000))
    wt = E.waiting_time(SYS, 0.1, c)
    assert wt.N == wt.k * wt.l + 1 and wt.T == 2 * wt.N
    assert E.survival_curve(SYS, 0, 20_000, wt.N, 0)[wt.N] < 0.1


def test_closed_form_constant():
    assert math.isfinite(E.closed_form_c_star(SYS, SYS.unstable_height))
    weak = E.build_affine(example_config(0.5, 0.4))
    assert E.closed_form_c_star(weak, weak.unstable_height) == math.inf
