
import numpy as np
import pytest
from hypothesis import given, strategies as st

from slitbilliard import normal_forms as N
from slitbilliard.errors import BranchMismatch, InsufficientSamples, NearBranchBoundary
from slitbilliard.exact_billiard import Chamber
from slitbilliard.normal_forms import Branch, BranchCase, Leg, NFMode, Strip, StripPoint
from slitbilliard.wall_motion import SlitConfig, TrigSeries, example_config

CFG = example_config(0.6, 0.1)
C = N.compute_constants(CFG)
LEVELS = [10.0 ** (2 + k / 4) for k in range(9)]


def point_with_X(const, strip, leg, action, X):
    """Strip point at ``action`` whose fractional quantity is ``X``."""
    x0 = N.fractional(const, StripPoint(0.0, action, strip), leg)
    return StripPoint((x0 - X) % 2.0, action, strip)


def test_no_jump_constants():
    s = TrigSeries(0.5, ((1, 0.3),))
    c = N.compute_constants(SlitConfig(s, s, 0.6, 0.1), extended=False)
    for j in c.jumps:
        assert j.delta() == (0.0, 0.0, 0.0)
        assert j.a == 0.0 and j.a_prime == 0.0
    assert c.tr_U == 2.0


def test_example_ratios():
    j1, j2 = C.jumps
    assert j1.l_p / j1.l_m == pytest.approx(0.4, abs=1e-14)
    assert j2.l_p / j2.l_m == pytest.approx(0.9106, abs=1e-4)
    assert (j1.l_p / j1.l_m) * (j2.l_p / j2.l_m) == pytest.approx(0.364, abs=1e-3)


def test_jump_time_maps_to_zero():
    p = N.to_strip_coords(C.upper, C, 0.5, 1e4, Strip.of(1, Chamber.UPPER), offset=0.0)
    assert p.coord == 0.0


def test_strip_round_trip():
    strip = Strip.of(1, Chamber.UPPER)
    p = StripPoint(0.77, 1e4, strip)
    dt, v = N.from_strip_coords(C.upper, C, p)
    q = N.to_strip_coords(C.upper, C, 0.5 + dt, v, strip, offset=dt)
    assert q.coord == pytest.approx(p.coord, abs=1e-9)
    assert q.scaled_action == pytest.approx(p.scaled_action, rel=1e-9)


def test_window_centre_is_uu():
    strip = Strip.of(1, Chamber.UPPER)
    p = point_with_X(C, strip, Leg.LEG12, 1e3, 1.0)
    assert N.classify_branch(C, p, Leg.LEG12).branch is Branch.UU
    out = N.apply_nf(C, BranchCase(Branch.UU, Leg.LEG12), p, NFMode.G_ONLY)
    assert out.coord == pytest.approx(1.0, abs=1e-9)
    j2 = C.jump(2)
    assert out.scaled_action == pytest.approx(j2.l_p / j2.l_m * 1e3, rel=1e-12)
    assert out.scaled_action == pytest.approx(910.6, abs=0.1)


def test_ll_expansion_factor():
    strip = Strip.of(1, Chamber.LOWER)
    p = point_with_X(C, strip, Leg.LEG12, 1e3, 1.0)
    out = N.apply_nf(C, BranchCase(Branch.LL, Leg.LEG12), p, NFMode.G_ONLY)
    assert out.scaled_action / 1e3 == pytest.approx(1.258, abs=1e-3)


def test_cross_thresholds():
    strip = Strip.of(1, Chamber.UPPER)
    j = C.jump(2)
    hi = (2.0 - j.f_p - j.f_m) / j.l_m
    lo = (j.f_p - j.f_m) / j.l_m
    assert N.classify_branch(C, point_with_X(C, strip, Leg.LEG12, 1e4, hi + 0.01),
                             Leg.LEG12).branch is Branch.UL_I
    assert N.classify_branch(C, point_with_X(C, strip, Leg.LEG12, 1e4, lo - 0.01),
                             Leg.LEG12).branch is Branch.UL_II
    with pytest.raises(NearBranchBoundary):
        N.classify_branch(C, point_with_X(C, strip, Leg.LEG12, 1e4, hi), Leg.LEG12)


def test_wrong_strip_rejected():
    p = StripPoint(0.3, 1e3, Strip.of(2, Chamber.UPPER))
    with pytest.raises(BranchMismatch):
        N.classify_branch(C, p, Leg.LEG12)
    with pytest.raises(BranchMismatch):
        N.apply_nf(C, BranchCase(Branch.UU, Leg.LEG12), p)


def test_no_jump_uu_keeps_action():
    s = TrigSeries(0.5, ((1, 0.3),))
    c = N.compute_constants(SlitConfig(s, s, 0.6, 0.1))
    strip = Strip.of(1, Chamber.UPPER)
    p = point_with_X(c, strip, Leg.LEG12, 1e3, 0.6)
    out = N.apply_nf(c, BranchCase(Branch.UU, Leg.LEG12), p, NFMode.G_ONLY)
    assert out.scaled_action == 1e3
    assert out.coord == pytest.approx(1.4, abs=1e-9)


def test_branch_agreement():
    rng = np.random.default_rng(5)
    total = agree = 0
    for case in N.reachable_branches(C):
        pts = N.sample_branch(C, case, np.exp(rng.uniform(np.log(1e3), np.log(1e4), 60)), 60, rng)
        res = N.empirical_strip_maps(CFG, C, pts, case.leg)
        total += len(pts)
        agree += sum(b is case.branch for b in res.branches)
    assert agree >= 0.999 * total


def test_uu_scaling_slopes():
    r = N.error_scaling(CFG, BranchCase(Branch.UU, Leg.LEG12), LEVELS, 150, seed=2, constants=C)
    assert -2.4 <= r.slope_GH <= -1.6
    assert -1.3 <= r.slope_G <= -0.7


def test_gh_improves_on_g():
    r = N.error_scaling(CFG, BranchCase(Branch.UL_I, Leg.LEG21), LEVELS, 100, seed=3, constants=C)
    for row in r.rows:
        assert row.median_error_GH < row.median_error_G


def test_literal_cross_terms_stay_first_order():
    case = BranchCase(Branch.UL_I, Leg.LEG12)
    lit = N.error_scaling(CFG, case, LEVELS, 100, seed=4, variant=N.LITERAL, constants=C)
    adj = N.error_scaling(CFG, case, LEVELS, 100, seed=4, constants=C)
    assert lit.slope_GH > -1.5
    assert adj.slope_GH < -1.6


def test_zero_samples():
    with pytest.raises(InsufficientSamples):
        N.error_scaling(CFG, BranchCase(Branch.UU, Leg.LEG12), LEVELS, 0, constants=C)
    with pytest.raises(InsufficientSamples):
        N.error_scaling(CFG, BranchCase(Branch.UU, Leg.LEG12), [1e2, 1e3], 10, constants=C)


@given(st.floats(0.05, 1.95), st.floats(3, 5))
def test_fractional_shift(c, logA):
    strip = Strip.of(2, Chamber.UPPER)
    A = 10.0 ** logA
    x0 = N.fractional(C, StripPoint(0.0, A, strip), Leg.LEG21)
    x = N.fractional(C, StripPoint(c, A, strip), Leg.LEG21)
    d = (x - (x0 - c)) % 2.0
    assert min(d, 2.0 - d) < 1e-9
