import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from slitbilliard.errors import ConfigError, NotTrapping
from slitbilliard.exact_billiard import Chamber
from slitbilliard.trapping_atlas import (Ensemble, TrappingKind, classify, jump_differences,
                                         measure_contraction, measure_rate, oscillation_check,
                                         predicted_rate, run_history, scan)
from slitbilliard.wall_motion import SlitConfig, TrigSeries, example_config

amp = st.floats(-0.2, 0.2)


def series(c, a, b):
    return TrigSeries(0.5, ((1, c), (2, a)), ((1, b),))


def test_example_lower_trapping():
    cfg = example_config(0.6, 0.1)
    d1, d2 = jump_differences(cfg)
    assert d1 == pytest.approx(-0.3, abs=1e-14)
    assert d2 == pytest.approx(0.0664, abs=1e-4)
    assert classify(cfg).kind is TrappingKind.LOWER


def test_example_upper_trapping():
    assert classify(example_config(0.5, 0.4)).kind is TrappingKind.UPPER


def test_equal_slits_degenerate():
    s = TrigSeries(0.5, ((1, 0.3),))
    assert classify(SlitConfig(s, s, 0.6, 0.1)).kind is TrappingKind.DEGENERATE


def test_degenerate_line():
    for lam in (0.3, 0.45, 0.7):
        assert classify(example_config(lam, lam - 0.25)).kind is TrappingKind.DEGENERATE


def test_rates():
    p = predicted_rate(example_config(0.6, 0.1))
    assert p.chamber is Chamber.LOWER
    assert p.rate == pytest.approx(2.013, abs=1e-3)
    assert p.complementary == pytest.approx(0.364, abs=1e-3)
    with pytest.raises(NotTrapping):
        predicted_rate(example_config(0.2, 0.1))


@given(amp, amp, amp, amp, st.floats(0.1, 0.9), st.floats(0, 1), st.floats(-0.3, 0.3))
def test_time_shift_invariance(a, b, c, d, lam, frac, s):
    x0 = frac * lam
    assume(0 <= x0 + s < lam)
    f_L, f_R = series(a, b, c), series(c, d, a)
    base = classify(SlitConfig(f_L, f_R, lam, x0))
    moved = classify(SlitConfig(f_L.shifted(s), f_R.shifted(s), lam, x0 + s))
    assume(base.kind is not TrappingKind.DEGENERATE and moved.kind is not TrappingKind.DEGENERATE)
    assert base.kind is moved.kind


@given(amp, amp, amp, amp, st.floats(0.1, 0.9), st.floats(0, 1, exclude_max=True))
def test_swapped_slits_flip(a, b, c, d, lam, frac):
    cfg = SlitConfig(series(a, b, c), series(c, d, a), lam, frac * lam)
    k, ks = classify(cfg).kind, classify(cfg.swapped()).kind
    flip = {TrappingKind.UPPER: TrappingKind.LOWER, TrappingKind.LOWER: TrappingKind.UPPER}
    assert ks is flip.get(k, k)


def test_small_atlas_matches_lines():
    cfg = example_config()
    g = (np.arange(40) + 0.5) / 40
    rows = scan(cfg.f_L, cfg.f_R, g, g, threads=2)
    assert rows == scan(cfg.f_L, cfg.f_R, g, g)
    assert len(rows) == 40 * 39 // 2
    for r in rows:
        d, s = r.lam - r.x0, r.lam + r.x0
        near = min(abs(d - 0.25), abs(s - 0.75), abs(s - 1.75)) <= 1 / 40
        if not near:
            if d > 0.25 and s < 0.75:
                assert r.kind is TrappingKind.LOWER
            elif d < 0.25 and 0.75 < s < 1.75:
                assert r.kind is TrappingKind.UPPER
            else:
                assert r.kind is TrappingKind.NONE
        if r.hyperbolic:
            assert r.kind.trapping


def test_ensemble_reproducible():
    a, b = Ensemble(50, (1e3, 1e3 + 1), 7).draw(), Ensemble(50, (1e3, 1e3 + 1), 7).draw()
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    with pytest.raises(ConfigError):
        Ensemble(0)


def test_rate_small_ensemble():
    rep = measure_rate(example_config(0.6, 0.1), Ensemble(100, (1e3, 1e3 + 1), 1), 12)
    assert rep.relative_error < 0.05
    assert rep.dropped == 0
    with pytest.raises(ConfigError):
        measure_rate(example_config(0.6, 0.1), Ensemble(10, (10.0, 11.0)), 5)


def test_contraction_small_ensemble():
    rep = measure_contraction(example_config(0.6, 0.1), Ensemble(200, (1e3, 1e3 + 1), 2), 6)
    assert rep.relative_error < 0.1


def test_static_wall_keeps_speed():
    cfg = SlitConfig(TrigSeries(0.5), TrigSeries(0.5), 0.6, 0.1)
    hist = run_history(cfg, Ensemble(20, (500.0, 501.0), 0), 5, Chamber.UPPER)
    d = np.diff(hist.log_v, axis=1)
    assert np.all(np.abs(d) < 1e-10)


def test_no_oscillation_small():
    rep = oscillation_check(example_config(0.5, 0.4), Ensemble(100, (1e3, 1e3 + 1), 3), 20)
    assert rep.events == 0 and rep.dropped == 0
