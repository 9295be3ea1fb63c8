"""Hybrid propagation of ensembles over many periods.

Between two jump times the wall is smooth and the action is an adiabatic
invariant, so an orbit landing on a singular strip can be moved directly to
its last collision before the next jump time: the fractional quantity
``X = {2 Ac Q - c}_2`` says where that collision sits.  The exact kernel then
carries the orbit across the jump to the next strip.  All smooth-stretch work
is vectorised over the ensemble, so a leg costs the same at |v| = 1e3 and at
|v| = 1e30.

Orbits whose scaled action is below ``exact_below`` are advanced with the
exact kernel only.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from . import _kernel as K
from .exact_billiard import Chamber, solver_for
from .normal_forms import WINDOW_DPS, Leg, NFConstants, compute_constants
from .wall_motion import PERIOD, SlitConfig

_GX, _GW = np.polynomial.legendre.leggauss(24)
_SPLIT = 134217729.0  # 2**27 + 1
NEWTON_STEPS = 8


def _two_prod(a, b):
    """``(p, e)`` with ``p + e = a * b`` exactly (Dekker)."""
    p = a * b
    t = _SPLIT * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLIT * b
    bh = t - (t - b)
    bl = b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def _frac2(a):
    """``{2 a}_2``, exact for every double ``a``."""
    return 2.0 * (a - np.floor(a))


def _gap(series, height, t):
    f, fd, fdd = series.evaluate(t)
    return height - f, -fd, -fdd


def _short_integral(series, height, a, dt):
    """``int_a^{a+dt} gap^-2`` for short, smooth intervals (vectorised)."""
    half = 0.5 * dt
    x = (a + half)[:, None] + half[:, None] * _GX
    g = height - series.value(x.ravel()).reshape(x.shape)
    return half * np.sum(_GW / (g * g), axis=1)


@dataclass
class LegResult:
    """Outcome of advancing every live orbit by one leg."""

    index: np.ndarray     # jump index crossed last (1 or 2)
    chamber: np.ndarray   # +1 upper, -1 lower, after landing
    velocity: np.ndarray
    alive: np.ndarray
    fast: np.ndarray      # whether the leg was fast-forwarded


class Propagator:
    """Moves kernel states from strip to strip."""

    def __init__(self, cfg: SlitConfig, constants: NFConstants | None = None,
                 exact_below: float = 20.0):
        self.cfg = cfg
        self.constants = constants or compute_constants(cfg)
        self.solver = solver_for(cfg)
        self.exact_below = exact_below
        self._dd = {}
        with mpmath.workdps(WINDOW_DPS):
            for key, q in self.constants.windows.items():
                hi = float(q)
                self._dd[key] = (hi, float(q - hi))

    # kernel plumbing -----------------------------------------------------

    def _run(self, states, max_slit):
        s = self.solver
        counts = np.zeros(len(states), dtype=np.int64)
        K.ensemble_to_strip(states, s.prm, s.C, s.K, s.A, s.B, int(max_slit), 1000, counts)
        return counts >= 0

    def start(self, t0, v0, chamber: Chamber) -> np.ndarray:
        """Kernel states on the wall at phases ``t0`` with speeds ``|v0|``."""
        t0 = np.mod(np.asarray(t0, dtype=float), PERIOD)
        v0 = np.abs(np.asarray(v0, dtype=float))
        t1, t2 = self.cfg.t1_star, self.cfg.t2_star
        states = np.zeros((len(t0), K.STATE_SIZE))
        right = (t0 >= t1) & (t0 < t2)
        f = np.where(right, self.cfg.f_R.value(t0), self.cfg.f_L.value(t0))
        states[:, K.S_TA] = t0
        states[:, K.S_PA] = t0
        states[:, K.S_SIDE] = np.where(right, K.RIGHT, K.LEFT)
        states[:, K.S_Y] = f
        states[:, K.S_V] = chamber.sign * v0
        states[:, K.S_CH] = chamber.sign
        states[:, K.S_CH0] = chamber.sign
        return states

    def to_strip(self, states) -> np.ndarray:
        """Exact run to the first strip; returns the success mask."""
        vmax = np.max(np.abs(states[:, K.S_V]), initial=1.0)
        return self._run(states, 4.0 * vmax + 1000)

    def offsets(self, states) -> np.ndarray:
        """Time since the last jump time, for states just landed on a strip."""
        idx = states[:, K.S_LASTSING]
        ts = np.where(idx == 1.0, self.cfg.t1_star, self.cfg.t2_star)
        d = states[:, K.S_PA] - ts + states[:, K.S_S]
        return d - PERIOD * np.round(d / PERIOD)

    def scaled_action(self, states) -> np.ndarray:
        c = self.constants
        out = np.empty(len(states))
        idx = states[:, K.S_LASTSING]
        for i in (1, 2):
            for ch in (Chamber.UPPER, Chamber.LOWER):
                m = (idx == i) & (states[:, K.S_CH] == ch.sign)
                if not m.any():
                    continue
                series = self.cfg.f_R if i == 1 else self.cfg.f_L
                height = 1.0 if ch is Chamber.UPPER else 0.0
                ts = c.jump(i).t_star
                off = self.offsets(states[m])
                v = states[m, K.S_V] + states[m, K.S_VC]
                g, gd, gdd = _gap(series, height, ts + off)
                out[m] = 0.5 * (g * v + g * gd + g * g * gdd / (3.0 * v))
        return out

    # fast-forward ----------------------------------------------------------

    def _fast_forward(self, states, i: int, ch: Chamber):
        """Replace strip-landing states by their last collision before the next jump."""
        c = self.constants
        j = 2 if i == 1 else 1
        leg = Leg.LEG12 if i == 1 else Leg.LEG21
        series = self.cfg.f_R if i == 1 else self.cfg.f_L
        height = 1.0 if ch is Chamber.UPPER else 0.0
        total = c.total(ch)
        ti, tj = c.jump(i).t_star, c.jump(j).t_star
        if j == 1:
            tj += PERIOD

        off = self.offsets(states)
        v = states[:, K.S_V] + states[:, K.S_VC]
        g, gd, gdd = _gap(series, height, ti + off)
        action = 0.5 * total * (g * v + g * gd + g * g * gdd / (3.0 * v))
        sc = action / total
        coord = action * (2.0 / total) * _short_integral(series, height, np.full_like(off, ti), off)

        # X = {2 Ac Q - c}_2 in double-double; every part is reduced on its own
        # since the low parts reach ~1e12 once Ac ~ 1e28
        hi, lo = self._dd[ch, leg]
        p, e = _two_prod(sc, hi)
        x = _frac2(p) + _frac2(e) + _frac2(sc * lo) - coord
        x = x - PERIOD * np.floor(x / PERIOD)

        # last collision: int_{tj}^{tj+s} gap^-2 = -q
        q = x * total / (2.0 * action)
        base = np.full_like(q, tj)
        gj = _gap(series, height, base)[0]
        s = -q * gj * gj
        for _ in range(NEWTON_STEPS):
            r = _short_integral(series, height, base, s) + q
            gs = _gap(series, height, tj + s)[0]
            s = s - r * gs * gs
        g, gd, gdd = _gap(series, height, tj + s)
        b = g * gd - 2.0 * action / total
        disc = b * b - 4.0 * g * (g * g * gdd / 3.0)
        root = -0.5 * (b + np.copysign(np.sqrt(np.maximum(disc, 0.0)), b))
        vn = root / g

        tj = c.jump(j).t_star
        out = np.zeros_like(states)
        out[:, K.S_TA] = tj
        out[:, K.S_PA] = tj
        out[:, K.S_S] = s
        out[:, K.S_SIDE] = K.LEFT if j == 1 else K.RIGHT
        out[:, K.S_Y] = series.value(tj + s)
        out[:, K.S_V] = vn
        out[:, K.S_CH] = ch.sign
        out[:, K.S_CH0] = ch.sign
        out[:, K.S_STATUS] = np.where((disc > 0) & (s < 0) & np.isfinite(s), K.RUNNING, K.GRAZING)
        return out

    def advance(self, states, alive) -> LegResult:
        """Advance every live landing state to the next strip (in place)."""
        alive = alive.copy()
        sc = np.zeros(len(states))
        sc[alive] = self.scaled_action(states[alive])
        fast = alive & (sc >= self.exact_below)
        idx = states[:, K.S_LASTSING]
        for i in (1, 2):
            for ch in (Chamber.UPPER, Chamber.LOWER):
                m = fast & (idx == i) & (states[:, K.S_CH] == ch.sign)
                if m.any():
                    states[m] = self._fast_forward(states[m], i, ch)
        slow = alive & ~fast
        if fast.any():
            self._run_inplace(states, fast, 64)
        if slow.any():
            vmax = np.max(np.abs(states[slow, K.S_V]))
            self._run_inplace(states, slow, 8.0 * vmax + 1000)
        alive &= states[:, K.S_STATUS] == K.RUNNING
        return LegResult(states[:, K.S_LASTSING].astype(int), states[:, K.S_CH].copy(),
                         states[:, K.S_V] + states[:, K.S_VC], alive, fast)

    def _run_inplace(self, states, mask, max_slit):
        sub = states[mask]
        self._run(sub, max_slit)
        states[mask] = sub
