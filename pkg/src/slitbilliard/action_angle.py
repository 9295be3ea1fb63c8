"""Action-angle coordinates away from the jump times.

Upper chamber: gap ``l = 1 - f``, ``L* = int_0^2 l^-2``,
    theta = (2/L*) int_0^t l^-2,   I = (L*/2)(l v + l l' + l^2 l'' / (3 v)).
Lower chamber: the same with ``m = -f`` and ``M*``; ``J > 0`` because ``m v > 0``.

Quadrature uses fixed Gauss-Legendre panels that never straddle a jump time,
which integrates the smooth trig pieces to machine precision.  The panel
totals are cross-checked against adaptive quadrature at build time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import integrate

from .errors import NoConvergence, QuadratureFailure, WrongChamberSign
from .exact_billiard import Chamber
from .wall_motion import PERIOD, SlitConfig, TrigSeries, reduce_phase

GL_ORDER = 24
PANEL = 0.005
_GX, _GW = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class AngleAction:
    theta: float
    action: float

    def __post_init__(self):
        if not self.action > 0:
            raise ValueError(f"action must be positive, got {self.action}")


@dataclass(frozen=True, eq=False)
class ChamberGeometry:
    """Gap function and cumulative angle table for one chamber."""

    cfg: SlitConfig
    chamber: Chamber
    total: float
    nodes: np.ndarray = field(repr=False)
    cum: np.ndarray = field(repr=False)

    @property
    def height(self) -> float:
        # the gap is height - f
        return 1.0 if self.chamber is Chamber.UPPER else 0.0

    def series(self, phase: float, right: bool = True) -> TrigSeries:
        t1, t2 = self.cfg.t1_star, self.cfg.t2_star
        inside = (t1 <= phase < t2) if right else (t1 < phase <= t2)
        return self.cfg.f_R if inside else self.cfg.f_L

    def gap(self, t, right: bool = True):
        """``(g, g', g'')`` of the gap at ``t`` (one-sided at jump times)."""
        p = float(reduce_phase(t))
        f, fd, fdd = self.series(p, right).evaluate(p)
        return self.height - f, -fd, -fdd

    def integrand(self, p):
        """``gap^-2`` at phases ``p`` (array, each strictly inside a piece)."""
        p = reduce_phase(np.asarray(p, dtype=float))
        t1, t2 = self.cfg.t1_star, self.cfg.t2_star
        inside = (p >= t1) & (p < t2)
        f = np.where(inside, self.cfg.f_R.value(p), self.cfg.f_L.value(p))
        g = self.height - f
        return 1.0 / (g * g)

    def _gl(self, a, b):
        """Gauss-Legendre integral on ``[a, b]`` (arrays, one smooth piece each)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        x = mid[..., None] + half[..., None] * _GX
        # evaluate on the series selected by the interval midpoint
        t1, t2 = self.cfg.t1_star, self.cfg.t2_star
        pm = np.asarray(reduce_phase(mid))
        inside = ((pm >= t1) & (pm < t2))[..., None]
        f = np.where(inside, self.cfg.f_R.value(x), self.cfg.f_L.value(x))
        g = self.height - f
        return half * np.sum(_GW / (g * g), axis=-1)

    def primitive(self, t):
        """``int_0^t gap^-2`` for absolute ``t``."""
        t = np.asarray(t, dtype=float)
        n = np.floor(t / PERIOD)
        p = t - PERIOD * n
        p = np.where(p >= PERIOD, p - PERIOD, p)
        idx = np.clip(np.searchsorted(self.nodes, p, side="right") - 1, 0, len(self.nodes) - 2)
        out = self.total * n + self.cum[idx] + self._gl(self.nodes[idx], p)
        return float(out) if out.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        """``int_a^b gap^-2`` with full relative precision for short intervals."""
        if abs(b - a) > PANEL:
            return float(self.primitive(b) - self.primitive(a))
        lo, hi, sgn = (a, b, 1.0) if b >= a else (b, a, -1.0)
        cuts = [lo]
        base = PERIOD * math.floor(lo / PERIOD)
        for k in range(2):
            for ts in (self.cfg.t1_star, self.cfg.t2_star):
                c = base + PERIOD * k + ts
                if lo < c < hi:
                    cuts.append(c)
        cuts = sorted(cuts) + [hi]
        total = 0.0
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            total += float(self._gl(np.array(x0), np.array(x1)))
        return sgn * total

    def theta(self, t):
        th = 2.0 / self.total * self.primitive(t)
        return reduce_phase(th)

    def dtheta(self, t_from: float, dt: float) -> float:
        """Angle advanced between ``t_from`` and ``t_from + dt`` (not reduced)."""
        return 2.0 / self.total * self.integral(t_from, t_from + dt)

    def t_of_theta(self, theta: float) -> float:
        """Phase in [0, 2) with ``theta(t) = theta``."""
        target = float(reduce_phase(theta)) * self.total / 2.0
        i = int(np.clip(np.searchsorted(self.cum, target, side="right") - 1, 0, len(self.nodes) - 2))
        a, b = self.nodes[i], self.nodes[i + 1]
        t = a + (b - a) * (target - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        for _ in range(50):
            r = self.cum[i] + float(self._gl(np.array(a), np.array(t))) - target
            # the integrand is evaluated on the panel's own piece
            g = self.height - self.series(float(reduce_phase(0.5 * (a + b)))).value(t)
            step = r * g * g
            t = min(max(t - step, a), b)
            if abs(step) <= 4e-16 * max(1.0, abs(t)):
                break
        return float(t)

    def action(self, t, v, right: bool = True) -> float:
        g, gd, gdd = self.gap(t, right)
        return 0.5 * self.total * (g * v + g * gd + g * g * gdd / (3.0 * v))

    def velocity(self, t, action: float, right: bool = True) -> float:
        """Large root of ``g v^2 + (g g' - 2A/T) v + g^2 g''/3 = 0``."""
        g, gd, gdd = self.gap(t, right)
        return velocity_from_action(g, gd, gdd, action, self.total)

    @property
    def min_action(self) -> float:
        """Refusal threshold ``10 T sup|g'|`` (at least ``T``)."""
        return 10.0 * self.total * max(self.cfg.sup_fdot, 0.1)


def velocity_from_action(g, gd, gdd, action, total):
    a = g
    b = g * gd - 2.0 * action / total
    c = g * g * gdd / 3.0
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise NoConvergence("action too small for the velocity inversion")
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    return q / a


def _cumulative(cfg: SlitConfig, chamber: Chamber):
    t1, t2 = cfg.t1_star, cfg.t2_star
    pieces = [(0.0, t1), (t1, t2), (t2, PERIOD)]
    nodes = [0.0]
    for a, b in pieces:
        if b <= a:
            continue
        n = max(1, math.ceil((b - a) / PANEL))
        nodes.extend(np.linspace(a, b, n + 1)[1:])
    nodes = np.array(nodes)
    geom = ChamberGeometry(cfg, chamber, 1.0, nodes, np.zeros_like(nodes))
    panels = geom._gl(nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(panels)])
    return nodes, cum, geom


def build_geometry(cfg: SlitConfig, chamber: Chamber | str) -> ChamberGeometry:
    chamber = Chamber(chamber) if isinstance(chamber, str) else chamber
    nodes, cum, raw = _cumulative(cfg, chamber)
    # independent adaptive cross-check, piece by piece
    t1, t2 = cfg.t1_star, cfg.t2_star
    for a, b in [(0.0, t1), (t1, t2), (t2, PERIOD)]:
        if b <= a:
            continue
        ref, err = integrate.quad(lambda s: float(raw.integrand(np.array([s]))[0]), a, b,
                                  epsabs=1e-13, epsrel=1e-13, limit=400,
                                  points=None)
        ia = np.searchsorted(nodes, a)
        ib = np.searchsorted(nodes, b)
        ours = cum[ib] - cum[ia]
        if abs(ours - ref) > 1e-10 * max(1.0, abs(ref)) or err > 1e-10:
            raise QuadratureFailure(f"piece [{a}, {b}]: panel sum {ours!r} vs adaptive {ref!r}")
    if np.any(np.diff(cum) <= 0):
        raise QuadratureFailure("cumulative angle table is not increasing")
    return ChamberGeometry(cfg, chamber, float(cum[-1]), nodes, cum)


def _check_sign(geom: ChamberGeometry, v: float):
    if geom.chamber is Chamber.UPPER and not v > 0:
        raise WrongChamberSign("upper-chamber action needs v > 0")
    if geom.chamber is Chamber.LOWER and not v < 0:
        raise WrongChamberSign("lower-chamber action needs v < 0")


def to_angle_action(geom: ChamberGeometry, t: float, v: float) -> AngleAction:
    _check_sign(geom, v)
    return AngleAction(float(geom.theta(t)), geom.action(t, v))


def from_angle_action(geom: ChamberGeometry, aa: AngleAction) -> tuple[float, float]:
    """``(t, v)`` with ``t`` in [0, 2)."""
    if aa.action < geom.min_action:
        raise NoConvergence(f"action {aa.action} below threshold {geom.min_action}")
    t = geom.t_of_theta(aa.theta)
    v = geom.velocity(t, aa.action)
    # one Newton polish on the action formula
    g, gd, gdd = geom.gap(t)
    dI = 0.5 * geom.total * (g - g * g * gdd / (3.0 * v * v))
    v -= (geom.action(t, v) - aa.action) / dI
    return t, v


# ---------------------------------------------------------------- drift

def _mp_series(series: TrigSeries):
    k, a, b = series.arrays
    consts = [(int(kk), mpmath.mpf(float(aa)), mpmath.mpf(float(bb))) for kk, aa, bb in zip(k, a, b)]
    c0 = mpmath.mpf(float(series.constant))

    def ev(t):
        f = c0
        fd = mpmath.mpf(0)
        fdd = mpmath.mpf(0)
        for kk, aa, bb in consts:
            w = mpmath.pi * kk
            c = mpmath.cos(w * t)
            s = mpmath.sin(w * t)
            f += aa * c + bb * s
            fd += w * (bb * c - aa * s)
            fdd -= w * w * (aa * c + bb * s)
        return f, fd, fdd

    return ev


def _mp_step(ev, height, sgn, t, v):
    """One same-chamber collision of the smooth model in extended precision.

    Upper (sgn = +1): ``(1 - f(t)) + (1 - f(t')) = v (t' - t)``.
    Lower (sgn = -1): ``f(t) + f(t') = -v (t' - t)``.
    """
    f0 = ev(t)[0]
    d0 = sgn * (height - f0)

    def res(tn):
        return d0 + sgn * (height - ev(tn)[0]) - sgn * v * (tn - t)

    def dres(tn):
        return -sgn * ev(tn)[1] - sgn * v

    guess = t + 2 * d0 / abs(v)
    tn = mpmath.findroot(res, guess, df=dres, tol=mpmath.mpf(10) ** (-mpmath.mp.dps + 5))
    return tn, v + 2 * ev(tn)[1]


@dataclass(frozen=True)
class DriftRow:
    action: float
    velocity: float
    max_action_change: float
    max_angle_defect: float


def invariant_drift(cfg: SlitConfig, chamber: Chamber | str, v_list=None, n_collisions: int = 16,
                    dps: int = 50, margin: float = 0.05, seed: int = 0,
                    actions=None) -> list[DriftRow]:
    """Per-collision change of the action and angle-increment defect.

    Each row uses ``n_collisions`` one-step samples started on the wall at
    fixed random phases at least ``margin`` away from the jump times, so
    every sampled step lies on one smooth piece.  Steps are taken in
    ``dps``-digit arithmetic because the drift at ``|v| ~ 1e5`` is below
    double precision.  Pass ``actions`` instead of ``v_list`` to start every
    sample at a prescribed action.
    """
    if (v_list is None) == (actions is None):
        raise ValueError("give exactly one of v_list and actions")
    chamber = Chamber(chamber) if isinstance(chamber, str) else chamber
    geom = build_geometry(cfg, chamber)
    sgn = 1 if chamber is Chamber.UPPER else -1
    rng = np.random.default_rng(seed)
    t1, t2 = cfg.t1_star, cfg.t2_star
    starts = []
    while len(starts) < n_collisions:
        t = float(rng.uniform(0.0, PERIOD))
        d = min(abs(t - t1), abs(t - t2), abs(t - t1 + 2), abs(t - t2 - 2), abs(t - t2 + 2))
        if d > margin:
            starts.append(t)
    rows = []
    with mpmath.workdps(dps):
        height = mpmath.mpf(geom.height)
        T = mpmath.mpf(float(geom.total))
        evs = {id(cfg.f_L): _mp_series(cfg.f_L), id(cfg.f_R): _mp_series(cfg.f_R)}

        def action(ev, t, v):
            f, fd, fdd = ev(t)
            g, gd, gdd = height - f, -fd, -fdd
            return T / 2 * (g * v + g * gd + g * g * gdd / (3 * v))

        levels = v_list if actions is None else actions
        for level in levels:
            worst_i = mpmath.mpf(0)
            worst_th = mpmath.mpf(0)
            I_ref = None
            for t in starts:
                if actions is None:
                    v0 = abs(float(level)) * sgn
                else:
                    v0 = geom.velocity(t, float(level))
                ev = evs[id(geom.series(t))]
                tm = mpmath.mpf(float(t))
                vm = mpmath.mpf(float(v0))
                I0 = action(ev, tm, vm)
                I_ref = I0 if I_ref is None else I_ref
                tn, vn = _mp_step(ev, height, sgn, tm, vm)
                I1 = action(ev, tn, vn)
                worst_i = max(worst_i, abs(I1 - I0))
                integ = mpmath.quad(lambda s: 1 / (height - ev(s)[0]) ** 2, [tm, tn])
                defect = 2 / T * integ - 2 / I0
                worst_th = max(worst_th, abs(defect))
            rows.append(DriftRow(float(I_ref), v0, float(worst_i), float(worst_th)))
    return rows


def loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
