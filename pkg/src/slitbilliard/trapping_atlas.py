"""Trapping classification, the (lambda, x0) atlas and energy growth rates.

With ``D_i = f_L(t_i*) - f_R(t_i*)``, the lower chamber traps when
``D_1 < 0 < D_2`` and the upper chamber when ``D_1 > 0 > D_2``.  The trace of
the linearised one-period map in the other chamber decides hyperbolicity.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernel as K
from ._hybrid import Propagator
from .errors import ConfigError, NotTrapping
from .exact_billiard import Chamber
from .normal_forms import NFConstants
from .wall_motion import PERIOD, SlitConfig, TrigSeries, jump_data

DEGENERATE_TOL = 1e-12
DISCARD_PERIODS = 3
_GX, _GW = np.polynomial.legendre.leggauss(32)
_PANELS = 8


class TrappingKind(enum.Enum):
    LOWER = "LowerTrapping"
    UPPER = "UpperTrapping"
    NONE = "NoTrap"
    DEGENERATE = "Degenerate"

    @property
    def trapping(self) -> bool:
        return self in (TrappingKind.LOWER, TrappingKind.UPPER)

    @property
    def chamber(self) -> Chamber:
        """The trapping chamber."""
        if not self.trapping:
            raise NotTrapping(f"{self.value} has no trapping chamber")
        return Chamber.LOWER if self is TrappingKind.LOWER else Chamber.UPPER


@dataclass(frozen=True)
class TrappingVerdict:
    kind: TrappingKind
    tr_value: float | None = None
    hyperbolic: bool = False


@dataclass(frozen=True)
class AtlasRow:
    lam: float
    x0: float
    kind: TrappingKind
    tr_value: float | None
    hyperbolic: bool

    def csv(self) -> str:
        tr = "" if self.tr_value is None else repr(self.tr_value)
        return f"{self.lam!r},{self.x0!r},{self.kind.value},{tr},{int(self.hyperbolic)}"


ATLAS_COLUMNS = "lambda,x0,kind,tr,hyperbolic"


def jump_differences(cfg: SlitConfig) -> tuple[float, float]:
    """``(f_L - f_R)`` at ``t1*`` and ``t2*``."""
    t1, t2 = cfg.t1_star, cfg.t2_star
    return (cfg.f_L.value(t1) - cfg.f_R.value(t1), cfg.f_L.value(t2) - cfg.f_R.value(t2))


def _kind(d1: float, d2: float) -> TrappingKind:
    if abs(d1) <= DEGENERATE_TOL or abs(d2) <= DEGENERATE_TOL:
        return TrappingKind.DEGENERATE
    if d1 < 0 < d2:
        return TrappingKind.LOWER
    if d1 > 0 > d2:
        return TrappingKind.UPPER
    return TrappingKind.NONE


def _piece_integral(series: TrigSeries, height: float, a: float, b: float) -> float:
    """Composite Gauss-Legendre ``int_a^b (height - f)^-2`` on a smooth piece."""
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, _PANELS + 1)
    half = 0.5 * np.diff(edges)
    x = (edges[:-1] + half)[:, None] + half[:, None] * _GX
    g = height - series.value(x.ravel()).reshape(x.shape)
    return float(np.sum(half[:, None] * _GW / (g * g)))


def window_integrals(cfg: SlitConfig, chamber: Chamber) -> tuple[float, float]:
    """``(alpha, beta)``: ``int gap^-2`` on the left-slit and right-slit stretches."""
    h = 1.0 if chamber is Chamber.UPPER else 0.0
    t1, t2 = cfg.t1_star, cfg.t2_star
    alpha = _piece_integral(cfg.f_L, h, 0.0, t1) + _piece_integral(cfg.f_L, h, t2, PERIOD)
    beta = _piece_integral(cfg.f_R, h, t1, t2)
    return alpha, beta


def chamber_trace(cfg: SlitConfig, chamber: Chamber) -> float:
    """Trace of the linearised one-period strip map in ``chamber``."""
    alpha, beta = window_integrals(cfg, chamber)
    j1, j2 = jump_data(cfg, 1), jump_data(cfg, 2)
    if chamber is Chamber.UPPER:
        r1, r2 = j1.l_minus / j1.l_plus, j2.l_minus / j2.l_plus
        a1, a2 = j1.a, j2.a
    else:
        r1, r2 = j1.f_minus / j1.f_plus, j2.f_minus / j2.f_plus
        a1, a2 = j1.a_prime, j2.a_prime
    return ((r1 - a1 * beta) * (r2 - a2 * alpha)
            + (1.0 / r1 - a1 * alpha) * (1.0 / r2 - a2 * beta)
            - a1 * a2 * alpha * beta)


def classify(cfg: SlitConfig) -> TrappingVerdict:
    kind = _kind(*jump_differences(cfg))
    if not kind.trapping:
        return TrappingVerdict(kind)
    other = Chamber.UPPER if kind is TrappingKind.LOWER else Chamber.LOWER
    tr = chamber_trace(cfg, other)
    return TrappingVerdict(kind, tr, abs(tr) > 2.0)


def scan(f_L: TrigSeries, f_R: TrigSeries, lambda_grid, x0_grid,
         threads: int = 1) -> list[AtlasRow]:
    """Classify every grid node with ``0 <= x0 < lambda``; rows in grid order."""
    nodes = [(float(lam), float(x0)) for lam in lambda_grid for x0 in x0_grid
             if 0.0 <= x0 < lam < 1.0]

    def row(node):
        lam, x0 = node
        v = classify(SlitConfig(f_L, f_R, lam, x0))
        return AtlasRow(lam, x0, v.kind, v.tr_value, v.hyperbolic)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(row, nodes))
    return [row(n) for n in nodes]


# ---------------------------------------------------------------- growth rates

@dataclass(frozen=True)
class RatePrediction:
    """Per-period energy factor in the trap and in the other chamber."""

    chamber: Chamber
    rate: float
    complementary: float


def predicted_rate(cfg: SlitConfig, verdict: TrappingVerdict | None = None) -> RatePrediction:
    verdict = verdict or classify(cfg)
    if not verdict.kind.trapping:
        raise NotTrapping(f"configuration is {verdict.kind.value}")
    j1, j2 = jump_data(cfg, 1), jump_data(cfg, 2)
    lower = (j1.m_plus / j1.m_minus) * (j2.m_plus / j2.m_minus)
    upper = (j1.l_plus / j1.l_minus) * (j2.l_plus / j2.l_minus)
    if verdict.kind is TrappingKind.LOWER:
        return RatePrediction(Chamber.LOWER, lower, upper)
    return RatePrediction(Chamber.UPPER, upper, lower)


@dataclass(frozen=True)
class Ensemble:
    count: int = 1000
    v_range: tuple = (1e3, 1e3 + 1.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.v_range
        if self.count < 1:
            raise ConfigError("ensemble count must be positive")
        if not 0 < lo <= hi:
            raise ConfigError(f"bad velocity range {self.v_range}")

    def draw(self):
        """Initial phases and speeds from PCG64 seeded with ``seed``."""
        rng = np.random.Generator(np.random.PCG64(self.seed))
        t0 = rng.uniform(0.0, PERIOD, self.count)
        v0 = rng.uniform(self.v_range[0], self.v_range[1], self.count)
        return t0, v0


@dataclass
class History:
    """Velocities and chambers at each landing after ``t1*``, per orbit."""

    v0: np.ndarray
    log_v: np.ndarray      # (orbits, periods + 1)
    chamber: np.ndarray    # same shape, +1 / -1
    ok: np.ndarray         # orbit never failed
    max_log_v: np.ndarray  # running max over every landing
    oscillated: np.ndarray


def run_history(cfg: SlitConfig, ensemble: Ensemble, periods: int, chamber: Chamber,
                constants: NFConstants | None = None) -> History:
    """Propagate ``ensemble`` for ``periods`` periods and log each passage of ``t1*``.

    Also flags orbits that drop below half their initial speed after
    exceeding ten times it.
    """
    prop = Propagator(cfg, constants)
    t0, v0 = ensemble.draw()
    states = prop.start(t0, v0, chamber)
    alive = prop.to_strip(states)
    n = ensemble.count
    log_v = np.full((n, periods + 1), np.nan)
    ch = np.zeros((n, periods + 1))
    seen = np.zeros(n, dtype=int)
    lv0 = np.log(v0)
    vmax = np.full(n, -np.inf)
    high = np.zeros(n, dtype=bool)
    osc = np.zeros(n, dtype=bool)

    def log_landing(mask):
        lv = np.log(np.abs(states[:, K.S_V]))
        nonlocal vmax
        vmax = np.where(mask, np.maximum(vmax, lv), vmax)
        high[mask & (lv > lv0 + math.log(10.0))] = True
        osc[mask & high & (lv < lv0 + math.log(0.5))] = True
        at1 = mask & (states[:, K.S_LASTSING] == 1.0) & (seen <= periods)
        rows = np.nonzero(at1)[0]
        log_v[rows, seen[rows]] = lv[rows]
        ch[rows, seen[rows]] = states[rows, K.S_CH]
        seen[rows] += 1

    log_landing(alive)
    ok = alive.copy()
    for _ in range(2 * periods + 2):
        todo = ok & (seen <= periods)
        if not todo.any():
            break
        res = prop.advance(states, todo)
        ok &= res.alive | ~todo
        log_landing(todo & ok)
    return History(v0, log_v, ch, ok, vmax, osc)


@dataclass
class RateReport:
    predicted: float
    slope: float
    stderr: float
    ci: tuple
    periods: np.ndarray
    mean_log_v: np.ndarray
    orbits: int
    dropped: int

    @property
    def dropped_fraction(self) -> float:
        return self.dropped / max(self.orbits, 1)

    @property
    def relative_error(self) -> float:
        return abs(self.slope - math.log(self.predicted)) / abs(math.log(self.predicted))

    def csv_rows(self) -> list[str]:
        out = ["period,mean_log_v,fitted"]
        base = self.mean_log_v[DISCARD_PERIODS:]
        icpt = float(np.mean(base - self.slope * self.periods[DISCARD_PERIODS:])) if len(base) else 0.0
        for p, m in zip(self.periods, self.mean_log_v):
            out.append(f"{int(p)},{m!r},{int(p >= DISCARD_PERIODS)}")
        out.append(f"# slope={self.slope!r} stderr={self.stderr!r} intercept={icpt!r} "
                   f"predicted_log={math.log(self.predicted)!r} dropped={self.dropped}")
        return out


def measure_rate(cfg: SlitConfig, ensemble: Ensemble = Ensemble(), periods: int = 30,
                 constants: NFConstants | None = None) -> RateReport:
    """Least-squares per-period slope of the ensemble mean of ``log |v|``.

    Orbits start on the wall of the trapping chamber; the first
    ``DISCARD_PERIODS`` periods are left out of the fit and failed orbits are
    dropped and counted.
    """
    verdict = classify(cfg)
    pred = predicted_rate(cfg, verdict)
    if min(ensemble.v_range) < 1e2:
        raise ConfigError("growth-rate ensembles must start at |v| >= 100")
    hist = run_history(cfg, ensemble, periods, pred.chamber, constants)
    keep = hist.ok & np.all(np.isfinite(hist.log_v), axis=1)
    if keep.sum() < 2:
        raise NotTrapping("fewer than two orbits survived the run")
    mean = hist.log_v[keep].mean(axis=0)
    idx = np.arange(periods + 1)
    fit = stats.linregress(idx[DISCARD_PERIODS:], mean[DISCARD_PERIODS:])
    half = 1.96 * fit.stderr
    return RateReport(pred.rate, float(fit.slope), float(fit.stderr),
                      (fit.slope - half, fit.slope + half), idx, mean,
                      ensemble.count, int(ensemble.count - keep.sum()))


@dataclass
class ContractionReport:
    predicted: float
    mean_log_change: float
    stderr: float
    samples: int
    dropped: int

    @property
    def relative_error(self) -> float:
        return abs(self.mean_log_change - math.log(self.predicted)) / abs(math.log(self.predicted))


def measure_contraction(cfg: SlitConfig, ensemble: Ensemble = Ensemble(), periods: int = 10,
                        constants: NFConstants | None = None) -> ContractionReport:
    """Mean per-period change of ``log |v|`` while resident in the non-trapping chamber.

    Only whole periods spent in that chamber count; escapes end residence.
    """
    pred = predicted_rate(cfg)
    other = Chamber.UPPER if pred.chamber is Chamber.LOWER else Chamber.LOWER
    hist = run_history(cfg, ensemble, periods, other, constants)
    res = (hist.chamber == other.sign)
    both = res[:, :-1] & res[:, 1:] & hist.ok[:, None]
    d = np.diff(hist.log_v, axis=1)[both]
    d = d[np.isfinite(d)]
    if len(d) < 2:
        raise NotTrapping("no resident periods observed")
    return ContractionReport(pred.complementary, float(d.mean()),
                             float(d.std(ddof=1) / math.sqrt(len(d))), int(len(d)),
                             int((~hist.ok).sum()))


@dataclass
class OscillationReport:
    orbits: int
    events: int
    dropped: int
    max_log_v: float


def oscillation_check(cfg: SlitConfig, ensemble: Ensemble = Ensemble(), periods: int = 100,
                      constants: NFConstants | None = None) -> OscillationReport:
    """Count orbits that fall below ``|v0|/2`` after exceeding ``10 |v0|``."""
    pred = predicted_rate(cfg)
    hist = run_history(cfg, ensemble, periods, pred.chamber, constants)
    events = int((hist.oscillated & hist.ok).sum())
    top = hist.max_log_v[hist.ok]
    return OscillationReport(ensemble.count, events, int((~hist.ok).sum()),
                             float(top.max()) if len(top) else float("nan"))
