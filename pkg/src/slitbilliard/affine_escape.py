"""The piecewise-affine limit of the one-period map in the non-trapping chamber.

On the first strip put ``u = w12 I - tau``.  The leg-12 map keeps a point in
the chamber iff ``|{u}_2 - 1| < h12`` with ``h12 = l2+/l2-`` and then acts as

    tau' = -r12 {u}_2 + 1 + r12,   I' = I / r12 + d12 (tau' - 1),   r12 = 1/h12,

and leg 21 is the same with the data of the other jump.  The map is 2-periodic
in ``tau``; the admissible bands in ``u`` are the boxes.  Points are handled
as ``(tau, I)`` pairs in arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotHyperbolic, NotTrapping
from .exact_billiard import Chamber
from .normal_forms import NFConstants, compute_constants
from .trapping_atlas import TrappingKind, classify
from .wall_motion import SlitConfig


@dataclass(frozen=True)
class LegMap:
    """One affine leg: window ``w``, stretch ``r`` and shear ``d``."""

    w: float
    r: float
    d: float

    @property
    def half_width(self) -> float:
        return 1.0 / self.r

    @property
    def matrix(self) -> np.ndarray:
        r, w, d = self.r, self.w, self.d
        return np.array([[r, -r * w], [d * r, -d * r * w + 1.0 / r]])

    def u(self, tau, action):
        return self.w * action - tau

    def inside(self, tau, action):
        u = self.u(tau, action)
        return np.abs(u - 2.0 * np.floor(u / 2.0) - 1.0) < self.half_width

    def apply(self, tau, action):
        """Image of points assumed inside a box."""
        u = self.u(tau, action)
        frac = u - 2.0 * np.floor(u / 2.0)
        t = -self.r * frac + 1.0 + self.r
        return t, action / self.r + self.d * (t - 1.0)

    def box(self, tau, action):
        return np.floor(self.u(tau, action) / 2.0).astype(np.int64)


@dataclass(frozen=True, eq=False)
class AffineSystem:
    chamber: Chamber
    leg12: LegMap
    leg21: LegMap
    tr_reference: float
    DGU: np.ndarray = field(repr=False)
    lambda_u: float = 0.0
    lambda_s: float = 0.0
    e_u: np.ndarray = field(default=None, repr=False)
    e_s: np.ndarray = field(default=None, repr=False)

    @property
    def DG12(self) -> np.ndarray:
        return self.leg12.matrix

    @property
    def DG21(self) -> np.ndarray:
        return self.leg21.matrix

    @property
    def trace(self) -> float:
        return float(np.trace(self.DGU))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.DGU))

    @property
    def hyperbolic(self) -> bool:
        return abs(self.trace) > 2.0

    @property
    def ratio(self) -> float:
        """Box half-width of the second leg, ``l1+/l1-`` in the upper chamber."""
        return self.leg21.half_width

    @property
    def unstable_height(self) -> float:
        """Length of an ``e_u`` chord across one box of the first leg."""
        du = self.leg12.w * self.e_u[1] - self.e_u[0]
        return 2.0 * self.leg12.half_width / abs(du)

    def period(self, tau, action):
        """One period on arrays; returns ``(tau, action, exit_code)``.

        ``exit_code`` is 0 while in the chamber, 2 for loss at ``t2*``
        (outside every first-leg box) and 1 for loss at ``t1*``.
        """
        tau = np.asarray(tau, dtype=float)
        action = np.asarray(action, dtype=float)
        code = np.where(self.leg12.inside(tau, action), 0, 2)
        t, a = self.leg12.apply(tau, action)
        code = np.where((code == 0) & ~self.leg21.inside(t, a), 1, code)
        t, a = self.leg21.apply(t, a)
        return t, a, code

    def require_hyperbolic(self):
        if not self.hyperbolic:
            raise NotHyperbolic(f"|trace| = {abs(self.trace):.6g} <= 2")


def build_affine(constants: NFConstants | SlitConfig, chamber: Chamber | None = None) -> AffineSystem:
    """Affine system in the non-trapping chamber (upper unless the upper chamber traps)."""
    if isinstance(constants, SlitConfig):
        cfg = constants
        constants = compute_constants(cfg, extended=False)
    else:
        cfg = constants.upper.cfg
    if chamber is None:
        chamber = Chamber.LOWER if classify(cfg).kind is TrappingKind.UPPER else Chamber.UPPER
    j1, j2 = constants.jumps
    if chamber is Chamber.UPPER:
        leg12 = LegMap(2.0 * constants.beta, j2.l_m / j2.l_p, j2.delta()[0])
        leg21 = LegMap(2.0 * constants.alpha, j1.l_m / j1.l_p, j1.delta()[0])
        tr = constants.tr_U
    else:
        leg12 = LegMap(2.0 * constants.beta_p, j2.m_m / j2.m_p, j2.upsilon()[0])
        leg21 = LegMap(2.0 * constants.alpha_p, j1.m_m / j1.m_p, j1.upsilon()[0])
        tr = constants.tr_L
    dgu = leg21.matrix @ leg12.matrix
    vals, vecs = np.linalg.eig(dgu)
    if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
        # elliptic or parabolic: no real eigen-splitting
        return AffineSystem(chamber, leg12, leg21, tr, dgu, float("nan"), float("nan"))
    vals, vecs = vals.real, vecs.real
    iu = int(np.argmax(np.abs(vals)))
    e_u = vecs[:, iu] / np.linalg.norm(vecs[:, iu])
    e_s = vecs[:, 1 - iu] / np.linalg.norm(vecs[:, 1 - iu])
    return AffineSystem(chamber, leg12, leg21, tr, dgu, float(vals[iu]), float(vals[1 - iu]),
                        e_u, e_s)


# ---------------------------------------------------------------- single orbits

class Stay(enum.Enum):
    GOOD = "StayedGood"
    BAD = "StayedBad"


class ExitLeg(enum.Enum):
    AT_T1 = "at_t1"
    AT_T2 = "at_t2"


@dataclass(frozen=True)
class EscapeOutcome:
    itinerary: tuple
    exit_period: int | None
    exit_leg: ExitLeg | None
    horizon: int

    @property
    def survived(self) -> bool:
        return self.exit_period is None


@dataclass(frozen=True)
class LineCut:
    """One period applied to a whole unstable chord."""

    components: int
    surviving: float

    @property
    def good(self) -> bool:
        return self.components >= 2


def chord_cut(system: AffineSystem, tau: float, action: float) -> LineCut:
    """Cut the first-leg chord through ``(tau, action)`` along ``e_u`` by one period."""
    if system.e_u is None:
        raise NotHyperbolic("no unstable direction")
    l12, l21 = system.leg12, system.leg21
    eu = system.e_u
    du = l12.w * eu[1] - eu[0]
    u = l12.u(tau, action)
    m = math.floor(u / 2.0)
    h = l12.half_width
    lo, hi = (2 * m + 1 - h - u) / du, (2 * m + 1 + h - u) / du
    lo, hi = min(lo, hi), max(lo, hi)

    def image(s):
        t, a = tau + s * eu[0], action + s * eu[1]
        uu = l12.u(t, a) - 2.0 * m
        tb = -l12.r * uu + 1.0 + l12.r
        return tb, a / l12.r + l12.d * (tb - 1.0)

    ua = l21.u(*image(lo))
    ub = l21.u(*image(hi))
    a, b = min(ua, ub), max(ua, ub)
    h2 = l21.half_width
    comps, inside = 0, 0.0
    for k in range(math.floor((a - 1 - h2) / 2.0), math.ceil((b - 1 + h2) / 2.0) + 1):
        x0, x1 = max(a, 2 * k + 1 - h2), min(b, 2 * k + 1 + h2)
        if x1 > x0:
            comps += 1
            inside += x1 - x0
    return LineCut(comps, inside / (b - a) if b > a else 1.0)


def iterate(system: AffineSystem, point: tuple, N: int) -> EscapeOutcome:
    """Follow ``point = (tau, action)`` for up to ``N`` periods."""
    tau, action = float(point[0]), float(point[1])
    stays = []
    for n in range(1, N + 1):
        if not system.leg12.inside(tau, action):
            return EscapeOutcome(tuple(stays), n, ExitLeg.AT_T2, N)
        good = system.e_u is not None and chord_cut(system, tau, action).good
        t, a = system.leg12.apply(tau, action)
        if not system.leg21.inside(t, a):
            return EscapeOutcome(tuple(stays), n, ExitLeg.AT_T1, N)
        tau, action = (float(x) for x in system.leg21.apply(t, a))
        stays.append(Stay.GOOD if good else Stay.BAD)
    return EscapeOutcome(tuple(stays), None, None, N)


# ---------------------------------------------------------------- statistics

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_box(system: AffineSystem, box_index: int, samples: int, rng) -> tuple:
    """Uniform points in the first-leg box ``box_index`` with ``tau in [0, 2)``."""
    h = system.leg12.half_width
    tau = rng.uniform(0.0, 2.0, samples)
    u = rng.uniform(1.0 - h, 1.0 + h, samples) + 2.0 * box_index
    return tau, (u + tau) / system.leg12.w


def survival_curve(system: AffineSystem, box_index: int = 0, samples: int = 100_000,
                   N: int = 20, seed: int = 0) -> np.ndarray:
    """Fraction of box points still in the chamber after ``0..N`` periods."""
    system.require_hyperbolic()
    tau, action = sample_box(system, box_index, samples, _rng(seed))
    alive = np.ones(samples, dtype=bool)
    out = [1.0]
    for _ in range(N):
        tau, action, code = system.period(tau, action)
        alive &= code == 0
        out.append(alive.mean())
    return np.array(out)


def good_line_bound(ratio: float | AffineSystem) -> float:
    """``D = (1 + 2q)/(2 + q)`` for ``q = l1+/l1-`` (the second-leg box ratio)."""
    q = ratio.ratio if isinstance(ratio, AffineSystem) else float(ratio)
    if not 0.0 <= q < 1.0:
        raise NotTrapping(f"box ratio {q} must lie in [0, 1)")
    return (1.0 + 2.0 * q) / (2.0 + q)


@dataclass(frozen=True)
class GoodLineStats:
    lines: int
    good: int
    max_surviving: float
    mean_surviving: float
    bound: float


def good_line_statistics(system: AffineSystem, lines: int = 10_000, box_index: int = 0,
                         seed: int = 0) -> GoodLineStats:
    """One period on random full chords; surviving share on the good ones."""
    system.require_hyperbolic()
    tau, action = sample_box(system, box_index, lines, _rng(seed))
    cuts = [chord_cut(system, t, a) for t, a in zip(tau, action)]
    surv = np.array([c.surviving for c in cuts if c.good])
    return GoodLineStats(lines, len(surv), float(surv.max()) if len(surv) else float("nan"),
                         float(surv.mean()) if len(surv) else float("nan"),
                         good_line_bound(system))


@dataclass(frozen=True)
class LineStats:
    n: int
    piece_count: int
    r_quantiles: tuple
    measures: tuple      # measure of {r_n < eps}, one per epsilon
    epsilons: tuple
    surviving: float     # measure of the surviving part of the segment

    def fitted_constant(self) -> tuple[float, float]:
        """Slope through the origin of measure vs epsilon, and its R^2."""
        e = np.asarray(self.epsilons)
        m = np.asarray(self.measures)
        if not np.any(m > 0):
            return 0.0, 1.0
        c = float(e @ m / (e @ e))
        ss = float(np.sum((m - m.mean()) ** 2))
        r2 = 1.0 - float(np.sum((m - c * e) ** 2)) / ss if ss > 0 else 1.0
        return c, r2


def line_fragmentation(system: AffineSystem, segment: tuple | None, N: int, epsilon_list,
                       samples: int = 200_000, seed: int = 0) -> list[LineStats]:
    """Fragmentation statistics of an unstable segment ``(tau, action, length)``.

    ``segment`` starts at ``(tau, action)`` and runs along ``e_u``; ``None``
    takes the full chord through the centre of box 0.  Sample points are
    followed together with the distances to the two ends of their component
    (in image length), so each surviving sample carries its component length
    and ``{r_n < eps}`` is averaged over components rather than counted.
    """
    system.require_hyperbolic()
    eps = np.sort(np.asarray(epsilon_list, dtype=float))
    eu = system.e_u
    if segment is None:
        # centre line u = 1 of box 0 at tau = 1, chord shrunk a hair off the edges
        length = system.unstable_height * (1.0 - 1e-9)
        c = np.array([1.0, 2.0 / system.leg12.w]) - 0.5 * length * eu
        segment = (c[0], c[1], length)
    tau0, act0, length = (float(x) for x in segment)
    rng = _rng(seed)
    s = np.sort(rng.uniform(0.0, length, samples))
    tau = tau0 + s * eu[0]
    action = act0 + s * eu[1]
    left, right = s.copy(), length - s
    alive = np.ones(samples, dtype=bool)
    sig = np.zeros((samples, 0), dtype=np.int64)
    d = eu.copy()
    out = [_line_stats(0, left, right, alive, sig, eps, length)]
    for n in range(1, N + 1):
        for leg in (system.leg12, system.leg21):
            u = leg.u(tau, action)
            m = np.floor(u / 2.0)
            du = leg.w * d[1] - d[0]
            h = leg.half_width
            lo_edge = (u - (2 * m + 1 - h)) / abs(du)
            hi_edge = ((2 * m + 1 + h) - u) / abs(du)
            back, fwd = (lo_edge, hi_edge) if du > 0 else (hi_edge, lo_edge)
            left = np.minimum(left, back)
            right = np.minimum(right, fwd)
            alive &= np.abs(u - 2 * m - 1.0) < h
            sig = np.column_stack([sig, m.astype(np.int64)])
            tau, action = leg.apply(tau, action)
            img = leg.matrix @ d
            stretch = float(np.linalg.norm(img))
            d = img / stretch
            left, right = left * stretch, right * stretch
        keep = alive
        tau, action, left, right, sig = tau[keep], action[keep], left[keep], right[keep], sig[keep]
        weight = length / samples
        alive = np.ones(len(tau), dtype=bool)
        out.append(_line_stats(n, left, right, alive, sig, eps, length, weight))
    return out


def _line_stats(n, left, right, alive, sig, eps, length, weight=None) -> LineStats:
    if weight is None:
        weight = length / max(len(left), 1)
    comp = left + right
    r = np.minimum(left, right)
    if len(r) == 0:
        return LineStats(n, 0, (), tuple(0.0 for _ in eps), tuple(eps), 0.0)
    meas = tuple(float(weight * np.sum(np.minimum(2.0 * e, comp) / comp)) for e in eps)
    pieces = len(np.unique(sig, axis=0)) if sig.shape[1] else 1
    q = tuple(float(x) for x in np.quantile(r, (0.1, 0.5, 0.9)))
    return LineStats(n, pieces, q, meas, tuple(float(e) for e in eps), float(weight * len(r)))


def fitted_growth_constant(stats: list[LineStats]) -> float:
    """Largest per-period fitted slope; the empirical ``C*``."""
    return max(s.fitted_constant()[0] for s in stats)


def closed_form_c_star(system: AffineSystem, delta0: float, L: float | None = None) -> float:
    """Closed-form fragmentation constant with one-period blocks; ``inf`` unless ``|Lambda_u| > 32``."""
    L = system.unstable_height if L is None else L
    lam = abs(system.lambda_u)
    if lam <= 32.0:
        return float("inf")
    q = 32.0 / lam
    return q * 2.0 * L / delta0 + 32.0 * L / (delta0 * (1.0 - q))


@dataclass(frozen=True)
class WaitingTime:
    epsilon: float
    k: int
    l: int
    N: int
    T: float
    D: float
    lambda_u: float
    c_star: float
    L: float

    def csv(self) -> str:
        return ",".join(repr(x) for x in (self.epsilon, self.k, self.l, self.N, self.T, self.D,
                                          self.lambda_u, self.c_star))


WAITING_COLUMNS = "epsilon,k,l,N,T,D,Lambda_u,C_star_used"


def choose_kl(D: float, lambda_u: float, epsilon: float, L: float, c_star: float,
              l_max: int = 100_000) -> tuple[int, int]:
    """Smallest admissible ``(k, l)`` for the waiting-time recipe."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0.0 < D < 1.0:
        raise NotTrapping(f"good-line bound D = {D} is not below 1")
    lam = abs(lambda_u)
    if not lam > 1.0:
        raise NotHyperbolic("no expansion")
    x = math.log(0.25 * epsilon / L) / math.log(D)
    k = max(math.floor(x) + 1, 1)
    rhs = 0.25 * epsilon / (c_star + L * L)
    for l in range(1, l_max + 1):
        if (k * l + 1) / lam ** (l / 2.0) < rhs:
            return k, l
    raise NotHyperbolic("expansion too weak for the waiting-time recipe")


def waiting_time(system: AffineSystem, epsilon: float, c_star: float,
                 L: float | None = None) -> WaitingTime:
    """``N = k l + 1`` periods and ``T = 2N``."""
    system.require_hyperbolic()
    L = system.unstable_height if L is None else float(L)
    D = good_line_bound(system)
    k, l = choose_kl(D, system.lambda_u, epsilon, L, c_star)
    N = k * l + 1
    return WaitingTime(float(epsilon), k, l, N, 2.0 * N, D, system.lambda_u, float(c_star), L)
