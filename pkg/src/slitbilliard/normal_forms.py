"""Strip coordinates and the twelve strip-to-strip normal forms.

On the upper strips the coordinates are ``tau = I (theta - theta_i*)`` and
``Ic = I / L*``; on the lower strips ``rho = J (zeta - zeta_i*)`` and
``Jc = J / M*``.  A map from strip ``i`` to strip ``j`` depends on the
fractional quantity

    X = {T Ac W - c}_2

(``T`` the chamber total, ``Ac`` the scaled action, ``c`` the angle
coordinate, ``W`` the angle window between the two jump times), and its
branch is decided by comparing ``d = g_j^- X`` with the jump data at ``t_j*``.

The normal forms are written as ``G + H``: ``G`` is affine in ``X`` with an
action update that uses the already mapped angle coordinate, ``H`` is the
``1/Ac`` correction.  A few terms have two plausible signs; ``Variant``
selects between them and ``ADJUDICATED`` holds the choice that matches the
exact simulator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import _kernel as K
from .action_angle import ChamberGeometry, _mp_series, build_geometry, velocity_from_action
from .errors import (BranchMismatch, InsufficientSamples, NearBranchBoundary, NotInStrip,
                     QuadratureFailure)
from .exact_billiard import Chamber, solver_for
from .wall_motion import PERIOD, SlitConfig, jump_data

V_STAR = 100.0
FUZZ_FACTOR = 8.0


class Strip(enum.Enum):
    R1_PLUS = "R1+"
    R2_PLUS = "R2+"
    R1_MINUS = "R1-"
    R2_MINUS = "R2-"

    @property
    def index(self) -> int:
        return 1 if self in (Strip.R1_PLUS, Strip.R1_MINUS) else 2

    @property
    def chamber(self) -> Chamber:
        return Chamber.UPPER if self in (Strip.R1_PLUS, Strip.R2_PLUS) else Chamber.LOWER

    @classmethod
    def of(cls, index: int, chamber: Chamber) -> "Strip":
        up = chamber is Chamber.UPPER
        if index == 1:
            return cls.R1_PLUS if up else cls.R1_MINUS
        return cls.R2_PLUS if up else cls.R2_MINUS


class Leg(enum.Enum):
    LEG12 = "leg12"
    LEG21 = "leg21"

    @property
    def source(self) -> int:
        return 1 if self is Leg.LEG12 else 2

    @property
    def target(self) -> int:
        return 2 if self is Leg.LEG12 else 1


class Branch(enum.Enum):
    UU = "UU"
    UL_I = "UL_I"
    UL_II = "UL_II"
    LL = "LL"
    LU_I = "LU_I"
    LU_II = "LU_II"

    @property
    def start(self) -> Chamber:
        return Chamber.UPPER if self.value.startswith("U") else Chamber.LOWER

    @property
    def end(self) -> Chamber:
        return Chamber.UPPER if self in (Branch.UU, Branch.LU_I, Branch.LU_II) else Chamber.LOWER


# collision relation of the first slit collision after a jump -> branch
RELATION_BRANCH = {1: Branch.UU, 2: Branch.LL, 3: Branch.UL_I, 4: Branch.UL_II,
                   5: Branch.LU_I, 6: Branch.LU_II}


@dataclass(frozen=True)
class BranchCase:
    branch: Branch
    leg: Leg


@dataclass(frozen=True)
class StripPoint:
    coord: float
    scaled_action: float
    strip: Strip

    def __post_init__(self):
        if not self.scaled_action > 0:
            raise ValueError(f"scaled action must be positive, got {self.scaled_action}")

    @property
    def tau_or_rho(self) -> float:
        return self.coord


@dataclass(frozen=True)
class Variant:
    """Readings of normal-form terms whose printed form is in doubt.

    ``uu_constant`` / ``ll_constant``: combination in the constant ``H`` term,
    ``"mixed"`` = g^- g''^+ - g^+ g''^-, ``"same"`` = g^- g''^- - g^+ g''^+.
    ``lu1_leg21_sign``: sign of the ``(l+/m-) Jc`` term on the second leg of LU_I.
    ``lu2_last_sign``: sign of the constant ``chi_II''''`` term of LU_II.
    ``lu2_leg21_total``: whether the second-leg window of LU_II carries ``M*``.
    ``cross_h``: ``"printed"`` evaluates the chamber-changing ``H`` terms as
    written with the kappa/chi families; ``"derived"`` uses the expansion of
    the local collision geometry, which for both UL and LU branches reads

        H = -q4 / g^-  -/+ q2 e - q3 e^2        (e = c - 1)

    with ``(q2, q3, q4)`` the kappa_II (resp. chi_II) triple and ``g^-`` the
    gap before the jump.
    """

    uu_constant: str = "mixed"
    ll_constant: str = "same"
    lu1_leg21_sign: float = 1.0
    lu2_last_sign: float = -1.0
    lu2_leg21_total: bool = False
    cross_h: str = "printed"


LITERAL = Variant()
# the reading that reproduces the exact simulator at slope -2 on every branch
ADJUDICATED = Variant(uu_constant="same", ll_constant="same", lu1_leg21_sign=-1.0,
                      lu2_last_sign=-1.0, lu2_leg21_total=True, cross_h="derived")


@dataclass(frozen=True)
class JumpConstants:
    """Jump data at ``t_i*`` and the derived normal-form constants."""

    index: int
    t_star: float
    f_m: float
    f_p: float
    fd_m: float
    fd_p: float
    fdd_m: float
    fdd_p: float

    # gaps; derivatives of l and m are both -f', -f''
    @property
    def l_m(self):
        return 1.0 - self.f_m

    @property
    def l_p(self):
        return 1.0 - self.f_p

    @property
    def m_m(self):
        return -self.f_m

    @property
    def m_p(self):
        return -self.f_p

    @property
    def gd_m(self):
        return -self.fd_m

    @property
    def gd_p(self):
        return -self.fd_p

    @property
    def gdd_m(self):
        return -self.fdd_m

    @property
    def gdd_p(self):
        return -self.fdd_p

    @property
    def a(self):
        return self.fd_m * (1.0 - self.f_p) - self.fd_p * (1.0 - self.f_m)

    @property
    def a_prime(self):
        return self.fd_p * self.f_m - self.fd_m * self.f_p

    # upper-upper
    def _smooth(self, gm, gp, which):
        d = self.gd_m, self.gd_p
        dd = self.gdd_m, self.gdd_p
        first = 0.5 * gp / gm * (gm * d[1] - gp * d[0])
        second = 0.125 * gp * gp * (gm * dd[1] - gp * dd[0])
        if which == "mixed":
            const = gm * gp * (gm * dd[1] - gp * dd[0]) / 24.0
        else:
            const = gm * gp * (gm * dd[0] - gp * dd[1]) / 24.0
        return first, second, const

    def delta(self, which="mixed"):
        """``(Delta, Delta', Delta'')``."""
        return self._smooth(self.l_m, self.l_p, which)

    def upsilon(self, which="same"):
        """``(Upsilon, Upsilon', Upsilon'')``."""
        return self._smooth(self.m_m, self.m_p, which)

    # upper-lower: gaps l^- before, m^+ after
    @property
    def kappa_I(self):
        lm, mp = self.l_m, self.m_p
        ldm, mdp = self.gd_m, self.gd_p
        lddm, mddp = self.gdd_m, self.gdd_p
        return (0.5 * mp * (mdp - mp * ldm / lm),
                0.5 * mp * ldm / lm,
                0.125 * mp * lddm * (1.0 - lm * lm / 3.0),
                0.25 * mp * mp * (lddm + lm * mddp / 6.0),
                0.125 * mp ** 3 * lddm,
                0.125 * mp * mp * mddp * lm)

    @property
    def kappa_II(self):
        lm, mp = self.l_m, self.m_p
        lddm, mddp = self.gdd_m, self.gdd_p
        return (0.25 * mp * mp * lddm,
                0.125 * mp * mp * (lm * mddp - mp * lddm),
                mp * lm * (lm * lm * lddm - lm * mp * mddp - 3.0 * lddm) / 24.0)

    # lower-upper: gaps m^- before, l^+ after
    @property
    def chi_I(self):
        mm, lp = self.m_m, self.l_p
        mdm, ldp = self.gd_m, self.gd_p
        mddm, lddp = self.gdd_m, self.gdd_p
        return (0.5 * lp * (ldp - lp * mdm / mm),
                0.5 * lp * mdm / mm,
                0.125 * lp * mddm * (1.0 - mm * mm / 3.0),
                0.25 * lp * lp * (mm * lddp / 6.0 - mddm),
                0.125 * lp ** 3 * mddm,
                0.125 * lp * lp * lddp * mm)

    @property
    def chi_II(self):
        mm, lp = self.m_m, self.l_p
        mddm, lddp = self.gdd_m, self.gdd_p
        return (0.25 * lp * lp * mddm,
                0.125 * lp * lp * (mm * lddp - lp * mddm),
                lp * mm * (mm * mm * mddm - mm * lp * lddp - 3.0 * mddm) / 24.0)


@dataclass(frozen=True, eq=False)
class NFConstants:
    L_star: float
    M_star: float
    theta1_star: float
    theta2_star: float
    zeta1_star: float
    zeta2_star: float
    alpha: float
    beta: float
    alpha_p: float
    beta_p: float
    jumps: tuple
    sup_fdot: float
    upper: ChamberGeometry = field(repr=False)
    lower: ChamberGeometry = field(repr=False)
    # window integrals of g^-2 in extended precision, keyed by (chamber, leg)
    windows: dict = field(repr=False, default_factory=dict)

    def jump(self, i: int) -> JumpConstants:
        return self.jumps[i - 1]

    @property
    def a1(self):
        return self.jumps[0].a

    @property
    def a2(self):
        return self.jumps[1].a

    @property
    def tr_U(self) -> float:
        j1, j2 = self.jumps
        a1, a2, al, be = j1.a, j2.a, self.alpha, self.beta
        return ((j1.l_m / j1.l_p - a1 * be) * (j2.l_m / j2.l_p - a2 * al)
                + (j1.l_p / j1.l_m - a1 * al) * (j2.l_p / j2.l_m - a2 * be)
                - a1 * a2 * al * be)

    @property
    def tr_L(self) -> float:
        j1, j2 = self.jumps
        a1, a2, al, be = j1.a_prime, j2.a_prime, self.alpha_p, self.beta_p
        return ((j1.f_m / j1.f_p - a1 * be) * (j2.f_m / j2.f_p - a2 * al)
                + (j1.f_p / j1.f_m - a1 * al) * (j2.f_p / j2.f_m - a2 * be)
                - a1 * a2 * al * be)

    def total(self, chamber: Chamber) -> float:
        return self.L_star if chamber is Chamber.UPPER else self.M_star

    def geometry(self, chamber: Chamber) -> ChamberGeometry:
        return self.upper if chamber is Chamber.UPPER else self.lower

    def star(self, chamber: Chamber, i: int) -> float:
        if chamber is Chamber.UPPER:
            return self.theta1_star if i == 1 else self.theta2_star
        return self.zeta1_star if i == 1 else self.zeta2_star

    def window(self, chamber: Chamber, leg: Leg) -> float:
        s1, s2 = self.star(chamber, 1), self.star(chamber, 2)
        return s2 - s1 if leg is Leg.LEG12 else PERIOD + s1 - s2

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("L_star", "M_star", "theta1_star", "theta2_star",
                                             "zeta1_star", "zeta2_star", "alpha", "beta",
                                             "alpha_p", "beta_p", "tr_U", "tr_L")}
        for j in self.jumps:
            i = j.index
            for name in ("l_m", "l_p", "m_m", "m_p", "a", "a_prime"):
                out[f"{name}_{i}"] = getattr(j, name)
            groups = (("Delta", j.delta()), ("Upsilon", j.upsilon()), ("kappa_I", j.kappa_I),
                      ("chi_I", j.chi_I), ("kappa_II", j.kappa_II), ("chi_II", j.chi_II))
            for tag, vals in groups:
                first = 2 if tag.endswith("_II") else 0
                for n, val in enumerate(vals, start=first):
                    out[f"{tag}{'p' * n}_{i}"] = val
        return out


def compute_constants(cfg: SlitConfig, extended: bool = True) -> NFConstants:
    """All normal-form constants of ``cfg``.

    ``extended=False`` skips the extended-precision window integrals; the
    double-precision ones are then used by :func:`fractional`.  That is
    enough for grid scans and the affine map but not for scaling tests.
    """
    up = build_geometry(cfg, Chamber.UPPER)
    lo = build_geometry(cfg, Chamber.LOWER)
    t1, t2 = cfg.t1_star, cfg.t2_star
    P1, P2 = up.primitive(t1), up.primitive(t2)
    Q1, Q2 = lo.primitive(t1), lo.primitive(t2)
    beta = P2 - P1
    alpha = up.total - beta
    beta_p = Q2 - Q1
    alpha_p = lo.total - beta_p
    if not (alpha > 0 and beta > 0 and alpha_p > 0 and beta_p > 0):
        raise QuadratureFailure("window integrals must be positive")
    jumps = []
    for i in (1, 2):
        jd = jump_data(cfg, i)
        jumps.append(JumpConstants(i, jd.t_star, jd.f_minus, jd.f_plus, jd.fdot_minus,
                                   jd.fdot_plus, jd.fddot_minus, jd.fddot_plus))
    plain = dict(zip(_WINDOW_KEYS, (beta, alpha, beta_p, alpha_p)))
    if extended:
        windows = _window_integrals(cfg)
        for key, ref in plain.items():
            if abs(float(windows[key]) - ref) > 1e-9 * ref:
                raise QuadratureFailure(f"window integral mismatch on {key[0].value}/{key[1].value}")
    else:
        windows = {k: mpmath.mpf(v) for k, v in plain.items()}
    return NFConstants(up.total, lo.total, 2.0 * P1 / up.total, 2.0 * P2 / up.total,
                       2.0 * Q1 / lo.total, 2.0 * Q2 / lo.total, alpha, beta, alpha_p, beta_p,
                       tuple(jumps), cfg.sup_fdot, up, lo, windows)


WINDOW_DPS = 34
_WINDOW_KEYS = ((Chamber.UPPER, Leg.LEG12), (Chamber.UPPER, Leg.LEG21),
                (Chamber.LOWER, Leg.LEG12), (Chamber.LOWER, Leg.LEG21))


def _window_integrals(cfg: SlitConfig) -> dict:
    """``int g^-2`` over (t1*, t2*) and (t2*, t1* + 2) to ~30 digits.

    The fractional quantity multiplies these by the action, so at I ~ 1e4
    a double-precision window would already cost ~1e-11 in ``X``.
    """
    t1, t2 = mpmath.mpf(cfg.t1_star), mpmath.mpf(cfg.t2_star)
    out = {}
    with mpmath.workdps(WINDOW_DPS):
        for ch in (Chamber.UPPER, Chamber.LOWER):
            h = 1 if ch is Chamber.UPPER else 0
            for leg, series, a, b in ((Leg.LEG12, cfg.f_R, t1, t2),
                                      (Leg.LEG21, cfg.f_L, t2, t1 + 2)):
                ev = _mp_series(series)
                nodes = mpmath.linspace(a, b, 9)
                out[ch, leg] = mpmath.quad(lambda t: 1 / (h - ev(t)[0]) ** 2, nodes)
    return out


# ---------------------------------------------------------------- coordinates

def _nearest(x: float) -> float:
    """Representative of ``x`` mod 2 in (-1, 1]."""
    r = x - PERIOD * math.floor((x + 1.0) / PERIOD)
    return r if r > -1.0 else r + PERIOD


def to_strip_coords(geom: ChamberGeometry, constants: NFConstants, t: float, v: float,
                    strip: Strip, offset: float | None = None) -> StripPoint:
    """Strip coordinates of the post-collision state ``(t, v)``.

    ``offset`` is ``t - t_i*`` when known exactly (e.g. from a record anchored
    at the jump time); otherwise it is recovered from ``t``.
    """
    if geom.chamber is not strip.chamber:
        raise NotInStrip(f"{strip.value} lies in the {strip.chamber.value} chamber")
    ts = constants.jump(strip.index).t_star
    if offset is None:
        offset = _nearest(t - ts)
    if geom.chamber is Chamber.UPPER and not v > 0 or geom.chamber is Chamber.LOWER and not v < 0:
        raise NotInStrip("velocity has the wrong sign for this chamber")
    action = geom.action(ts + offset, v, right=offset >= 0)
    dth = geom.dtheta(ts, offset)
    c = action * dth
    if not 0.0 <= c <= 2.0 + 1e-6 or action <= 0:
        raise NotInStrip(f"angle coordinate {c} outside the strip")
    return StripPoint(c, action / geom.total, strip)


def from_strip_coords(geom: ChamberGeometry, constants: NFConstants, point: StripPoint):
    """``(offset, v)``: time after ``t_i*`` and velocity of a strip point."""
    ts = constants.jump(point.strip.index).t_star
    action = point.scaled_action * geom.total
    target = point.coord / action
    g0 = geom.gap(ts, right=True)[0]
    dt = target * geom.total / 2.0 * g0 * g0
    last = math.inf
    for _ in range(60):
        r = geom.dtheta(ts, dt) - target
        g = geom.gap(ts + dt, right=True)[0]
        step = r * geom.total / 2.0 * g * g
        if abs(step) >= last:
            break  # converged to round-off
        dt -= step
        last = abs(step)
        if abs(step) <= 4e-16 * abs(dt):
            break
    g, gd, gdd = geom.gap(ts + dt, right=True)
    v = velocity_from_action(g, gd, gdd, action, geom.total)
    return dt, v


def fractional(constants: NFConstants, point: StripPoint, leg: Leg,
               total: float | None = None) -> float:
    """``X = {T Ac W - c}_2``; ``total`` overrides the chamber total ``T``.

    With ``W = 2 Q / T`` (``Q`` the window integral) the product is
    ``2 Ac Q`` and is formed in extended precision.
    """
    ch = point.strip.chamber
    with mpmath.workdps(WINDOW_DPS):
        q = constants.windows[ch, leg]
        if total is not None:
            q = q * mpmath.mpf(total) / mpmath.mpf(constants.total(ch))
        x = 2 * mpmath.mpf(point.scaled_action) * q - mpmath.mpf(point.coord)
        x -= PERIOD * mpmath.floor(x / PERIOD)
        return float(x)


def fuzz_band(constants: NFConstants, chamber: Chamber, scaled_action: float) -> float:
    return FUZZ_FACTOR * constants.sup_fdot / (constants.total(chamber) * scaled_action)


def _thresholds(j: JumpConstants, chamber: Chamber):
    """``(scale, low, high)``: ``d = scale X`` against the two thresholds."""
    if chamber is Chamber.UPPER:
        return j.l_m, j.f_p - j.f_m, 2.0 - j.f_p - j.f_m
    return j.f_m, j.f_m - j.f_p, j.f_m + j.f_p


def classify_branch(constants: NFConstants, point: StripPoint, leg: Leg,
                    fuzz: bool = True, v_star: float = V_STAR) -> BranchCase:
    ch = point.strip.chamber
    if point.strip.index != leg.source:
        raise BranchMismatch(f"{point.strip.value} is not the source strip of {leg.value}")
    if point.scaled_action < v_star:
        raise NearBranchBoundary(f"scaled action {point.scaled_action} below V* = {v_star}")
    j = constants.jump(leg.target)
    scale, low, high = _thresholds(j, ch)
    X = fractional(constants, point, leg)
    d = scale * X
    if fuzz:
        band = fuzz_band(constants, ch, point.scaled_action)
        edges = [0.0, 2.0 * scale, low, high]
        if any(abs(d - e) < band for e in edges):
            raise NearBranchBoundary(f"d = {d:.6g} within {band:.3g} of a branch threshold")
    if ch is Chamber.UPPER:
        if d < low:
            return BranchCase(Branch.UL_II, leg)
        if d > high:
            return BranchCase(Branch.UL_I, leg)
        return BranchCase(Branch.UU, leg)
    if d < low:
        return BranchCase(Branch.LU_II, leg)
    if d > high:
        return BranchCase(Branch.LU_I, leg)
    return BranchCase(Branch.LL, leg)


def branch_window(constants: NFConstants, case: BranchCase) -> tuple[float, float]:
    """Interval of the fractional quantity ``X`` covered by a branch."""
    ch = case.branch.start
    j = constants.jump(case.leg.target)
    scale, low, high = _thresholds(j, ch)
    lo_x, hi_x = low / scale, high / scale
    if case.branch in (Branch.UU, Branch.LL):
        a, b = lo_x, hi_x
    elif case.branch in (Branch.UL_II, Branch.LU_II):
        a, b = 0.0, lo_x
    else:
        a, b = hi_x, 2.0
    return max(a, 0.0), min(b, 2.0)


class NFMode(enum.Enum):
    G_ONLY = "G_only"
    G_PLUS_H = "G_plus_H"


def apply_nf(constants: NFConstants, case: BranchCase, point: StripPoint,
             mode: NFMode | str = NFMode.G_PLUS_H, variant: Variant = ADJUDICATED,
             check: bool = True) -> StripPoint:
    """Evaluate ``G`` (and ``H``) of the branch map at ``point``."""
    mode = NFMode(mode)
    br, leg = case.branch, case.leg
    if point.strip.chamber is not br.start or point.strip.index != leg.source:
        raise BranchMismatch(f"{br.value}/{leg.value} does not start on {point.strip.value}")
    if check:
        got = classify_branch(constants, point, leg, fuzz=False, v_star=0.0)
        if got.branch is not br:
            raise BranchMismatch(f"point lies in the {got.branch.value} window, not {br.value}")
    j = constants.jump(leg.target)
    A = point.scaled_action
    literal_total = br is Branch.LU_II and leg is Leg.LEG21 and not variant.lu2_leg21_total
    X = fractional(constants, point, leg, total=1.0 if literal_total else None)
    withH = mode is NFMode.G_PLUS_H
    lm, lp, mm, mp = j.l_m, j.l_p, j.m_m, j.m_p

    if br is Branch.UU:
        D, D1, D2 = j.delta(variant.uu_constant)
        c = -lm / lp * X + 1.0 + lm / lp
        a = lp / lm * A + D * (c - 1.0)
        if withH:
            a += (D1 * (c - 1.0) ** 2 + D2) / A
    elif br is Branch.LL:
        U, U1, U2 = j.upsilon(variant.ll_constant)
        c = -mm / mp * X + 1.0 + mm / mp
        a = mp / mm * A + U * (c - 1.0)
        if withH:
            a += (U1 * (c - 1.0) ** 2 + U2) / A
    elif br in (Branch.UL_I, Branch.UL_II):
        k0, k1, k2, k3, k4, k5 = j.kappa_I
        s = -1.0 if br is Branch.UL_I else 1.0
        c = lm / mp * X + (mp - lm + s) / mp
        a = -mp / lm * A + k0 * (c - 1.0) + s * k1
        if withH:
            e = c - 1.0
            q2, q3, q4 = j.kappa_II
            if variant.cross_h == "derived":
                a += (-q4 / lm - s * q2 * e - q3 * e * e) / A
            elif br is Branch.UL_I:
                a += (k2 + k3 * e + k4 * e * e - k5 * e ** 3) / A
            else:
                a += (-q2 * e - q3 * e * e - q4) / A
    else:
        x0, x1, x2, x3, x4, x5 = j.chi_I
        s = 1.0 if br is Branch.LU_I else -1.0
        c = mm / lp * X + (lp - mm + s) / lp
        lead = -lp / mm * A
        if br is Branch.LU_I and leg is Leg.LEG21:
            lead *= -variant.lu1_leg21_sign
        a = lead + x0 * (c - 1.0) + s * x1
        if withH:
            e = c - 1.0
            q2, q3, q4 = j.chi_II
            if variant.cross_h == "derived":
                a += (-q4 / mm - s * q2 * e - q3 * e * e) / A
            elif br is Branch.LU_I:
                a += (x2 + x3 * e + x4 * e * e - x5 * e ** 3) / A
            else:
                a += (q2 * e - q3 * e * e + variant.lu2_last_sign * q4) / A
    return StripPoint(c, a, Strip.of(leg.target, br.end))


# ---------------------------------------------------------------- empirical map

@dataclass
class EmpiricalResult:
    points: list
    branches: list
    ok: np.ndarray


def _initial_states(cfg: SlitConfig, constants: NFConstants, points) -> np.ndarray:
    s = solver_for(cfg)
    states = np.zeros((len(points), K.STATE_SIZE))
    for n, p in enumerate(points):
        geom = constants.geometry(p.strip.chamber)
        dt, v = from_strip_coords(geom, constants, p)
        j = constants.jump(p.strip.index)
        side = 1 if p.strip.index == 1 else 0
        st = states[n]
        st[K.S_TA] = j.t_star
        st[K.S_PA] = j.t_star
        st[K.S_S] = dt
        st[K.S_SIDE] = side
        st[K.S_Y] = s.series[side].value(j.t_star + dt)
        st[K.S_V] = v
        st[K.S_CH] = p.strip.chamber.sign
        st[K.S_CH0] = st[K.S_CH]
    return states


def empirical_strip_maps(cfg: SlitConfig, constants: NFConstants, points, leg: Leg) -> EmpiricalResult:
    """Exact images of strip points on the next strip (batched)."""
    s = solver_for(cfg)
    for p in points:
        if p.strip.index != leg.source:
            raise BranchMismatch(f"{p.strip.value} is not the source strip of {leg.value}")
    states = _initial_states(cfg, constants, points)
    max_slit = int(4 * max([p.scaled_action * constants.total(p.strip.chamber) for p in points]
                           + [1.0])) + 100
    counts = np.zeros(len(points), dtype=np.int64)
    K.ensemble_to_strip(states, s.prm, s.C, s.K, s.A, s.B, max_slit, 1000, counts)
    out, branches, ok = [], [], np.zeros(len(points), dtype=bool)
    for n, st in enumerate(states):
        rec = s.record(st)
        if counts[n] < 0 or rec.crossed != leg.target:
            out.append(None)
            branches.append(None)
            continue
        strip = Strip.of(leg.target, rec.chamber)
        geom = constants.geometry(rec.chamber)
        try:
            pt = to_strip_coords(geom, constants, rec.t, rec.v, strip, offset=rec.offset)
        except NotInStrip:
            out.append(None)
            branches.append(None)
            continue
        out.append(pt)
        branches.append(RELATION_BRANCH.get(rec.relation))
        ok[n] = True
    return EmpiricalResult(out, branches, ok)


def empirical_strip_map(cfg: SlitConfig, point: StripPoint, leg: Leg,
                        constants: NFConstants | None = None) -> StripPoint:
    constants = constants or compute_constants(cfg)
    res = empirical_strip_maps(cfg, constants, [point], leg)
    if not res.ok[0]:
        raise NotInStrip("exact orbit did not reach the target strip cleanly")
    return res.points[0]


# ---------------------------------------------------------------- error scaling

@dataclass(frozen=True)
class ScalingRow:
    """Median errors in one action bin.

    The action error is the comparison metric: ``H`` only acts on the action,
    and the angle coordinate is shared by both modes.
    """

    action: float
    median_error_G: float
    median_error_GH: float
    median_coord_error: float
    samples: int
    excluded: int
    mismatched: int


@dataclass(frozen=True)
class ScalingReport:
    case: BranchCase
    rows: tuple
    slope_G: float
    slope_GH: float
    slope_coord: float

    @property
    def excluded(self) -> int:
        return sum(r.excluded for r in self.rows)

    @property
    def mismatched(self) -> int:
        return sum(r.mismatched for r in self.rows)

    def to_csv(self) -> str:
        lines = ["action,median_error_G,median_error_GH,median_coord_error,samples,excluded,mismatched"]
        for r in self.rows:
            lines.append(f"{r.action!r},{r.median_error_G!r},{r.median_error_GH!r},"
                         f"{r.median_coord_error!r},{r.samples},{r.excluded},{r.mismatched}")
        return "\n".join(lines) + "\n"


def _point_at(constants: NFConstants, case: BranchCase, level: float, X: float, c: float):
    ch = case.branch.start
    T = constants.total(ch)
    W = constants.window(ch, case.leg)
    k = round((T * level * W - X - c) / 2.0)
    return StripPoint(c, (X + c + 2.0 * k) / (T * W), Strip.of(case.leg.source, ch))


def sample_branch(constants: NFConstants, case: BranchCase, level, n: int,
                  rng: np.random.Generator):
    """Strip points near ``level`` (scalar or one value per point) whose
    fractional quantity fills the branch window away from the fuzz band."""
    ch = case.branch.start
    levels = np.broadcast_to(np.asarray(level, dtype=float), (n,))
    a, b = branch_window(constants, case)
    scale = _thresholds(constants.jump(case.leg.target), ch)[0]
    pts = []
    for lev in levels:
        band = fuzz_band(constants, ch, lev) / scale
        lo, hi = a + 2 * band, b - 2 * band
        if not hi > lo:
            continue
        pts.append(_point_at(constants, case, lev, rng.uniform(lo, hi), rng.uniform(0.0, 2.0)))
    return pts


def _slope(x, y) -> float:
    x, y = np.log(np.asarray(x)), np.log(np.asarray(y))
    return float(np.polyfit(x, y, 1)[0])


def error_scaling(cfg: SlitConfig, case: BranchCase, action_list, samples_per_decade: int = 500,
                  seed: int = 0, variant: Variant = ADJUDICATED,
                  constants: NFConstants | None = None) -> ScalingReport:
    """Median error of ``G`` and ``G + H`` against the exact strip map.

    Actions are drawn log-uniformly over the span of ``action_list`` and
    binned to the nearest listed level (in log scale); slopes are fitted to
    the per-bin medians against the bin's geometric-mean action.
    """
    levels = np.array(sorted(float(a) for a in action_list))
    if samples_per_decade < 1 or len(levels) < 2:
        raise InsufficientSamples("need a positive sample count and at least two action levels")
    decades = math.log10(levels[-1] / levels[0])
    if decades < 2.0 - 1e-9:
        raise InsufficientSamples("action levels must span at least two decades")
    constants = constants or compute_constants(cfg)
    rng = np.random.default_rng(seed)
    n = int(math.ceil(samples_per_decade * decades))
    draws = np.exp(rng.uniform(math.log(levels[0]), math.log(levels[-1]), n))
    pts = sample_branch(constants, case, draws, n, rng)
    if not pts:
        raise InsufficientSamples(f"branch {case.branch.value} window is empty")
    edges = np.sqrt(levels[1:] * levels[:-1])
    keep, excluded_bins = [], np.zeros(len(levels), dtype=int)
    for p in pts:
        b = int(np.searchsorted(edges, p.scaled_action))
        try:
            got = classify_branch(constants, p, case.leg, v_star=0.0)
        except NearBranchBoundary:
            excluded_bins[b] += 1
            continue
        if got.branch is case.branch:
            keep.append((b, p))
        else:
            excluded_bins[b] += 1
    res = empirical_strip_maps(cfg, constants, [p for _, p in keep], case.leg)
    per_bin = [[] for _ in levels]
    mism = np.zeros(len(levels), dtype=int)
    for (b, p), q, br in zip(keep, res.points, res.branches):
        if q is None or br is not case.branch:
            mism[b] += 1
            continue
        g = apply_nf(constants, case, p, NFMode.G_ONLY, variant, check=False)
        try:
            gh = apply_nf(constants, case, p, NFMode.G_PLUS_H, variant, check=False)
            egh = abs(gh.scaled_action - q.scaled_action)
        except ValueError:
            # a reading that sends the action negative has no finite error
            egh = math.inf
        per_bin[b].append((p.scaled_action, abs(g.scaled_action - q.scaled_action), egh,
                           abs(g.coord - q.coord)))
    rows = []
    for b, vals in enumerate(per_bin):
        if not vals:
            continue
        arr = np.array(vals)
        rows.append(ScalingRow(float(np.exp(np.mean(np.log(arr[:, 0])))),
                               float(np.median(arr[:, 1])), float(np.median(arr[:, 2])),
                               float(np.median(arr[:, 3])), len(vals),
                               int(excluded_bins[b]), int(mism[b])))
    if len(rows) < 2:
        raise InsufficientSamples("fewer than two populated action bins")
    x = [r.action for r in rows]
    with np.errstate(invalid="ignore"):
        sGH = _slope(x, [r.median_error_GH for r in rows]) if all(
            math.isfinite(r.median_error_GH) for r in rows) else math.nan
    return ScalingReport(case, tuple(rows), _slope(x, [r.median_error_G for r in rows]), sGH,
                         _slope(x, [r.median_coord_error for r in rows]))


def reachable_branches(constants: NFConstants) -> list[BranchCase]:
    """Branch/leg pairs whose window is non-empty at high energy."""
    out = []
    for leg in Leg:
        for br in Branch:
            a, b = branch_window(constants, BranchCase(br, leg))
            if b - a > 1e-9:
                out.append(BranchCase(br, leg))
    return out
