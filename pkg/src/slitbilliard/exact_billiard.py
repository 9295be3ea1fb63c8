"""Exact event-driven simulation of the reduced vertical motion.

The ball moves vertically between a fixed wall (ceiling ``y = 1`` above the
slit, floor ``y = 0`` below it) and the piecewise wall ``f(t)``.  Reflection at
the moving wall is ``v' = 2 f'(t_c) - v``, at a fixed wall ``v' = -v``.  When a
flight crosses a jump time the ball's chamber is decided by comparing its
height with the new wall, which produces the six collision relations:

    1  upper -> upper     2  lower -> lower
    3  upper -> ceiling -> floor -> lower
    4  upper -> lower directly
    5  lower -> floor -> ceiling -> upper
    6  lower -> upper directly
"""

from __future__ import annotations

import csv
import enum
import functools
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from . import _kernel as K
from .errors import Grazing, SingularHit, StencilCrossesSingularity
from .wall_motion import PERIOD, SlitConfig, TrigSeries, reduce_phase


class Chamber(enum.Enum):
    UPPER = "Upper"
    LOWER = "Lower"

    @property
    def sign(self) -> float:
        return K.UPPER if self is Chamber.UPPER else K.LOWER

    @classmethod
    def from_sign(cls, s: float) -> "Chamber":
        return cls.UPPER if s > 0 else cls.LOWER


class Kind(enum.Enum):
    SLIT = "Slit"
    CEILING = "Ceiling"
    FLOOR = "Floor"


class Status(enum.Enum):
    RUNNING = "Running"
    SINGULAR_HIT = "SingularHit"
    GRAZING = "Grazing"
    EVENT_LIMIT = "EventLimit"


_STATUS = {K.RUNNING: Status.RUNNING, K.SINGULAR_HIT: Status.SINGULAR_HIT,
           K.GRAZING: Status.GRAZING, K.EVENT_LIMIT: Status.EVENT_LIMIT}
_KIND = {K.EV_SLIT: Kind.SLIT, K.EV_CEILING: Kind.CEILING, K.EV_FLOOR: Kind.FLOOR}


@dataclass(frozen=True)
class Tolerances:
    grazing: float = 1e-9
    singular: float = 1e-12
    max_events: int = 10_000_000

    def as_dict(self) -> dict:
        return {"grazing": self.grazing, "singular": self.singular,
                "max_events": self.max_events}


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class CollisionRecord:
    """State right after a collision (or an arbitrary phase point).

    ``t`` is absolute time.  ``anchor`` and ``offset`` carry the same instant
    as ``phase(anchor) + offset`` with full relative precision in the offset;
    right after a jump ``anchor`` is exactly the jump time.  ``relation`` is
    the collision relation (1..6) linking this record to its predecessor,
    ``flight`` the exact elapsed time since it, and ``crossed`` the index of
    the last jump time crossed on the way (0 if none).
    """

    t: float
    v: float
    chamber: Chamber
    kind: Kind = Kind.SLIT
    y: float | None = None
    anchor: float | None = None
    offset: float = 0.0
    side: int | None = None
    relation: int | None = None
    flight: float | None = None
    crossed: int = 0
    fixed_bounces: int = 0

    @property
    def phase(self) -> float:
        a = reduce_phase(self.t) if self.anchor is None else self.anchor
        return float(reduce_phase(a + self.offset))


@dataclass
class Trajectory:
    initial: CollisionRecord
    records: list = field(default_factory=list)
    status: Status = Status.RUNNING

    def __len__(self):
        return len(self.records)

    def arrays(self):
        """``(t, v)`` arrays of the recorded slit collisions."""
        t = np.array([r.t for r in self.records])
        v = np.array([r.v for r in self.records])
        return t, v


# ---------------------------------------------------------------- solver glue

def _series_arrays(cfg: SlitConfig):
    nk = max(1, len(cfg.f_L.arrays[0]), len(cfg.f_R.arrays[0]))
    C = np.array([cfg.f_L.constant, cfg.f_R.constant])
    Ks = np.zeros((2, nk))
    A = np.zeros((2, nk))
    B = np.zeros((2, nk))
    for j, s in enumerate((cfg.f_L, cfg.f_R)):
        k, a, b = s.arrays
        Ks[j, :len(k)] = k
        A[j, :len(a)] = a
        B[j, :len(b)] = b
    return C, Ks, A, B


def min_gap(cfg: SlitConfig) -> float:
    """Smallest distance between the wall and the fixed walls (grid estimate)."""
    t = np.linspace(0.0, PERIOD, 4001)
    lo = min(cfg.f_L.value(t).min(), cfg.f_R.value(t).min())
    hi = max(cfg.f_L.value(t).max(), cfg.f_R.value(t).max())
    return float(min(lo, 1.0 - hi))


def _jumps(cfg: SlitConfig, t: float) -> bool:
    a = np.array(cfg.f_L.evaluate(t))
    b = np.array(cfg.f_R.evaluate(t))
    return bool(np.any(a != b))


class Solver:
    """Compiled-kernel handle for one configuration."""

    def __init__(self, cfg: SlitConfig, tol: Tolerances = DEFAULT_TOL):
        self.cfg = cfg
        self.tol = tol
        self.C, self.K, self.A, self.B = _series_arrays(cfg)
        self.prm = np.array([cfg.t1_star, cfg.t2_star, cfg.sup_fdot, min_gap(cfg),
                             tol.grazing, tol.singular,
                             float(_jumps(cfg, cfg.t1_star)), float(_jumps(cfg, cfg.t2_star))])
        self.series = (cfg.f_L, cfg.f_R)

    # state conversion
    def side_of(self, phase: float) -> int:
        t1, t2 = self.cfg.t1_star, self.cfg.t2_star
        return 1 if t1 <= phase < t2 else 0

    def state(self, rec: CollisionRecord) -> np.ndarray:
        st = np.zeros(K.STATE_SIZE)
        anchor = float(reduce_phase(rec.t)) if rec.anchor is None else rec.anchor
        st[K.S_TA] = rec.t - rec.offset
        st[K.S_PA] = anchor
        st[K.S_S] = rec.offset
        side = rec.side if rec.side is not None else self.side_of(rec.phase)
        st[K.S_SIDE] = side
        if rec.y is None:
            y = float(self.series[side].value(anchor + rec.offset))
        else:
            y = rec.y
        st[K.S_Y] = y
        st[K.S_V] = rec.v
        st[K.S_CH] = rec.chamber.sign
        st[K.S_CH0] = rec.chamber.sign
        return st

    @staticmethod
    def record(st: np.ndarray, kind: Kind = Kind.SLIT) -> CollisionRecord:
        ch0, ch = st[K.S_CH0], st[K.S_CH]
        nfix = int(st[K.S_NFIX])
        return CollisionRecord(
            t=float(st[K.S_TA] + st[K.S_S]), v=float(st[K.S_V] + st[K.S_VC]),
            chamber=Chamber.from_sign(ch), kind=kind, y=float(st[K.S_Y]),
            anchor=float(st[K.S_PA]), offset=float(st[K.S_S]),
            side=int(st[K.S_SIDE]), relation=classify_relation(ch0, ch, nfix),
            flight=float(st[K.S_DT]),
            crossed=int(st[K.S_LASTSING]) if st[K.S_NSING] > 0 else 0,
            fixed_bounces=nfix)

    def step_event(self, st):
        return K.next_event(st, self.prm, self.C, self.K, self.A, self.B)

    def step_slit(self, st):
        return K.slit_step(st, self.prm, self.C, self.K, self.A, self.B, self.tol.max_events)


def classify_relation(ch0: float, ch: float, nfix: int) -> int | None:
    if ch0 == ch:
        if nfix == 1:
            return 1 if ch > 0 else 2
        return None
    if ch0 > 0:
        return {2: 3, 0: 4}.get(nfix)
    return {2: 5, 0: 6}.get(nfix)


@functools.lru_cache(maxsize=64)
def solver_for(cfg: SlitConfig, tol: Tolerances = DEFAULT_TOL) -> Solver:
    return Solver(cfg, tol)


def _raise_for(st, where: str):
    status = st[K.S_STATUS]
    t = st[K.S_TA] + st[K.S_S]
    if status == K.SINGULAR_HIT:
        raise SingularHit(f"contact at a jump time near t={t!r} ({where})")
    if status == K.GRAZING:
        raise Grazing(f"tangential contact near t={t!r} ({where})")
    raise RuntimeError(f"event budget exhausted near t={t!r} ({where})")


# ---------------------------------------------------------------- operations

def next_collision(cfg: SlitConfig, rec: CollisionRecord,
                   tol: Tolerances = DEFAULT_TOL) -> CollisionRecord:
    """Earliest collision after ``rec`` with any wall."""
    s = solver_for(cfg, tol)
    st = s.state(rec)
    st[K.S_DT] = 0.0
    ev = s.step_event(st)
    if ev == K.EV_ERROR:
        _raise_for(st, "next_collision")
    return s.record(st, _KIND[ev])


def collision_map(cfg: SlitConfig, rec: CollisionRecord,
                  tol: Tolerances = DEFAULT_TOL) -> CollisionRecord:
    """The map F: next slit collision, fixed-wall bounces folded in."""
    s = solver_for(cfg, tol)
    st = s.state(rec)
    if s.step_slit(st) == K.EV_ERROR:
        _raise_for(st, "collision_map")
    return s.record(st)


def simulate(cfg: SlitConfig, rec: CollisionRecord, n_slit_collisions: int,
             tol: Tolerances = DEFAULT_TOL) -> Trajectory:
    """Record ``n`` slit collisions; stops early on a singular or grazing contact."""
    if n_slit_collisions < 0:
        raise ValueError("n_slit_collisions must be >= 0")
    s = solver_for(cfg, tol)
    st = s.state(rec)
    traj = Trajectory(rec)
    if n_slit_collisions == 0:
        return traj
    out = np.empty((n_slit_collisions, K.STATE_SIZE))
    n = K.run_slit(st, s.prm, s.C, s.K, s.A, s.B, n_slit_collisions, out, tol.max_events)
    traj.records = [s.record(out[i]) for i in range(n)]
    traj.status = _STATUS[st[K.S_STATUS]]
    return traj


def _itinerary(cfg: SlitConfig, traj: Trajectory):
    genuine = solver_for(cfg).prm[K.P_J1:K.P_J2 + 1]
    return [(r.relation, r.crossed if r.crossed and genuine[r.crossed - 1] else 0,
             r.chamber, r.fixed_bounces) for r in traj.records]


def monodromy(cfg: SlitConfig, rec: CollisionRecord, n: int, h: float = 1e-6,
              tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Central finite-difference Jacobian of ``F^n`` in ``(t, v)``."""
    base = simulate(cfg, rec, n, tol)
    if base.status is not Status.RUNNING or len(base) < n:
        _raise_status(base.status)
    ref = _itinerary(cfg, base)
    s = solver_for(cfg, tol)
    side = rec.side if rec.side is not None else s.side_of(rec.phase)
    hv = h * max(1.0, abs(rec.v))

    def image(dt, dv):
        off = rec.offset + dt
        anchor = float(reduce_phase(rec.t)) if rec.anchor is None else rec.anchor
        y = float(s.series[side].value(anchor + off))
        r = replace(rec, t=rec.t + dt, v=rec.v + dv, y=y, anchor=anchor, offset=off, side=side)
        tr = simulate(cfg, r, n, tol)
        if tr.status is not Status.RUNNING or _itinerary(cfg, tr) != ref:
            raise StencilCrossesSingularity("finite-difference stencil changed branch itinerary")
        last = tr.records[-1]
        return np.array([last.t, last.v])

    J = np.empty((2, 2))
    J[:, 0] = (image(h, 0.0) - image(-h, 0.0)) / (2 * h)
    J[:, 1] = (image(0.0, hv) - image(0.0, -hv)) / (2 * hv)
    return J


def _raise_status(status: Status):
    if status is Status.SINGULAR_HIT:
        raise SingularHit("orbit hits a jump time")
    if status is Status.GRAZING:
        raise Grazing("orbit has a tangential contact")
    raise RuntimeError(f"orbit stopped with status {status.value}")


# ---------------------------------------------------------------- checks

def wall_value(cfg: SlitConfig, rec: CollisionRecord):
    """``(f, f', f'')`` of the series active at ``rec``."""
    s = solver_for(cfg)
    side = rec.side if rec.side is not None else s.side_of(rec.phase)
    return s.series[side].evaluate(rec.phase)


def relation_residuals(cfg: SlitConfig, prev: CollisionRecord, nxt: CollisionRecord):
    """Residuals ``(time, velocity)`` of the relation linking two slit collisions."""
    if nxt.relation is None:
        raise ValueError("record pair is not linked by one of the six relations")
    f0 = wall_value(cfg, prev)[0]
    f1, fd1, _ = wall_value(cfg, nxt)
    v0, v1, dt = prev.v, nxt.v, nxt.flight
    rel = nxt.relation
    if rel == 1:
        rt = 2.0 - f0 - f1 - v0 * dt
        rv = v1 - v0 - 2.0 * fd1
    elif rel == 2:
        rt = f0 + f1 + v0 * dt
        rv = v1 - v0 - 2.0 * fd1
    else:
        rhs = f1 - f0 + {3: 2.0, 4: 0.0, 5: -2.0, 6: 0.0}[rel]
        rt = v0 * dt - rhs
        rv = v1 + v0 - 2.0 * fd1
    return rt, rv


# ---------------------------------------------------------------- reversal

def reversed_config(cfg: SlitConfig) -> SlitConfig:
    """Configuration seen in reversed time ``t' = 2 - 2 x0 - t``.

    Both jump times map onto the jump times of the reversed system, which has
    the same ``lambda`` and ``x0``.
    """
    def rev(s: TrigSeries) -> TrigSeries:
        g = s.shifted(-2.0 * cfg.x0)
        return TrigSeries(g.constant, g.cos_coeffs, tuple((k, -b) for k, b in g.sin_coeffs))

    return SlitConfig(rev(cfg.f_L), rev(cfg.f_R), cfg.lam, cfg.x0)


def reversed_time(cfg: SlitConfig, t: float) -> float:
    return PERIOD - 2.0 * cfg.x0 - t


# ---------------------------------------------------------------- output

def config_hash(cfg: SlitConfig) -> str:
    text = repr((cfg.f_L.constant, cfg.f_L.cos_coeffs, cfg.f_L.sin_coeffs,
                 cfg.f_R.constant, cfg.f_R.cos_coeffs, cfg.f_R.sin_coeffs, cfg.lam, cfg.x0))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def header_lines(cfg: SlitConfig, tolerances: dict) -> list[str]:
    tol = " ".join(f"{k}={v}" for k, v in sorted(tolerances.items()))
    return [f"# config_hash={config_hash(cfg)}", f"# version={__version__}",
            f"# tolerances {tol}"]


def write_trajectory_csv(path, cfg: SlitConfig, traj: Trajectory,
                         tol: Tolerances = DEFAULT_TOL):
    with open(path, "w", newline="") as fh:
        for line in header_lines(cfg, tol.as_dict()):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "v", "chamber", "kind", "y"])
        for r in traj.records:
            w.writerow([repr(r.t), repr(r.v), r.chamber.value, r.kind.value, repr(r.y)])
