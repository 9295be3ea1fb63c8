"""Slit motions and the piecewise wall seen by the ball.

The left slit moves with ``f_L`` and the right one with ``f_R``; both are
finite trigonometric series of period 2.  Because the horizontal motion of
the ball has period 2 as well, the ball sees a single wall

    f(t) = f_L(t)  on (0, t1*) and (t2*, 2)
    f(t) = f_R(t)  on (t1*, t2*)

which jumps at the two crossing times t1* = lam - x0 and t2* = 2 - lam - x0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

PERIOD = 2.0
CONTAINMENT_GRID = 10_000


def reduce_phase(t):
    """Floor-based reduction of ``t`` into [0, 2)."""
    t = np.asarray(t, dtype=float)
    p = t - PERIOD * np.floor(t / PERIOD)
    # t just below a multiple of 2 can round up to exactly 2.0
    p = np.where(p >= PERIOD, p - PERIOD, p)
    return float(p) if p.ndim == 0 else p


def _merge(cos_coeffs, sin_coeffs):
    table: dict[int, list[float]] = {}
    for k, a in cos_coeffs:
        table.setdefault(int(k), [0.0, 0.0])[0] += float(a)
    for k, b in sin_coeffs:
        table.setdefault(int(k), [0.0, 0.0])[1] += float(b)
    ks = sorted(table)
    if not ks:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    return (np.array(ks, dtype=float),
            np.array([table[k][0] for k in ks]),
            np.array([table[k][1] for k in ks]))


@dataclass(frozen=True)
class TrigSeries:
    """``constant + sum a_k cos(k pi t) + sum b_k sin(k pi t)``.

    ``cos_coeffs`` and ``sin_coeffs`` are sequences of ``(k, amplitude)`` with
    positive integer ``k``.  Construction fails unless the series stays
    strictly inside (0, 1).
    """

    constant: float
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _b: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cos_c = tuple((int(k), float(a)) for k, a in self.cos_coeffs)
        sin_c = tuple((int(k), float(b)) for k, b in self.sin_coeffs)
        for k, _ in cos_c + sin_c:
            if k <= 0:
                raise ConfigError(f"wave number must be a positive integer, got {k}")
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "cos_coeffs", cos_c)
        object.__setattr__(self, "sin_coeffs", sin_c)
        k, a, b = _merge(cos_c, sin_c)
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)
        self._check_containment()

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Merged ``(k, cos amplitude, sin amplitude)`` arrays."""
        return self._k, self._a, self._b

    @property
    def sup_fdot(self) -> float:
        """Rigorous upper bound on sup |f'|."""
        w = np.pi * self._k
        return float(np.sum(w * np.hypot(self._a, self._b)))

    @property
    def sup_fddot(self) -> float:
        w = np.pi * self._k
        return float(np.sum(w * w * np.hypot(self._a, self._b)))

    def _check_containment(self):
        amp = float(np.sum(np.hypot(self._a, self._b)))
        if self.constant - amp > 0.0 and self.constant + amp < 1.0:
            return
        t = np.linspace(0.0, PERIOD, CONTAINMENT_GRID + 1)
        f = self.value(t)
        h = PERIOD / CONTAINMENT_GRID
        slack = h * h / 8.0 * self.sup_fddot
        if f.min() - slack <= 0.0 or f.max() + slack >= 1.0:
            raise ConfigError(
                f"wall leaves (0, 1): min {f.min():.6g}, max {f.max():.6g} on the check grid")

    def value(self, t):
        return self.evaluate(t)[0]

    def evaluate(self, t):
        """Return ``(f, f', f'')`` at ``t`` (scalar or array)."""
        p = reduce_phase(np.asarray(t, dtype=float))
        w = np.pi * self._k
        ang = np.multiply.outer(p, w)
        c, s = np.cos(ang), np.sin(ang)
        f = self.constant + c @ self._a + s @ self._b
        fd = (-s * self._a + c * self._b) @ w
        fdd = -((c * self._a + s * self._b) @ (w * w))
        if np.ndim(p) == 0:
            return float(f), float(fd), float(fdd)
        return f, fd, fdd

    def mirrored(self) -> "TrigSeries":
        """The series of ``1 - f``."""
        return TrigSeries(1.0 - self.constant,
                          tuple((k, -a) for k, a in self.cos_coeffs),
                          tuple((k, -b) for k, b in self.sin_coeffs))

    def shifted(self, dt: float) -> "TrigSeries":
        """The series of ``f(t + dt)``."""
        cos_c, sin_c = [], []
        for k, a, b in zip(*self.arrays):
            c, s = np.cos(np.pi * k * dt), np.sin(np.pi * k * dt)
            cos_c.append((int(k), a * c + b * s))
            sin_c.append((int(k), b * c - a * s))
        return TrigSeries(self.constant, tuple(cos_c), tuple(sin_c))

    @classmethod
    def constant_wall(cls, height: float) -> "TrigSeries":
        return cls(height)


def eval_series(series: TrigSeries, t):
    """Exact value, first and second derivative of ``series`` at ``t``."""
    return series.evaluate(t)


class Side(enum.Enum):
    LEFT_LIMIT = "left_limit"
    RIGHT_LIMIT = "right_limit"


@dataclass(frozen=True)
class SlitConfig:
    f_L: TrigSeries
    f_R: TrigSeries
    lam: float
    x0: float

    def __post_init__(self):
        lam, x0 = float(self.lam), float(self.x0)
        if not 0.0 < lam < 1.0:
            raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
        if not 0.0 <= x0 < lam:
            raise ConfigError(f"x0 must satisfy 0 <= x0 < lambda, got x0={x0}, lambda={lam}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "x0", x0)

    @property
    def t1_star(self) -> float:
        return float(reduce_phase(self.lam - self.x0))

    @property
    def t2_star(self) -> float:
        return float(reduce_phase(PERIOD - self.lam - self.x0))

    @property
    def singular_times(self) -> tuple[float, float]:
        return self.t1_star, self.t2_star

    @property
    def sup_fdot(self) -> float:
        return max(self.f_L.sup_fdot, self.f_R.sup_fdot)

    def series_at(self, phase: float, side: Side = Side.RIGHT_LIMIT) -> TrigSeries:
        """Series generating the wall at ``phase`` (one-sided at jump times)."""
        t1, t2 = self.t1_star, self.t2_star
        if side is Side.RIGHT_LIMIT:
            right = t1 <= phase < t2
        else:
            right = t1 < phase <= t2
        return self.f_R if right else self.f_L

    def mirrored(self) -> "SlitConfig":
        """Configuration with both slits reflected, ``f -> 1 - f``."""
        return SlitConfig(self.f_L.mirrored(), self.f_R.mirrored(), self.lam, self.x0)

    def swapped(self) -> "SlitConfig":
        return SlitConfig(self.f_R, self.f_L, self.lam, self.x0)

    def with_geometry(self, lam: float, x0: float) -> "SlitConfig":
        return SlitConfig(self.f_L, self.f_R, lam, x0)


def wall_at(cfg: SlitConfig, t: float, side: Side | str = Side.RIGHT_LIMIT):
    """One-sided ``(f, f', f'')`` of the piecewise wall at time ``t``."""
    side = Side(side)
    p = float(reduce_phase(t))
    return cfg.series_at(p, side).evaluate(p)


@dataclass(frozen=True)
class JumpData:
    """One-sided wall data at the singular time ``t_i*``."""

    index: int
    t_star: float
    f_minus: float
    f_plus: float
    fdot_minus: float
    fdot_plus: float
    fddot_minus: float
    fddot_plus: float

    @property
    def l_minus(self):
        return 1.0 - self.f_minus

    @property
    def l_plus(self):
        return 1.0 - self.f_plus

    @property
    def m_minus(self):
        return -self.f_minus

    @property
    def m_plus(self):
        return -self.f_plus

    @property
    def a(self):
        return self.fdot_minus * (1.0 - self.f_plus) - self.fdot_plus * (1.0 - self.f_minus)

    @property
    def a_prime(self):
        return self.fdot_plus * self.f_minus - self.fdot_minus * self.f_plus

    @property
    def jump(self):
        """``f(t_i*+) - f(t_i*-)``."""
        return self.f_plus - self.f_minus


def jump_data(cfg: SlitConfig, i: int) -> JumpData:
    if i not in (1, 2):
        raise ValueError("singular index must be 1 or 2")
    t = cfg.t1_star if i == 1 else cfg.t2_star
    fm, fdm, fddm = wall_at(cfg, t, Side.LEFT_LIMIT)
    fp, fdp, fddp = wall_at(cfg, t, Side.RIGHT_LIMIT)
    return JumpData(i, t, fm, fp, fdm, fdp, fddm, fddp)


def parse_coeffs(text: str) -> tuple:
    """Parse ``"1:0.3, 2:-0.05"`` into ``((1, 0.3), (2, -0.05))``."""
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            k, a = item.split(":")
            out.append((int(k), float(a)))
        except ValueError as exc:
            raise ConfigError(f"bad coefficient entry {item!r}; expected k:amplitude") from exc
    return tuple(out)


def format_coeffs(coeffs: Sequence) -> str:
    return ", ".join(f"{k}:{a!r}" for k, a in coeffs)


def example_config(lam: float = 0.6, x0: float = 0.1) -> SlitConfig:
    """``f_L = 0.3 cos(pi t) + 0.5``, ``f_R = 0.3 sin(pi t) + 0.5``."""
    return SlitConfig(TrigSeries(0.5, ((1, 0.3),)), TrigSeries(0.5, (), ((1, 0.3),)), lam, x0)


def elliptic_config(a: float = 0.01) -> SlitConfig:
    """Identical slits ``a cos(4 pi t) + 0.5`` with lam = 0.5, x0 = 0."""
    s = TrigSeries(0.5, ((4, a),))
    return SlitConfig(s, s, 0.5, 0.0)
