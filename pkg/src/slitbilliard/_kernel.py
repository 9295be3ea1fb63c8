"""Compiled event loop for the reduced vertical dynamics.

State vectors are float64 arrays indexed by the ``S_*`` constants below.
Absolute time is kept as ``anchor + offset``: the anchor carries an exactly
known phase (a jump time whenever the ball has just crossed one), and the
offset accumulates flight times with compensated summation.  Keeping the
offset small is what lets the solver resolve flights of length 1e-30 next
to a jump time.
"""

import math

import numpy as np
from numba import njit

# state layout
# S_VC carries the rounding error of S_V (velocity = S_V + S_VC)
(S_TA, S_PA, S_S, S_COMP, S_Y, S_V, S_CH, S_SIDE, S_STATUS,
 S_NSING, S_NFIX, S_LASTSING, S_CH0, S_DT, S_VC) = range(15)
STATE_SIZE = 15

# parameter layout
# P_J1, P_J2 flag whether the wall genuinely jumps at t1*, t2*
P_T1, P_T2, P_SUPFD, P_HMIN, P_GRAZE, P_SING, P_J1, P_J2 = range(8)

UPPER, LOWER = 1.0, -1.0
LEFT, RIGHT = 0.0, 1.0
RUNNING, SINGULAR_HIT, GRAZING, EVENT_LIMIT = 0.0, 1.0, 2.0, 3.0
EV_SLIT, EV_CEILING, EV_FLOOR, EV_ERROR = 0, 1, 2, -1

EPS = 2.220446049250313e-16
REANCHOR = 0.25


@njit(cache=True, nogil=True)
def wall(side, p, C, K, A, B):
    """Height, velocity and acceleration of series ``side`` at phase ``p``."""
    j = int(side)
    f = C[j]
    fd = 0.0
    fdd = 0.0
    for i in range(K.shape[1]):
        w = math.pi * K[j, i]
        if w == 0.0:
            continue
        ang = w * p
        c = math.cos(ang)
        s = math.sin(ang)
        a = A[j, i]
        b = B[j, i]
        f += a * c + b * s
        fd += w * (b * c - a * s)
        fdd -= w * w * (a * c + b * s)
    return f, fd, fdd


@njit(cache=True, nogil=True)
def _gap(tau, y, v, ch, side, base, C, K, A, B):
    f, fd, _ = wall(side, base + tau, C, K, A, B)
    return ch * (y + v * tau - f), ch * (v - fd)


@njit(cache=True, nogil=True)
def _refine(lo, hi, glo, ghi, y, v, ch, side, base, C, K, A, B):
    """Safeguarded Newton on a bracket with gap(lo) >= 0 > or = gap(hi)."""
    if glo > ghi:
        x = lo + glo * (hi - lo) / (glo - ghi)
    else:
        x = hi
    if not (lo < x <= hi):
        x = 0.5 * (lo + hi)
    for _ in range(200):
        g, dg = _gap(x, y, v, ch, side, base, C, K, A, B)
        if g > 0.0:
            lo = x
        else:
            hi = x
            if g == 0.0:
                return x
        if dg != 0.0:
            xn = x - g / dg
        else:
            xn = 0.5 * (lo + hi)
        if not (lo < xn <= hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 4.0 * EPS * abs(xn) or hi - lo <= 4.0 * EPS * hi:
            return xn
        x = xn
    return x


@njit(cache=True, nogil=True)
def _advance_offset(st, dt):
    # Kahan summation of the offset
    yk = dt - st[S_COMP]
    tk = st[S_S] + yk
    st[S_COMP] = (tk - st[S_S]) - yk
    st[S_S] = tk


@njit(cache=True, nogil=True)
def _reanchor(st):
    if abs(st[S_S]) > REANCHOR:
        st[S_TA] += st[S_S]
        pa = st[S_PA] + st[S_S]
        pa -= 2.0 * math.floor(pa / 2.0)
        if pa >= 2.0:
            pa -= 2.0
        st[S_PA] = pa
        st[S_S] = 0.0
        st[S_COMP] = 0.0


@njit(cache=True, nogil=True)
def next_event(st, prm, C, K, A, B):
    """Advance ``st`` to its next collision (slit, ceiling or floor).

    Returns the event code; on failure ``st[S_STATUS]`` is set and
    ``EV_ERROR`` is returned with the state left at the offending contact.
    """
    t1 = prm[P_T1]
    t2 = prm[P_T2]
    supfd = prm[P_SUPFD]
    hmin = prm[P_HMIN]
    graze = prm[P_GRAZE]
    just_crossed = False
    for _guard in range(1000000):
        y = st[S_Y]
        v = st[S_V]
        ch = st[S_CH]
        side = st[S_SIDE]
        s = st[S_S]
        cnext = t1 if side == LEFT else t2
        d = cnext - st[S_PA]
        while d - s <= 0.0:
            d += 2.0
        while d - s > 2.0:
            d -= 2.0
        dsing = d - s
        if ch == UPPER and v > 0.0:
            tw = (1.0 - y) / v
        elif ch == LOWER and v < 0.0:
            tw = -y / v
        else:
            tw = np.inf
        T = min(tw, dsing)
        # flight-time scale for the relative singular tolerance
        tscale = hmin / (abs(v) + supfd)
        sing_tol = min(prm[P_SING], 1e-8 * tscale)
        base = st[S_PA] + s

        found = False
        lo = 0.0
        hi = T
        glo = 0.0
        ghi = 0.0
        if abs(v) > supfd:
            if ch * v < 0.0:
                ghi, _ = _gap(T, y, v, ch, side, base, C, K, A, B)
                if ghi <= 0.0:
                    glo, _ = _gap(0.0, y, v, ch, side, base, C, K, A, B)
                    if glo < 0.0:
                        glo = 0.0
                    found = True
        else:
            h = min(1e-3, hmin / (4.0 * (abs(v) + supfd)))
            glo, _ = _gap(0.0, y, v, ch, side, base, C, K, A, B)
            if glo < 0.0:
                glo = 0.0
            tprev = 0.0
            gprev = glo
            tk = 0.0
            while tk < T:
                tk = min(tk + h, T)
                gk, _ = _gap(tk, y, v, ch, side, base, C, K, A, B)
                if gk <= 0.0:
                    lo = tprev
                    hi = tk
                    glo = gprev
                    ghi = gk
                    found = True
                    break
                tprev = tk
                gprev = gk

        if found:
            tc = _refine(lo, hi, glo, ghi, y, v, ch, side, base, C, K, A, B)
            jumps = prm[P_J1] if cnext == t1 else prm[P_J2]
            jumped = prm[P_J1] if cnext == t2 else prm[P_J2]
            if ((T == dsing and dsing - tc < sing_tol and jumps != 0.0)
                    or (just_crossed and tc < sing_tol and jumped != 0.0)):
                _advance_offset(st, tc)
                st[S_Y] = y + v * tc
                st[S_STATUS] = SINGULAR_HIT
                return EV_ERROR
            f, fd, _ = wall(side, base + tc, C, K, A, B)
            _advance_offset(st, tc)
            st[S_DT] += tc
            st[S_Y] = y + v * tc
            if abs(v - fd) < graze:
                st[S_STATUS] = GRAZING
                return EV_ERROR
            # compensated reflection, so roundoff does not random-walk the speed
            a = 2.0 * fd
            hi = a - v
            bb = hi - a
            lo = (a - (hi - bb)) + (-v - bb) - st[S_VC]
            vn = hi + lo
            st[S_VC] = lo - (vn - hi)
            st[S_V] = vn
            _reanchor(st)
            return EV_SLIT

        if tw < dsing:
            _advance_offset(st, tw)
            st[S_DT] += tw
            st[S_V] = -v
            st[S_VC] = -st[S_VC]
            st[S_NFIX] += 1.0
            _reanchor(st)
            if ch == UPPER:
                st[S_Y] = 1.0
                return EV_CEILING
            st[S_Y] = 0.0
            return EV_FLOOR

        # crossing of a jump time: re-anchor exactly on it
        st[S_TA] = st[S_TA] + d
        st[S_DT] += dsing
        st[S_PA] = cnext
        st[S_S] = 0.0
        st[S_COMP] = 0.0
        ynew = y + v * dsing
        st[S_Y] = ynew
        st[S_SIDE] = 1.0 - side
        fnew, _, _ = wall(1.0 - side, cnext, C, K, A, B)
        if ynew > fnew:
            st[S_CH] = UPPER
        elif ynew < fnew:
            st[S_CH] = LOWER
        else:
            st[S_STATUS] = SINGULAR_HIT
            return EV_ERROR
        st[S_NSING] += 1.0
        st[S_LASTSING] = 1.0 if cnext == t1 else 2.0
        just_crossed = True
    st[S_STATUS] = EVENT_LIMIT
    return EV_ERROR


@njit(cache=True, nogil=True)
def slit_step(st, prm, C, K, A, B, max_events):
    """Advance to the next slit collision, folding fixed-wall bounces in."""
    st[S_NSING] = 0.0
    st[S_NFIX] = 0.0
    st[S_DT] = 0.0
    st[S_CH0] = st[S_CH]
    for _ in range(max_events):
        ev = next_event(st, prm, C, K, A, B)
        if ev == EV_SLIT:
            return ev
        if ev == EV_ERROR:
            return ev
    st[S_STATUS] = EVENT_LIMIT
    return EV_ERROR


@njit(cache=True, nogil=True)
def run_slit(st, prm, C, K, A, B, n, out, max_events):
    """Record ``n`` slit collisions into ``out`` (rows: state snapshots).

    Returns the number of rows written.
    """
    for i in range(n):
        ev = slit_step(st, prm, C, K, A, B, max_events)
        if ev == EV_ERROR:
            return i
        for j in range(STATE_SIZE):
            out[i, j] = st[j]
    return n


@njit(cache=True, nogil=True)
def run_to_strip(st, prm, C, K, A, B, max_slit, max_events):
    """Advance until the first slit collision after crossing a jump time.

    Returns the number of slit collisions performed, or -1 on failure.
    """
    for i in range(max_slit):
        ev = slit_step(st, prm, C, K, A, B, max_events)
        if ev == EV_ERROR:
            return -1
        if st[S_NSING] > 0.0:
            return i + 1
    st[S_STATUS] = EVENT_LIMIT
    return -1


@njit(cache=True, nogil=True)
def ensemble_to_strip(states, prm, C, K, A, B, max_slit, max_events, counts):
    for i in range(states.shape[0]):
        if states[i, S_STATUS] != RUNNING:
            counts[i] = -1
            continue
        counts[i] = run_to_strip(states[i], prm, C, K, A, B, max_slit, max_events)


@njit(cache=True, nogil=True)
def ensemble_slit(states, prm, C, K, A, B, n, max_events, counts):
    """Advance every running state by ``n`` slit collisions."""
    for i in range(states.shape[0]):
        if states[i, S_STATUS] != RUNNING:
            counts[i] = 0
            continue
        c = 0
        for _ in range(n):
            ev = slit_step(states[i], prm, C, K, A, B, max_events)
            if ev == EV_ERROR:
                break
            c += 1
        counts[i] = c
