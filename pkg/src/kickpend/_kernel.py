"""Event-located DOP853 integrator for the kicked pendulum.

Everything here is written in the numba-compatible subset of Python so the
same source serves both backends (see ``_accel``). The public wrappers live
in ``dynamics``; this module only deals in flat float arrays.

Parameter vector ``par``: ``[mu1, mu2, theta_star, k]``.
Option vector ``opt``: ``[rtol, atol, max_step, event_time_tol, grazing_p_tol, max_events]``.
"""

import math

import numpy as np

from ._accel import kernel
from ._tableau import A as _A_FULL
from ._tableau import B, D, E3, E5, N_STAGES
from ._tableau import C as _C_FULL

A = np.ascontiguousarray(_A_FULL[:N_STAGES, :N_STAGES])
A_EXTRA = np.ascontiguousarray(_A_FULL[N_STAGES + 1:])
C = np.ascontiguousarray(_C_FULL[:N_STAGES])

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
GL_X = np.ascontiguousarray(_GL_X)
GL_W = np.ascontiguousarray(_GL_W)

TWO_PI = 2.0 * math.pi

# termination codes
DONE = 0
STOPPED_EVENT = 1
STOPPED_ENERGY = 2
MAX_EVENTS = 3
STEP_FAILURE = 4

# guard handling
GUARD_INERT = 0
GUARD_KICK = 1
GUARD_STOP = 2

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0
_MAX_BREAKS = 32


@kernel
def wrap_angle(theta):
    w = theta - TWO_PI * math.floor((theta + math.pi) / TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


@kernel
def rhs(theta, p, par):
    mu1 = par[0]
    mu2 = par[1]
    return mu1 * p, -(mu2 * mu2 / mu1) * math.sin(theta) - par[3] * p


@kernel
def energy(theta, p, par):
    q = par[0] * p / par[1]
    s = math.sin(0.5 * theta)
    # 2 sin^2(theta/2) = 1 - cos(theta) without cancellation near the bottom
    return 0.5 * q * q + 2.0 * s * s


@kernel
def _rk_step(y, f, h, par, K, ynew):
    K[0, 0] = f[0]
    K[0, 1] = f[1]
    for s in range(1, N_STAGES):
        d0 = 0.0
        d1 = 0.0
        for j in range(s):
            a = A[s, j]
            if a != 0.0:
                d0 += a * K[j, 0]
                d1 += a * K[j, 1]
        K[s, 0], K[s, 1] = rhs(y[0] + h * d0, y[1] + h * d1, par)
    d0 = 0.0
    d1 = 0.0
    for j in range(N_STAGES):
        d0 += B[j] * K[j, 0]
        d1 += B[j] * K[j, 1]
    ynew[0] = y[0] + h * d0
    ynew[1] = y[1] + h * d1
    K[N_STAGES, 0], K[N_STAGES, 1] = rhs(ynew[0], ynew[1], par)


@kernel
def _error_norm(K, h, y, ynew, rtol, atol):
    e5sq = 0.0
    e3sq = 0.0
    for i in range(2):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        e5 = 0.0
        e3 = 0.0
        for j in range(N_STAGES + 1):
            e5 += E5[j] * K[j, i]
            e3 += E3[j] * K[j, i]
        e5 /= sc
        e3 /= sc
        e5sq += e5 * e5
        e3sq += e3 * e3
    if e5sq == 0.0 and e3sq == 0.0:
        return 0.0
    denom = e5sq + 0.01 * e3sq
    return abs(h) * e5sq / math.sqrt(denom * 2.0)


@kernel
def _dense_coeffs(y, ynew, h, par, K, F):
    for e in range(3):
        s = N_STAGES + 1 + e
        d0 = 0.0
        d1 = 0.0
        for j in range(s):
            a = A_EXTRA[e, j]
            if a != 0.0:
                d0 += a * K[j, 0]
                d1 += a * K[j, 1]
        K[s, 0], K[s, 1] = rhs(y[0] + h * d0, y[1] + h * d1, par)
    for i in range(2):
        dy = ynew[i] - y[i]
        F[0, i] = dy
        F[1, i] = h * K[0, i] - dy
        F[2, i] = 2.0 * dy - h * (K[N_STAGES, i] + K[0, i])
        for r in range(4):
            acc = 0.0
            for j in range(16):
                acc += D[r, j] * K[j, i]
            F[3 + r, i] = h * acc


@kernel
def _dense(F, y, t_old, h, t):
    x = (t - t_old) / h
    a0 = 0.0
    a1 = 0.0
    for i in range(7):
        a0 += F[6 - i, 0]
        a1 += F[6 - i, 1]
        if i % 2 == 0:
            a0 *= x
            a1 *= x
        else:
            a0 *= 1.0 - x
            a1 *= 1.0 - x
    return y[0] + a0, y[1] + a1


@kernel
def _dense_comp(F, y, t_old, h, t, comp):
    th, p = _dense(F, y, t_old, h, t)
    if comp == 0:
        return th
    return p


@kernel
def _refine(F, y, t_old, h, comp, target, ta, tb, ga, gb, tol):
    """Bracketed root of one dense-output component (Illinois + bisection)."""
    if gb == 0.0:
        return tb
    if ga == 0.0:
        return ta
    tol = max(tol, 4.0 * 2.220446049250313e-16 * max(abs(ta), abs(tb)))
    side = 0
    width = tb - ta
    for _ in range(200):
        if tb - ta <= tol:
            break
        tm = (ta * gb - tb * ga) / (gb - ga)
        if not (ta < tm < tb):
            tm = 0.5 * (ta + tb)
        gm = _dense_comp(F, y, t_old, h, tm, comp) - target
        if gm == 0.0:
            return tm
        if (gm > 0.0) == (ga > 0.0):
            ta = tm
            ga = gm
            if side == -1:
                gb *= 0.5
            side = -1
        else:
            tb = tm
            gb = gm
            if side == 1:
                ga *= 0.5
            side = 1
        new_width = tb - ta
        if new_width > 0.5 * width:
            # regula falsi stalled on one side; force a bisection
            tm = 0.5 * (ta + tb)
            gm = _dense_comp(F, y, t_old, h, tm, comp) - target
            if gm == 0.0:
                return tm
            if (gm > 0.0) == (ga > 0.0):
                ta = tm
                ga = gm
            else:
                tb = tm
                gb = gm
            side = 0
        width = tb - ta
    if abs(ga) < abs(gb):
        return ta
    return tb


@kernel
def _next_surface_up(theta, offset):
    """Smallest offset + 2*pi*n strictly above theta."""
    s = offset + TWO_PI * math.ceil((theta - offset) / TWO_PI)
    if s <= theta:
        s += TWO_PI
    return s


@kernel
def _next_surface_down(theta, offset):
    """Largest offset + 2*pi*n strictly below theta."""
    s = offset + TWO_PI * math.floor((theta - offset) / TWO_PI)
    if s >= theta:
        s -= TWO_PI
    return s


@kernel
def _scan_step(F, y, ynew, t, tn, h, tm, par, ev_tol, graze):
    """First kicking crossing inside [t, tn]; tm splits at a momentum root (or < t)."""
    ts = par[2]
    n_sub = 1
    if tm > t:
        n_sub = 2
    a = t
    tha = y[0]
    for isub in range(n_sub):
        if n_sub == 2 and isub == 0:
            b = tm
            thb = _dense_comp(F, y, t, h, tm, 0)
        else:
            b = tn
            thb = ynew[0]
        if thb > tha:
            s = _next_surface_up(tha, ts)
            if s <= thb:
                tc = _refine(F, y, t, h, 0, s, a, b, tha - s, thb - s, ev_tol)
                pc = _dense_comp(F, y, t, h, tc, 1)
                if pc > graze:
                    return True, tc, 1.0, s
        elif thb < tha:
            s = _next_surface_down(tha, -ts)
            if s >= thb:
                tc = _refine(F, y, t, h, 0, s, a, b, tha - s, thb - s, ev_tol)
                pc = _dense_comp(F, y, t, h, tc, 1)
                if pc < -graze:
                    return True, tc, -1.0, s
        a = b
        tha = thb
    return False, tn, 0.0, 0.0


@kernel
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    out = np.empty((2 * buf.shape[0] + 16, buf.shape[1]))
    out[: buf.shape[0]] = buf
    return out


@kernel
def _emit_panels(F, y, t_old, h, a, b, tm, split_wrap, cuts, tol, nodes, n_nodes):
    """Gauss-Legendre nodes on [a, b], split at momentum roots, wraps and cuts."""
    brk = np.empty(_MAX_BREAKS)
    seg = np.empty(3)
    nseg = 0
    seg[nseg] = a
    nseg += 1
    if a < tm < b:
        seg[nseg] = tm
        nseg += 1
    seg[nseg] = b
    nseg += 1
    nb = 0
    for i in range(nseg):
        brk[nb] = seg[i]
        nb += 1
    if split_wrap:
        # theta is monotone on each segment
        for i in range(nseg - 1):
            sa = seg[i]
            sb = seg[i + 1]
            th_a = _dense_comp(F, y, t_old, h, sa, 0)
            th_b = _dense_comp(F, y, t_old, h, sb, 0)
            if th_b > th_a:
                s = _next_surface_up(th_a, math.pi)
                while s < th_b and nb < _MAX_BREAKS - 8:
                    brk[nb] = _refine(F, y, t_old, h, 0, s, sa, sb, th_a - s, th_b - s, tol)
                    nb += 1
                    s += TWO_PI
            elif th_b < th_a:
                s = _next_surface_down(th_a, math.pi)
                while s > th_b and nb < _MAX_BREAKS - 8:
                    brk[nb] = _refine(F, y, t_old, h, 0, s, sa, sb, th_a - s, th_b - s, tol)
                    nb += 1
                    s -= TWO_PI
    for ic in range(cuts.shape[0]):
        c = cuts[ic]
        if a < c < b and nb < _MAX_BREAKS:
            brk[nb] = c
            nb += 1
    brk_sorted = np.sort(brk[:nb])
    for ip in range(nb - 1):
        pa = brk_sorted[ip]
        pb = brk_sorted[ip + 1]
        if pb <= pa:
            continue
        half = 0.5 * (pb - pa)
        mid = 0.5 * (pb + pa)
        for q in range(GL_X.shape[0]):
            tq = mid + half * GL_X[q]
            th, p = _dense(F, y, t_old, h, tq)
            nodes = _grow(nodes, n_nodes)
            nodes[n_nodes, 0] = tq
            nodes[n_nodes, 1] = wrap_angle(th)
            nodes[n_nodes, 2] = p
            nodes[n_nodes, 3] = half * GL_W[q]
            n_nodes += 1
    return nodes, n_nodes


@kernel
def _recenter(y, wind):
    while y[0] > math.pi:
        y[0] -= TWO_PI
        wind += 1.0
    while y[0] <= -math.pi:
        y[0] += TWO_PI
        wind -= 1.0
    return wind


@kernel
def _initial_step(y, f, par, rtol, atol, max_step, t_span):
    d0 = 0.0
    d1 = 0.0
    for i in range(2):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f[i] / sc) ** 2
    d0 = math.sqrt(d0 / 2.0)
    d1 = math.sqrt(d1 / 2.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_span)
    g0, g1 = rhs(y[0] + h0 * f[0], y[1] + h0 * f[1], par)
    d2 = 0.0
    for i in range(2):
        sc = atol + rtol * abs(y[i])
        fi = g0 if i == 0 else g1
        d2 += ((fi - f[i]) / sc) ** 2
    d2 = math.sqrt(d2 / 2.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, max_step, t_span)


@kernel
def integrate(y0, t0, t_end, par, opt, guard_mode, h_stop,
              record_samples, record_nodes, split_wrap, cuts, t_eval):
    """Integrate the hybrid pendulum from ``y0`` at ``t0`` up to ``t_end``.

    Returns ``(status, t, y_final, samples, events, nodes, teval_states, n_steps)``.
    ``samples`` rows are ``(t, theta_unwrapped, p)``; ``events`` rows are
    ``(t, side, theta_pre, p_pre, theta_post, p_post)`` with unwrapped angles;
    ``nodes`` rows are ``(t, theta_wrapped, p, weight)`` quadrature nodes.
    """
    rtol = opt[0]
    atol = opt[1]
    max_step = opt[2]
    ev_tol = opt[3]
    graze = opt[4]
    max_events = opt[5]

    K = np.zeros((16, 2))
    F = np.zeros((7, 2))
    y = np.empty(2)
    ynew = np.empty(2)
    f = np.empty(2)
    y[0] = y0[0]
    y[1] = y0[1]
    wind = _recenter(y, 0.0)

    samples = np.empty((256 if record_samples else 1, 3))
    events = np.empty((16, 6))
    nodes = np.empty((1024 if record_nodes else 1, 4))
    teval_out = np.full((t_eval.shape[0], 2), np.nan)
    n_samp = 0
    n_ev = 0
    n_nodes = 0
    n_steps = 0
    ie = 0

    t = t0
    while ie < t_eval.shape[0] and t_eval[ie] <= t0:
        if t_eval[ie] == t0:
            teval_out[ie, 0] = y[0] + TWO_PI * wind
            teval_out[ie, 1] = y[1]
        ie += 1
    if record_samples:
        samples[0, 0] = t
        samples[0, 1] = y[0] + TWO_PI * wind
        samples[0, 2] = y[1]
        n_samp = 1

    status = DONE
    if h_stop > -np.inf and energy(y[0], y[1], par) < h_stop:
        status = STOPPED_ENERGY
        t_end = t0

    f[0], f[1] = rhs(y[0], y[1], par)
    h = 0.0
    if t_end > t:
        h = _initial_step(y, f, par, rtol, atol, max_step, t_end - t)
    rejected = False

    while t < t_end:
        h = min(h, max_step, t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            status = STEP_FAILURE
            break
        _rk_step(y, f, h, par, K, ynew)
        err = _error_norm(K, h, y, ynew, rtol, atol)
        if not (err <= 1.0):
            if err != err:
                h *= _MIN_FACTOR
            else:
                h *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            rejected = True
            continue
        n_steps += 1
        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
        if rejected:
            factor = min(1.0, factor)
        rejected = False
        tn = t + h
        if t_end - tn < 1e-13 * max(1.0, abs(t_end)):
            tn = t_end
        _dense_coeffs(y, ynew, h, par, K, F)

        tm = -np.inf
        if y[1] * ynew[1] < 0.0:
            tm = _refine(F, y, t, h, 1, 0.0, t, tn, y[1], ynew[1], ev_tol)

        found = False
        t_ev = tn
        side = 0.0
        surf = 0.0
        if guard_mode != GUARD_INERT:
            found, t_ev, side, surf = _scan_step(F, y, ynew, t, tn, h, tm, par, ev_tol, graze)
        t_stop = t_ev if found else tn

        if record_nodes:
            nodes, n_nodes = _emit_panels(F, y, t, h, t, t_stop, tm, split_wrap, cuts,
                                          ev_tol, nodes, n_nodes)
        while ie < t_eval.shape[0] and t_eval[ie] <= t_stop:
            th_e, p_e = _dense(F, y, t, h, t_eval[ie])
            teval_out[ie, 0] = th_e + TWO_PI * wind
            teval_out[ie, 1] = p_e
            ie += 1

        if found:
            th_pre, p_pre = _dense(F, y, t, h, t_ev)
            events = _grow(events, n_ev)
            events[n_ev, 0] = t_ev
            events[n_ev, 1] = side
            events[n_ev, 2] = surf + TWO_PI * wind
            events[n_ev, 3] = p_pre
            n_ev += 1
            t = t_ev
            if guard_mode == GUARD_STOP:
                events[n_ev - 1, 4] = surf + TWO_PI * wind
                events[n_ev - 1, 5] = p_pre
                y[0] = th_pre
                y[1] = p_pre
                status = STOPPED_EVENT
                break
            y[0] = surf
            y[1] = p_pre - side
            events[n_ev - 1, 4] = surf + TWO_PI * wind
            events[n_ev - 1, 5] = y[1]
            wind = _recenter(y, wind)
            f[0], f[1] = rhs(y[0], y[1], par)
            if n_ev > max_events:
                status = MAX_EVENTS
                break
        else:
            y[0] = ynew[0]
            y[1] = ynew[1]
            f[0] = K[N_STAGES, 0]
            f[1] = K[N_STAGES, 1]
            t = tn
            wind = _recenter(y, wind)
        h = h * factor

        if record_samples:
            samples = _grow(samples, n_samp)
            samples[n_samp, 0] = t
            samples[n_samp, 1] = y[0] + TWO_PI * wind
            samples[n_samp, 2] = y[1]
            n_samp += 1
        if h_stop > -np.inf and energy(y[0], y[1], par) < h_stop:
            status = STOPPED_ENERGY
            break

    yf = np.empty(2)
    yf[0] = y[0] + TWO_PI * wind
    yf[1] = y[1]
    return (status, t, yf, samples[:n_samp].copy(), events[:n_ev].copy(),
            nodes[:n_nodes].copy(), teval_out, n_steps)


@kernel
def propagate_many(states, duration, par, opt):
    """End states after ``duration`` (kicks on) for each row of ``states``; NaN rows on failure."""
    n = states.shape[0]
    out = np.empty((n, 2))
    empty = np.empty(0)
    for i in range(n):
        res = integrate(states[i], 0.0, duration, par, opt, GUARD_KICK, -np.inf,
                        False, False, False, empty, empty)
        if res[0] == DONE:
            out[i, 0] = res[2][0]
            out[i, 1] = res[2][1]
        else:
            out[i, 0] = np.nan
            out[i, 1] = np.nan
    return out
