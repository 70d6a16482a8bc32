"""Travel times, periods and action-angle coordinates on the band of limit cycles.

A cycle with label ``I = p1`` consists of an upper arc (``p > 0``, from
``-theta*`` to ``+theta*`` with guard momentum ``p1``) and a lower arc with
guard momentum ``1 - p1``. The phase runs from 0 at ``(-theta*, p1)`` to 2*pi
after one full period.

Two quadrature routes exist. :func:`gamma_integral` is adaptive (scipy
``quad``) and is the reference. :func:`gamma_array` is a fixed Gauss-Legendre
rule after a sinh substitution that resolves the near-singular endpoints; it is
vectorized and used for bulk work (inverse maps, Fourier tables).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dynamics import Params, State, energy, wrap
from .errors import DomainError, OutsideA2, QuadratureFailure
from .observables import get_observable
from .poincare import Region, limit_cycle_label, region_of

TWO_PI = 2.0 * math.pi
REL_TOL = 1e-10
_GL_N = 64
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)


def _radicand(c2, a, b):
    """c^2 + 2(cos xi - cos theta*) written as c^2 + 4 sin(a/2) sin(b/2).

    ``a = xi + theta*`` and ``b = theta* - xi`` are passed exactly, which
    avoids the cancellation of ``cos xi - cos theta*`` near the guards.
    """
    return c2 + 4.0 * np.sin(0.5 * a) * np.sin(0.5 * b)


def _check_args(theta, p1, params):
    ts = params.theta_star
    if not 0.0 < p1 <= 1.0:
        raise DomainError("p1 must lie in (0, 1]")
    if not -ts - 1e-12 <= theta <= ts + 1e-12:
        raise DomainError("theta must lie in [-theta*, theta*]")
    return min(max(theta, -ts), ts)


def gamma_integral(theta: float, p1: float, params: Params) -> float:
    """Flow time from ``(-theta*, p1)`` to angle ``theta`` along the upper arc.

    Both endpoint neighbourhoods use a square-root substitution, which keeps
    the integrand smooth even when ``p1`` is tiny.
    """
    theta = _check_args(float(theta), float(p1), params)
    ts = params.theta_star
    c2 = (params.ratio * p1) ** 2
    total = 0.0
    err = 0.0
    # left piece: xi = -theta* + u^2 on [-theta*, min(theta, 0)]
    u_hi = math.sqrt(min(theta, 0.0) + ts)
    if u_hi > 0:
        f = lambda u: 2.0 * u / math.sqrt(_radicand(c2, u * u, 2.0 * ts - u * u))
        v, e = integrate.quad(f, 0.0, u_hi, epsabs=0.0, epsrel=1e-13, limit=200)
        total += v
        err += e
    # right piece: xi = theta* - v^2 on [0, theta]
    if theta > 0:
        f = lambda v: 2.0 * v / math.sqrt(_radicand(c2, 2.0 * ts - v * v, v * v))
        v, e = integrate.quad(f, math.sqrt(ts - theta), math.sqrt(ts), epsabs=0.0, epsrel=1e-13, limit=200)
        total += v
        err += e
    if err > REL_TOL * abs(total) and err > 1e-300:
        raise QuadratureFailure(f"quadrature error estimate {err:.3g} exceeds target")
    return total / params.mu2


def _sinh_piece(c2, lo, hi, ts, left: bool):
    """Fixed-rule integral of 2u/sqrt(R) over u in [lo, hi] (vectorized).

    Near u = 0, R ~ c^2 + 2 sin(theta*) u^2; the substitution
    u = beta*sinh(w) with beta = c / sqrt(2 sin theta*) makes the integrand
    smooth on the scale of c.
    """
    s = max(math.sin(ts), 0.05)
    beta = np.sqrt(c2 / (2.0 * s))
    w_lo = np.arcsinh(lo / beta)
    w_hi = np.arcsinh(hi / beta)
    half = 0.5 * (w_hi - w_lo)
    mid = 0.5 * (w_hi + w_lo)
    w = mid[..., None] + half[..., None] * _GL_X
    b = beta[..., None]
    u = b * np.sinh(w)
    du = b * np.cosh(w)
    u2 = u * u
    if left:
        R = _radicand(c2[..., None], u2, 2.0 * ts - u2)
    else:
        R = _radicand(c2[..., None], 2.0 * ts - u2, u2)
    return half * np.sum(_GL_W * 2.0 * u * du / np.sqrt(R), axis=-1)


def gamma_array(theta, p1, params: Params) -> np.ndarray:
    """Vectorized travel time (fixed 64-point rule, relative error ~1e-13)."""
    theta, p1 = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(p1, dtype=float))
    ts = params.theta_star
    if np.any(p1 <= 0) or np.any(p1 > 1):
        raise DomainError("p1 must lie in (0, 1]")
    theta = np.clip(theta, -ts, ts)
    c2 = (params.ratio * p1) ** 2
    zero = np.zeros_like(theta)
    left = _sinh_piece(c2, zero, np.sqrt(np.minimum(theta, 0.0) + ts), ts, left=True)
    right = _sinh_piece(c2, np.sqrt(ts - np.maximum(theta, 0.0)), np.full_like(theta, math.sqrt(ts)), ts, left=False)
    return (left + right) / params.mu2


def period(p1: float, params: Params) -> float:
    if not 0.0 < p1 < 1.0:
        raise DomainError("p1 must lie in (0, 1)")
    ts = params.theta_star
    return gamma_integral(ts, p1, params) + gamma_integral(ts, 1.0 - p1, params)


def period_array(p1, params: Params) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    ts = params.theta_star
    return gamma_array(ts, p1, params) + gamma_array(ts, 1.0 - p1, params)


def frequency(p1: float, params: Params) -> float:
    return TWO_PI / period(p1, params)


@dataclass(frozen=True)
class ActionAngle:
    I: float
    psi: float

    def __post_init__(self):
        if not 0.0 < self.I < 1.0:
            raise DomainError("action I must lie in (0, 1)")
        if not 0.0 <= self.psi < TWO_PI:
            raise DomainError("phase psi must lie in [0, 2pi)")


def _mod2pi(x):
    y = np.mod(x, TWO_PI)
    return np.where(y >= TWO_PI, 0.0, y)


def phase(state: State, params: Params) -> float:
    """Phase in [0, 2pi) of a state of the band (adaptive quadrature)."""
    if region_of(state, params) is not Region.A2:
        raise OutsideA2("state is not in the band of limit cycles")
    p1 = limit_cycle_label(state, params)
    if not 0.0 < p1 < 1.0:
        raise DomainError("state lies on the boundary of the band")
    th = wrap(state.theta)
    ts = params.theta_star
    if state.p > 0:
        tau = gamma_integral(th, p1, params)
    else:
        tau = gamma_integral(ts, p1, params) + gamma_integral(-th, 1.0 - p1, params)
    return float(_mod2pi(TWO_PI * tau / period(p1, params)))


def label_array(theta, p, params: Params) -> np.ndarray:
    H = energy(theta, p, params)
    r = np.sqrt(np.maximum(0.0, 2.0 * (H - params.h_minus))) / params.ratio
    return np.where(np.asarray(p) >= 0, r, 1.0 - r)


def to_action_angle_array(theta, p, params: Params):
    """Vectorized (I, psi) for states assumed to lie in the band interior."""
    th = wrap(np.asarray(theta, dtype=float))
    p = np.asarray(p, dtype=float)
    ts = params.theta_star
    # rounding can push labels of boundary states just outside (0, 1)
    I = np.clip(label_array(th, p, params), 1e-12, 1.0 - 1e-12)
    up = p > 0
    g_up = gamma_array(np.where(up, th, ts), I, params)
    g_ts = gamma_array(ts, I, params)
    g_lo = gamma_array(np.where(up, -ts, -th), 1.0 - I, params)
    P = g_ts + gamma_array(ts, 1.0 - I, params)
    tau = np.where(up, g_up, g_ts + g_lo)
    return I, _mod2pi(TWO_PI * tau / P)


def to_action_angle(state: State, params: Params) -> ActionAngle:
    I = limit_cycle_label(state, params)
    return ActionAngle(I, phase(state, params))


def _invert_gamma(tau, p1, params: Params, iters: int = 60):
    """Solve gamma_array(theta, p1) = tau for theta by safeguarded Newton.

    The bracket [-theta*, theta*] shrinks every iteration (Gamma is strictly
    increasing), so a rejected Newton step falls back to bisection.
    """
    ts = params.theta_star
    tau, p1 = np.broadcast_arrays(np.asarray(tau, dtype=float), np.asarray(p1, dtype=float))
    shape = tau.shape
    tau, p1 = tau.ravel(), p1.ravel()
    lo = np.full(tau.shape, -ts)
    hi = np.full(tau.shape, ts)
    # start from the linear interpolant in time across the whole arc
    th = -ts + 2.0 * ts * np.clip(tau / gamma_array(ts, p1, params), 0.0, 1.0)
    c2 = (params.ratio * p1) ** 2
    act = np.arange(tau.size)
    for _ in range(iters):
        t_a, lo_a, hi_a = th[act], lo[act], hi[act]
        f = gamma_array(t_a, p1[act], params) - tau[act]
        lo_a = np.where(f < 0, t_a, lo_a)
        hi_a = np.where(f > 0, t_a, hi_a)
        slope = 1.0 / (params.mu2 * np.sqrt(_radicand(c2[act], t_a + ts, ts - t_a)))
        step = t_a - f / slope
        bad = ~((step >= lo_a) & (step <= hi_a))
        new = np.where(bad, 0.5 * (lo_a + hi_a), step)
        th[act], lo[act], hi[act] = new, lo_a, hi_a
        act = act[np.abs(new - t_a) > 4e-16 * (1.0 + np.abs(t_a))]
        if act.size == 0:
            break
    return th.reshape(shape)


def from_action_angle_array(I, psi, params: Params):
    """Vectorized inverse map: (I, psi) -> (theta, p)."""
    I, psi = np.broadcast_arrays(np.asarray(I, dtype=float), np.asarray(psi, dtype=float))
    ts = params.theta_star
    g_up = gamma_array(ts, I, params)
    P = g_up + gamma_array(ts, 1.0 - I, params)
    tau = _mod2pi(psi) * P / TWO_PI
    up = tau < g_up
    q = np.where(up, I, 1.0 - I)
    th = _invert_gamma(np.where(up, tau, tau - g_up), q, params)
    th = np.where(up, th, -th)
    # |p| from energy conservation along the arc
    c2 = (params.ratio * q) ** 2
    speed = np.sqrt(np.maximum(0.0, _radicand(c2, th + ts, ts - th))) / params.ratio
    return th, np.where(up, speed, -speed)


def from_action_angle(aa: ActionAngle, params: Params) -> State:
    th, p = from_action_angle_array(aa.I, aa.psi, params)
    return State(float(th), float(p))


def flow_action_angle(aa: ActionAngle, t: float, params: Params) -> ActionAngle:
    return ActionAngle(aa.I, float(_mod2pi(frequency(aa.I, params) * t + aa.psi)))


@dataclass(frozen=True)
class FourierTable:
    """Fourier coefficients g_j (j = -J..J) of an observable on sampled cycles."""

    I_values: np.ndarray
    coefficients: np.ndarray
    Omega: np.ndarray
    P: np.ndarray
    observable: str = ""

    @property
    def J(self) -> int:
        return (self.coefficients.shape[1] - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.J, self.J + 1)

    def row(self, I: float, tol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(self.I_values - I)))
        if abs(self.I_values[i] - I) > tol:
            raise DomainError(f"action {I} is not in the table")
        return i

    def to_json(self) -> str:
        rows = []
        for i, I in enumerate(self.I_values):
            g = self.coefficients[i]
            rows.append({"I": float(I), "Omega": float(self.Omega[i]), "P": float(self.P[i]),
                         "re_g": [float(x) for x in g.real], "im_g": [float(x) for x in g.imag]})
        return json.dumps({"observable": self.observable, "J": self.J, "cycles": rows}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FourierTable":
        d = json.loads(text)
        rows = d["cycles"]
        coeffs = np.array([np.array(r["re_g"]) + 1j * np.array(r["im_g"]) for r in rows])
        return cls(np.array([r["I"] for r in rows]), coeffs, np.array([r["Omega"] for r in rows]),
                   np.array([r["P"] for r in rows]), d.get("observable", ""))


def fourier_coefficients(observable, I, J: int = 256, M: int = 4096, params: Params = Params()) -> FourierTable:
    """Sample ``observable`` at M equispaced phases of each cycle I and FFT.

    ``observable`` is an :class:`~kickpend.observables.Observable`, a
    registered name, or a vectorized callable ``f(theta, p)``.
    """
    if M < 2 * J + 2:
        raise DomainError("need M >= 2J + 2")
    if callable(observable) and not hasattr(observable, "fn"):
        fn, name = (lambda th, p: observable(th, p)), getattr(observable, "__name__", "custom")
    else:
        obs = get_observable(observable)
        fn, name = (lambda th, p: obs(th, p, params)), obs.name
    I_values = np.atleast_1d(np.asarray(I, dtype=float))
    psi = TWO_PI * np.arange(M) / M
    coeffs = np.empty((I_values.size, 2 * J + 1), dtype=complex)
    for n, I_n in enumerate(I_values):
        th, p = from_action_angle_array(np.full(M, I_n), psi, params)
        g = np.broadcast_to(np.asarray(fn(th, p)), (M,))
        spec = np.fft.fft(g) / M
        coeffs[n] = np.concatenate([spec[M - J:], spec[: J + 1]])
    P = period_array(I_values, params)
    return FourierTable(I_values, coeffs, TWO_PI / P, P, name)


def spectral_evolve(table: FourierTable, I: float, psi: float, t) -> np.ndarray | complex:
    """Sum_j g_j exp(i j (Omega t + psi)), for scalar or array ``t``."""
    i = table.row(I)
    j = table.modes
    arg = np.multiply.outer(table.Omega[i] * np.asarray(t, dtype=float) + psi, j)
    out = np.exp(1j * arg) @ table.coefficients[i]
    return complex(out) if np.ndim(out) == 0 else out


def phase_average(observable, I: float, params: Params, M: int = 4096) -> float:
    """Mean of a real observable over one cycle in phase (trapezoid = spectral for periodic)."""
    obs = get_observable(observable)
    psi = TWO_PI * np.arange(M) / M
    th, p = from_action_angle_array(np.full(M, I), psi, params)
    return float(np.mean(obs(th, p, params)))


def hamiltonian_cycle_average(I: float, params: Params, signed: bool = False) -> float:
    """Exact phase average of H on a cycle: H is constant on each arc."""
    ts = params.theta_star
    Ga, Gb = gamma_integral(ts, I, params), gamma_integral(ts, 1.0 - I, params)
    Ha, Hb = energy(ts, I, params), energy(ts, 1.0 - I, params)
    if signed:
        Hb = -Hb
    return (Ha * Ga + Hb * Gb) / (Ga + Gb)
