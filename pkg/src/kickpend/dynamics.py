"""The kicked pendulum as a hybrid system: flow, guards, resets.

States use the normalized momentum ``p = omega / delta_omega``. Angles are
integrated unwrapped; every observable consumes ``wrap(theta)`` in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .errors import DomainError, MaxEventsExceeded, StepFailure

__all__ = [
    "Params",
    "State",
    "IntegratorOptions",
    "KickEvent",
    "Trajectory",
    "wrap",
    "hamiltonian",
    "energy",
    "vector_field",
    "guard_and_reset",
    "flow",
    "first_crossing",
]


@dataclass(frozen=True)
class Params:
    """System constants: kick strength, natural frequency, kick angle, damping."""

    mu1: float = 1.0
    mu2: float = 1.0
    theta_star: float = math.pi / 3
    k: float = 0.0

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise DomainError("mu1 and mu2 must be positive")
        if not (0 < self.theta_star < math.pi):
            raise DomainError("theta_star must lie in (0, pi)")
        if not self.k >= 0:
            raise DomainError("damping k must be non-negative")

    @property
    def ratio(self) -> float:
        """mu1 / mu2, the factor between momentum and kinetic energy."""
        return self.mu1 / self.mu2

    @property
    def h_minus(self) -> float:
        """Energy of the guard at rest, H(theta*, 0)."""
        return 2.0 * math.sin(0.5 * self.theta_star) ** 2

    @property
    def h_plus(self) -> float:
        """Energy of the guard at unit momentum, H(theta*, 1)."""
        return 0.5 * self.ratio**2 + self.h_minus

    def as_array(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2, self.theta_star, self.k], dtype=float)

    def with_damping(self, k: float) -> "Params":
        return Params(self.mu1, self.mu2, self.theta_star, k)


@dataclass(frozen=True)
class State:
    theta: float
    p: float

    @property
    def wrapped(self) -> float:
        return wrap(self.theta)

    def reflected(self) -> "State":
        return State(-self.theta, -self.p)


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float = 0.5
    event_time_tol: float = 1e-12
    grazing_p_tol: float = 1e-10
    max_time: float = 1000.0
    max_events: int = 100_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_time_tol", "grazing_p_tol", "max_time"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.max_events < 0:
            raise DomainError("max_events must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.rel_tol, self.abs_tol, self.max_step, self.event_time_tol,
             self.grazing_p_tol, float(self.max_events)],
            dtype=float,
        )

    def replace(self, **changes) -> "IntegratorOptions":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return IntegratorOptions(**values)


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass(frozen=True)
class KickEvent:
    time: float
    side: int
    pre: State
    post: State


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped samples (unwrapped angle) plus the ordered reset log."""

    t: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "p", _frozen(self.p))
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def samples(self) -> list:
        return [(float(t), State(float(th), float(p))) for t, th, p in zip(self.t, self.theta, self.p)]

    @property
    def final(self) -> State:
        return State(float(self.theta[-1]), float(self.p[-1]))

    def energies(self, params: Params) -> np.ndarray:
        return energy(self.theta, self.p, params)

    def __len__(self):
        return len(self.t)


def wrap(theta):
    """Reduce an angle (scalar or array) to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    w = np.mod(theta + np.pi, 2.0 * np.pi)
    w = np.where(w <= 0.0, w + 2.0 * np.pi, w) - np.pi
    return float(w) if w.ndim == 0 else w


def energy(theta, p, params: Params):
    """Vectorized Hamiltonian of the free pendulum in normalized coordinates."""
    q = params.ratio * np.asarray(p, dtype=float)
    s = np.sin(0.5 * np.asarray(theta, dtype=float))
    out = 0.5 * q * q + 2.0 * s * s
    return float(out) if np.ndim(out) == 0 else out


def hamiltonian(state: State, params: Params) -> float:
    return energy(state.theta, state.p, params)


def vector_field(state: State, params: Params) -> tuple:
    return _kernel.rhs(float(state.theta), float(state.p), params.as_array())


def guard_and_reset(pre: State, side: int, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """Apply the kick at ``side * theta_star``; ``None`` when no reset fires.

    Only crossings moving away from the bottom are kicked: ``p > 0`` at the
    positive guard, ``p < 0`` at the negative one. Grazing (``|p|`` within the
    grazing tolerance) passes through.
    """
    if side not in (1, -1):
        raise DomainError("side must be +1 or -1")
    if abs(wrap(pre.theta) - side * params.theta_star) > 1e-8:
        raise DomainError("state is not on the requested guard")
    if side == 1 and pre.p > opts.grazing_p_tol:
        return State(pre.theta, pre.p - 1.0)
    if side == -1 and pre.p < -opts.grazing_p_tol:
        return State(pre.theta, pre.p + 1.0)
    return None


def _check(status: int):
    if status == _kernel.MAX_EVENTS:
        raise MaxEventsExceeded("reset count exceeded max_events")
    if status == _kernel.STEP_FAILURE:
        raise StepFailure("step size underflow")


_EMPTY = np.empty(0)


def run_kernel(initial: State, duration: float, params: Params, opts: IntegratorOptions, *,
               guard_mode: int = _kernel.GUARD_KICK, h_stop: float = -np.inf,
               record_samples: bool = False, record_nodes: bool = False,
               split_wrap: bool = False, cuts=None, t_eval=None):
    """Thin wrapper over the compiled integrator returning its raw tuple."""
    y0 = np.array([initial.theta, initial.p], dtype=float)
    cuts = _EMPTY if cuts is None else np.ascontiguousarray(cuts, dtype=float)
    t_eval = _EMPTY if t_eval is None else np.ascontiguousarray(t_eval, dtype=float)
    return _kernel.integrate(
        y0, 0.0, float(duration), params.as_array(), opts.as_array(), guard_mode,
        float(h_stop), record_samples, record_nodes, split_wrap, cuts, t_eval,
    )


def _events_from_rows(rows: np.ndarray) -> tuple:
    return tuple(
        KickEvent(float(r[0]), int(r[1]), State(float(r[2]), float(r[3])), State(float(r[4]), float(r[5])))
        for r in rows
    )


def flow(initial: State, duration: float, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
         t_eval=None, kicks: bool = True) -> Trajectory:
    """Integrate the hybrid system for ``duration`` seconds.

    Samples are the accepted integrator steps (plus post-reset states), or the
    requested ``t_eval`` times when given.
    """
    if not duration > 0:
        raise DomainError("duration must be positive")
    mode = _kernel.GUARD_KICK if kicks else _kernel.GUARD_INERT
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > duration:
            raise DomainError("t_eval must be strictly increasing within [0, duration]")
    status, _, _, samples, events, _, teval, _ = run_kernel(
        initial, duration, params, opts, guard_mode=mode,
        record_samples=t_eval is None, t_eval=t_eval,
    )
    _check(status)
    if t_eval is None:
        return Trajectory(samples[:, 0], samples[:, 1], samples[:, 2], _events_from_rows(events))
    return Trajectory(t_eval, teval[:, 0], teval[:, 1], _events_from_rows(events))


def first_crossing(initial: State, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """State just before the first reset and its time, or ``None`` before ``max_time``."""
    status, t, y, _, events, _, _, _ = run_kernel(
        initial, opts.max_time, params, opts, guard_mode=_kernel.GUARD_STOP,
    )
    _check(status)
    if status != _kernel.STOPPED_EVENT:
        return None
    return State(float(y[0]), float(y[1])), float(t)


def first_crossing_side(initial: State, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """Like :func:`first_crossing` but also reports the guard side (+1 / -1)."""
    status, t, y, _, events, _, _, _ = run_kernel(
        initial, opts.max_time, params, opts, guard_mode=_kernel.GUARD_STOP,
    )
    _check(status)
    if status != _kernel.STOPPED_EVENT:
        return None
    return State(float(y[0]), float(y[1])), float(t), int(events[-1, 1])


def propagate(states: np.ndarray, duration: float, params: Params,
              opts: IntegratorOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Batch end states after ``duration`` for an ``(n, 2)`` array of initial states."""
    states = np.ascontiguousarray(states, dtype=float).reshape(-1, 2)
    return _kernel.propagate_many(states, float(duration), params.as_array(), opts.as_array())
