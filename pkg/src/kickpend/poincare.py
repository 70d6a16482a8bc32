"""Closed-form return map on the kicking surfaces and basin classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DEFAULT_OPTIONS, IntegratorOptions, Params, State, energy, first_crossing, wrap
from .errors import DomainError, KickpendError, OutsideA2, Unsettled

BOUNDARY_TOL = 1e-12
GUARD_TOL = 1e-12


class _Gamma:
    """The absorbing state at the unstable equilibrium."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "GAMMA"

    def __reduce__(self):
        return (_Gamma, ())


GAMMA = _Gamma()


class Region(enum.Enum):
    A1 = "A1"
    A2 = "A2"
    KICKED_OUTER = "KICKED_OUTER"


@dataclass(frozen=True)
class CycleLabel:
    """Which asymptotic set a kicked trajectory ends on."""

    kind: str
    p1: float = math.nan

    CYCLE = "cycle"
    FIXED = "fixed_point"
    HOMOCLINIC = "homoclinic"

    @classmethod
    def cycle(cls, p1: float) -> "CycleLabel":
        if not 0.0 < p1 < 1.0:
            raise DomainError("cycle label must lie in (0, 1)")
        return cls(cls.CYCLE, float(p1))

    @property
    def code(self) -> float:
        """Numeric code used in grid files: p1, -1 fixed point, -2 homoclinic."""
        if self.kind == self.CYCLE:
            return self.p1
        return -1.0 if self.kind == self.FIXED else -2.0


FIXED_POINT = CycleLabel(CycleLabel.FIXED)
HOMOCLINIC = CycleLabel(CycleLabel.HOMOCLINIC)


def p_critical(params: Params) -> float:
    """Momentum at the guard that lands exactly on the homoclinic orbit."""
    return math.sqrt(2.0 + 2.0 * math.cos(params.theta_star)) / params.ratio


def poincare_T(s, params: Params):
    """One application of the return map to a pre-kick momentum (or GAMMA)."""
    if s is GAMMA:
        return GAMMA
    p = float(s)
    edge = p_critical(params) + 1.0
    if abs(abs(p) - edge) <= BOUNDARY_TOL:
        return GAMMA
    if p < -edge:
        return p + 1.0
    if p < 0.0:
        return abs(p + 1.0)
    if p == 0.0:
        return 0.0
    if p < edge:
        return -abs(p - 1.0)
    return p - 1.0


def poincare_T_array(p, p_cr: float) -> np.ndarray:
    """Vectorized return map; NaN encodes GAMMA and is absorbing."""
    p = np.asarray(p, dtype=float)
    edge = p_cr + 1.0
    out = np.where(p < -edge, p + 1.0,
          np.where(p < 0.0, np.abs(p + 1.0),
          np.where(p == 0.0, 0.0,
          np.where(p < edge, -np.abs(p - 1.0), p - 1.0))))
    out = np.where(np.abs(np.abs(p) - edge) <= BOUNDARY_TOL, np.nan, out)
    return np.where(np.isnan(p), np.nan, out)


def iterate_T(p0, n: int, params: Params) -> list:
    if n < 0:
        raise DomainError("n must be non-negative")
    seq = [GAMMA if p0 is GAMMA else float(p0)]
    for _ in range(n):
        seq.append(poincare_T(seq[-1], params))
    return seq


@dataclass(frozen=True)
class Settlement:
    n: int
    value: object

    @property
    def absorbed(self) -> bool:
        return self.value is GAMMA


def settle_index(p0: float, params: Params, n_max: int = 10_000) -> Settlement:
    """First iterate landing in [-1, 1] (or absorbed into GAMMA)."""
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    q = p0
    for n in range(n_max + 1):
        if q is GAMMA:
            return Settlement(n, GAMMA)
        if -1.0 <= q <= 1.0:
            return Settlement(n, q)
        q = poincare_T(q, params)
    raise Unsettled(f"no settlement within {n_max} iterations")


def settle_index_array(p0, params: Params, n_max: int = 10_000):
    """Vectorized settle: returns (index, settled value); value NaN means GAMMA, index -1 unsettled."""
    q = np.array(p0, dtype=float)
    idx = np.full(q.shape, -1, dtype=np.int64)
    val = np.full(q.shape, np.nan)
    pcr = p_critical(params)
    for n in range(n_max + 1):
        pending = idx < 0
        if not pending.any():
            break
        done = pending & (np.isnan(q) | (np.abs(q) <= 1.0))
        idx[done] = n
        val[done] = q[done]
        q = poincare_T_array(q, pcr)
    return idx, val


def region_of(state: State, params: Params) -> Region:
    H = energy(state.theta, state.p, params)
    if H < params.h_minus:
        return Region.A1
    # states on a guard may carry rounding from the angle wrap
    if H <= params.h_plus and abs(wrap(state.theta)) <= params.theta_star + GUARD_TOL:
        return Region.A2
    return Region.KICKED_OUTER


def limit_cycle_label(state: State, params: Params) -> float:
    """Action label p1 of the limit cycle through a state of the band."""
    if region_of(state, params) is not Region.A2:
        raise OutsideA2("state is not in the band of limit cycles")
    H = energy(state.theta, state.p, params)
    r = math.sqrt(max(0.0, 2.0 * (H - params.h_minus))) / params.ratio
    return r if state.p >= 0 else 1.0 - r


def label_from_settled(q) -> CycleLabel:
    if q is GAMMA:
        return HOMOCLINIC
    if q == 0.0 or abs(q) >= 1.0:
        # T(+-1) = 0: the pair collapses onto the fixed point
        return FIXED_POINT
    return CycleLabel.cycle(q if q > 0 else 1.0 + q)


def on_guard(state: State, params: Params) -> bool:
    return abs(abs(wrap(state.theta)) - params.theta_star) <= GUARD_TOL


def classify_basin(state: State, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
                   n_max: int = 10_000) -> CycleLabel:
    """Asymptotic limit-cycle label of a kicked-region state.

    The first pre-kick momentum comes from simulation (or directly from the
    state when it sits on a guard); the closed-form map does the rest.
    """
    H = energy(state.theta, state.p, params)
    if H < params.h_minus and not on_guard(state, params):
        raise DomainError("state lies in the free-oscillation region and is never kicked")
    if on_guard(state, params):
        p_pre = state.p
    else:
        hit = first_crossing(state, params, opts)
        if hit is None:
            raise Unsettled("no guard crossing before max_time")
        p_pre = hit[0].p
    settled = settle_index(p_pre, params, n_max)
    return label_from_settled(settled.value)


def basin_grid(window, resolution, target_p1: float, tol: float, params: Params,
               opts: IntegratorOptions = DEFAULT_OPTIONS, workers: int = 0):
    """Indicator field of the basin of the cycle labelled ``target_p1``.

    Cell values: 1 inside the basin, 0 elsewhere; the imaginary part carries
    the label code (p1, -1 fixed point, -2 homoclinic, -3 never kicked).
    """
    from .grid import GridField, grid_axes, map_cells

    if not tol > 0:
        raise DomainError("tol must be positive")
    theta_axis, p_axis = grid_axes(window, resolution)

    def cell(theta, p):
        s = State(theta, p)
        if energy(theta, p, params) < params.h_minus and not on_guard(s, params):
            return 0.0, -3.0, "ok"
        try:
            label = classify_basin(s, params, opts)
        except Unsettled:
            return 0.0, math.nan, "unsettled"
        except KickpendError:
            return 0.0, math.nan, "error"
        hit = label.kind == CycleLabel.CYCLE and abs(label.p1 - target_p1) < tol
        return (1.0 if hit else 0.0), label.code, "ok"

    values, status = map_cells(cell, theta_axis, p_axis, workers)
    meta = {"kind": "basin", "target_p1": target_p1, "tol": tol, "p_cr": p_critical(params)}
    return GridField(theta_axis, p_axis, values, status, params=params, meta=meta)
