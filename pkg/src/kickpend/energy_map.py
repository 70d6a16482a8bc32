"""Half-swing energy return map of the damped kicked pendulum.

The map is ``u = f o d``: ``d`` is the energy lost to damping on one traverse
between the guards (measured by simulation and modelled as ``d(H) = r H``),
``f`` is the analytic energy change of a kick.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _kernel
from .dynamics import DEFAULT_OPTIONS, IntegratorOptions, Params, State, energy, run_kernel
from .errors import DomainError, InsufficientSamples, KickpendError, NoFixedPoint

log = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-12
NEVER_ESCAPES = None


class NoCrossing(KickpendError):
    """The swing never reaches the opposite guard (it falls back into A1)."""


def guard_momentum(H, params: Params):
    """Momentum at a guard for energy H: (mu2/mu1) sqrt(2 (H + cos theta* - 1))."""
    H = np.asarray(H, dtype=float)
    if np.any(H < params.h_minus - 1e-15):
        raise DomainError("energy below the guard energy H_minus")
    out = np.sqrt(np.maximum(0.0, 2.0 * (H - params.h_minus))) / params.ratio
    return float(out) if out.ndim == 0 else out


def kick_energy_f(H, params: Params):
    """Energy right after a kick at a guard reached with energy H."""
    q = params.ratio**2
    out = np.asarray(H, dtype=float) - q * np.asarray(guard_momentum(H, params)) + 0.5 * q
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnergySample:
    H_in: float
    H_out: float
    k: float


def measure_dissipation(H: float, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS) -> EnergySample:
    """Energy lost on one traverse from -theta* to +theta*.

    Starts at ``(-theta*, p(H))`` and stops at the first guard crossing that
    would kick, which is the pre-kick state at +theta* unless the swing falls
    back (then the crossing is at -theta* and :class:`NoCrossing` is raised).
    """
    if not params.h_minus - 1e-15 <= H <= params.h_plus + 1e-12:
        raise DomainError("H must lie in [H_minus, H_plus]")
    x0 = State(-params.theta_star, guard_momentum(H, params))
    run_opts = opts.replace(max_time=min(opts.max_time, 200.0))
    status, _, y, _, events, _, _, _ = run_kernel(x0, run_opts.max_time, params, run_opts,
                                                 guard_mode=_kernel.GUARD_STOP)
    if status != _kernel.STOPPED_EVENT or events[-1, 1] != 1.0:
        raise NoCrossing(f"no traverse to +theta* from H={H}")
    return EnergySample(float(H), energy(y[0], y[1], params), params.k)


def collect_dissipation(params: Params, n: int = 12, opts: IntegratorOptions = DEFAULT_OPTIONS,
                        H_values=None):
    """Samples over [H_minus, H_plus]; energies that fall back are skipped and returned."""
    if H_values is None:
        H_values = np.linspace(params.h_minus, params.h_plus, n + 1)[1:]
    samples, skipped = [], []
    for H in H_values:
        try:
            samples.append(measure_dissipation(float(H), params, opts))
        except NoCrossing:
            skipped.append(float(H))
    return samples, skipped


@dataclass(frozen=True)
class DissipationModel:
    """Linear dissipation d(H) = r H."""

    r: float
    fit_residual: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise DomainError("retention r must lie in (0, 1]")
        if not self.fit_residual >= 0:
            raise DomainError("fit_residual must be non-negative")

    @property
    def delta(self) -> float:
        return 1.0 - self.r

    @property
    def dissipative(self) -> bool:
        return self.r < 1.0

    @classmethod
    def from_delta(cls, delta: float) -> "DissipationModel":
        return cls(1.0 - delta)

    def h0(self, params: Params) -> float:
        """Lower edge of the map domain: below it the swing never reaches a guard."""
        return params.h_minus / self.r


def fit_retention(samples, params: Params | None = None) -> DissipationModel:
    """Least-squares slope of H_out against H_in through the origin."""
    if len(samples) < 3:
        raise InsufficientSamples("need at least 3 samples")
    H_in = np.array([s.H_in for s in samples])
    H_out = np.array([s.H_out for s in samples])
    if params is not None and np.ptp(H_in) < 0.5 * (params.h_plus - params.h_minus):
        raise InsufficientSamples("samples must span at least half of [H_minus, H_plus]")
    r = float(H_in @ H_out / (H_in @ H_in))
    resid = float(np.max(np.abs(H_out - r * H_in) / (r * H_in)))
    if r >= 1.0:
        log.warning("fitted retention r=%.12g >= 1: no dissipation, model is degenerate", r)
        r = min(r, 1.0)
    return DissipationModel(r, resid)


def _domain(model: DissipationModel, params: Params):
    return model.h0(params), params.h_plus


def energy_map_u(H, model: DissipationModel, params: Params):
    """u(H) = f(r H) on [H0, H_plus]."""
    H = np.asarray(H, dtype=float)
    h0 = model.h0(params)
    if np.any(H < h0 * (1 - 1e-15)):
        raise DomainError("H below H0: the swing decays into the free-oscillation region")
    out = kick_energy_f(np.maximum(model.r * H, params.h_minus), params)
    return float(out) if np.ndim(out) == 0 else out


def energy_map_slope(H, model: DissipationModel, params: Params):
    """u'(H) = r (1 - 1/p(r H))."""
    p = np.asarray(guard_momentum(model.r * np.asarray(H, dtype=float), params))
    with np.errstate(divide="ignore"):
        out = model.r * (1.0 - 1.0 / p)
    return float(out) if out.ndim == 0 else out


def fixed_point(model: DissipationModel, params: Params):
    """Root of u(H) = H and the slope u'(H) there."""
    h_fp0 = energy(params.theta_star, 0.5, params)
    h0, h1 = _domain(model, params)
    g = lambda H: energy_map_u(H, model, params) - H
    lo = max(h_fp0, h0)
    if g(lo) == 0.0:
        root = lo
    else:
        if not g(lo) > 0 > g(h1):
            lo = h0
            if not g(lo) > 0 > g(h1):
                raise NoFixedPoint("u(H) - H does not change sign on the domain")
        try:
            root = optimize.brentq(g, lo, h1, xtol=FIXED_POINT_TOL, rtol=4 * np.finfo(float).eps)
        except (ValueError, RuntimeError) as exc:
            raise NoFixedPoint(str(exc)) from exc
    return root, energy_map_slope(root, model, params)


def second_iterate_derivative(H, model: DissipationModel, params: Params):
    """d/dH u(u(H)) = u'(u(H)) u'(H)."""
    u = energy_map_u(H, model, params)
    return energy_map_slope(u, model, params) * energy_map_slope(H, model, params)


def escape_count(H0_val: float, model: DissipationModel, params: Params, n_max: int = 100_000,
                 tol: float = 1e-10):
    """Iterations until u^n leaves [H0, H_plus]; ``None`` for the fixed point itself."""
    h0, h1 = _domain(model, params)
    if not h0 * (1 - 1e-15) <= H0_val <= h1 * (1 + 1e-15):
        raise DomainError("starting energy outside [H0, H_plus]")
    try:
        h_fp, _ = fixed_point(model, params)
    except NoFixedPoint:
        h_fp = math.nan
    if abs(H0_val - h_fp) <= tol:
        return NEVER_ESCAPES
    H = H0_val
    for n in range(1, n_max + 1):
        H = kick_energy_f(max(model.r * H, params.h_minus), params)
        if not h0 <= H <= h1:
            return n
    return NEVER_ESCAPES


def dissipation_report(samples, model: DissipationModel, k: float) -> str:
    return json.dumps({
        "k": k,
        "samples": [{"H_in": s.H_in, "H_out": s.H_out} for s in samples],
        "r": model.r,
        "delta": model.delta,
        "fit_residual": model.fit_residual,
    }, indent=2)


def energy_map_report(model: DissipationModel, params: Params, offsets=(1e-6, 1e-4, 1e-3, 1e-2, 3e-2)) -> str:
    h_fp, slope = fixed_point(model, params)
    table = []
    for d in offsets:
        for H in (h_fp - d, h_fp + d):
            if model.h0(params) <= H <= params.h_plus:
                table.append({"H0": H, "n": escape_count(H, model, params)})
    return json.dumps({"r": model.r, "H_fp": h_fp, "slope": slope, "escape_table": table}, indent=2)
