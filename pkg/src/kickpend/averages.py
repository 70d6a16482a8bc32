"""Time averages, Laplace averages and the damped eigenfunction along trajectories.

All averages integrate the observable on Gauss-Legendre panels emitted by the
integrator. Panels never straddle a kick, a turning point (``p = 0``) or a
checkpoint, so jumps of the integrand are resolved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernel
from .dynamics import DEFAULT_OPTIONS, IntegratorOptions, Params, State, energy, run_kernel, wrap
from .errors import DomainError, IntegrationError, OriginSingular, Overdamped, PhaseUndefined
from .observables import Observable, get_observable

LAMBDA0_TOL = 1e-5
DAMPED_RTOL = 1e-3
BLOWUP = 1e12
DAMPED_T_MAX = 1000.0


class AverageResult(NamedTuple):
    value: complex
    status: str


def _nodes(x0: State, T: float, params: Params, opts: IntegratorOptions, split_wrap: bool, cuts):
    """Quadrature nodes over [0, T] plus the run status and last kick time."""
    status, t, _, _, events, nodes, _, _ = run_kernel(
        x0, T, params, opts, record_nodes=True, split_wrap=split_wrap, cuts=cuts,
    )
    last_kick = float(events[-1, 0]) if len(events) else -math.inf
    return status, float(t), nodes, last_kick


def _checkpoint_sums(t, w, vals, checkpoints):
    """Integrals of ``vals`` over [0, c] for each checkpoint ``c``."""
    out = []
    for c in checkpoints:
        m = t <= c
        out.append(np.sum(w[m] * vals[m]))
    return out


def _blown_up(t, w, vals):
    run = np.abs(np.cumsum(w * vals)) / np.maximum(t, 1e-300)
    return not np.all(np.isfinite(run)) or run.max(initial=0.0) > BLOWUP


def weighted_average(g: Observable, lam: complex, x0: State, T: float, params: Params,
                     opts: IntegratorOptions = DEFAULT_OPTIONS) -> AverageResult:
    """(1/T) * int_0^T exp(-lam*tau) g(S^tau x0) dtau with convergence status."""
    if not T > 0:
        raise DomainError("T must be positive")
    g = get_observable(g)
    cps = (0.25 * T, 0.5 * T, T)
    status, t_end, nodes, _ = _nodes(x0, T, params, opts, g.needs_wrap_split, cps[:2])
    if status == _kernel.MAX_EVENTS:
        return AverageResult(complex(math.nan, math.nan), "diverged")
    if status != _kernel.DONE:
        return AverageResult(complex(math.nan, math.nan), "error")
    t, th, p, w = nodes.T
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(g(th, p, params), dtype=complex)
        if lam != 0:
            vals = vals * np.exp(-lam * t)
        if _blown_up(t, w, vals):
            return AverageResult(complex(math.nan, math.nan), "diverged")
    a4, a2, a1 = (s / c for s, c in zip(_checkpoint_sums(t, w, vals, cps), cps))
    ok = abs(a1 - a2) < LAMBDA0_TOL and abs(a2 - a4) < LAMBDA0_TOL
    return AverageResult(complex(a1), "converged" if ok else "truncated")


def time_average(g, x0: State, T: float, params: Params,
                 opts: IntegratorOptions = DEFAULT_OPTIONS) -> AverageResult:
    """Birkhoff average of a real observable over [0, T]."""
    r = weighted_average(g, 0.0, x0, T, params, opts)
    return AverageResult(r.value.real, r.status)


def laplace_average(g, lam: complex, x0: State, T: float, params: Params,
                    opts: IntegratorOptions = DEFAULT_OPTIONS) -> AverageResult:
    return weighted_average(g, complex(lam), x0, T, params, opts)


def cycle_state(p1: float, params: Params) -> State:
    """Base point (-theta*, p1) of the cycle {p1, p1 - 1}."""
    return State(-params.theta_star, p1)


def signed_average_separates(p1: float, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
                             T: float = 2000.0, observable="signed_hamiltonian"):
    """Averages of an observable on the cycles {p1, p1-1} and {1-p1, -p1}."""
    if not 0.0 < p1 < 1.0:
        raise DomainError("p1 must lie in (0, 1)")
    a = time_average(observable, cycle_state(p1, params), T, params, opts)
    b = time_average(observable, cycle_state(1.0 - p1, params), T, params, opts)
    return a.value, b.value


@dataclass(frozen=True)
class LinearizedEigendata:
    """Eigenstructure of the pendulum linearized at the origin."""

    sigma: float
    eta: float
    lam: complex
    v: np.ndarray
    v_bar: np.ndarray
    A: np.ndarray
    basis_inv: np.ndarray

    def coords(self, theta, p):
        """First coordinate z of (theta, p) in the basis [v, v_bar]."""
        return self.basis_inv[0, 0] * np.asarray(theta) + self.basis_inv[0, 1] * np.asarray(p)


def linearized_eigendata(params: Params) -> LinearizedEigendata:
    mu1, mu2, k = params.mu1, params.mu2, params.k
    disc = mu2 * mu2 - 0.25 * k * k
    if disc <= 0:
        raise Overdamped("damping too strong for a complex eigenvalue pair")
    sigma = 0.5 * k
    eta = math.sqrt(disc)
    lam = complex(-sigma, eta)
    A = np.array([[0.0, mu1], [-mu2 * mu2 / mu1, -k]])
    v = np.array([mu1, lam], dtype=complex)
    v /= np.linalg.norm(v)
    basis = np.column_stack([v, v.conj()])
    return LinearizedEigendata(sigma, eta, lam, v, v.conj(), A, np.linalg.inv(basis))


def observable_g1(state: State, eig: LinearizedEigendata) -> float:
    return float(abs(eig.coords(wrap(state.theta), state.p)))


def observable_g2(state: State, eig: LinearizedEigendata) -> complex:
    z = eig.coords(wrap(state.theta), state.p)
    if z == 0:
        raise OriginSingular("g2 is undefined at the origin")
    return complex(z / abs(z))


def g1_observable(eig: LinearizedEigendata) -> Observable:
    return Observable("g1", lambda th, p, params: np.abs(eig.coords(th, p)), True)


def g2_observable(eig: LinearizedEigendata) -> Observable:
    def fn(th, p, params):
        z = eig.coords(th, p)
        a = np.abs(z)
        return np.where(a > 0, z / np.where(a > 0, a, 1.0), 0.0)

    return Observable("g2", fn, True)


def resolve_observable(name, params: Params) -> Observable:
    """Named observable, including the eigen-observables g1/g2 built from ``params``."""
    key = getattr(name, "name", str(name)).lower()
    if isinstance(name, Observable):
        return name
    if key in ("g1", "g2"):
        eig = linearized_eigendata(params)
        return g1_observable(eig) if key == "g1" else g2_observable(eig)
    return get_observable(key)


class DampedResult(NamedTuple):
    modulus: float
    phase: float
    status: str
    coherence: float = math.nan

    @property
    def value(self) -> complex:
        if not math.isfinite(self.phase):
            return complex(self.modulus, 0.0)
        return self.modulus * complex(math.cos(self.phase), math.sin(self.phase))


def damped_eigenfunction(x0: State, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
                         T_max: float = DAMPED_T_MAX) -> DampedResult:
    """Eigenfunction at lambda = -sigma + i*eta as modulus and phase.

    Modulus: average of exp(sigma*tau) g1(S^tau x0). Phase: argument of the
    average of exp(-i*eta*tau) g2(S^tau x0), renormalized to unit modulus.
    Each average is the Richardson-corrected Cesaro mean 2A(T) - A(T/2), i.e.
    the mean over [T/2, T]; it removes the O(1/T) bias of the transient.

    Status: ``converged`` when the estimates at T/2 and T agree to a relative
    1e-3 (modulus and unit phase) and the phase average is coherent. A
    trajectory that fails this test after having been kicked is ``diverged``:
    for damped kicked orbits the only thing that delays the decay is
    lingering near the unstable periodic orbit, where the weighted trace
    grows like exp(sigma*tau). Kick-free failures are ``truncated``.
    Absolute tolerance is scaled by exp(-sigma*T_max) because the state
    shrinks by that factor over the window while the weight undoes it.
    """
    if x0.p == 0 and wrap(x0.theta) == 0:
        return DampedResult(0.0, math.nan, "converged", math.nan)
    # k = 0 is accepted: the undamped run simply never reports converged
    eig = linearized_eigendata(params)
    run_opts = opts.replace(abs_tol=opts.abs_tol * math.exp(-eig.sigma * T_max))
    cps = (0.25 * T_max, 0.5 * T_max, T_max)
    status, _, nodes, last_kick = _nodes(x0, T_max, params, run_opts, True, cps[:2])
    if status == _kernel.MAX_EVENTS:
        return DampedResult(math.nan, math.nan, "diverged")
    if status != _kernel.DONE:
        return DampedResult(math.nan, math.nan, "error")
    t, th, p, w = nodes.T
    z = eig.coords(th, p)
    az = np.abs(z)
    with np.errstate(over="ignore", invalid="ignore"):
        mod_vals = np.exp(eig.sigma * t) * az
        ph_vals = np.exp(-1j * eig.eta * t) * np.where(az > 0, z / np.where(az > 0, az, 1.0), 0.0)
        if _blown_up(t, w, mod_vals):
            return DampedResult(math.nan, math.nan, "diverged")
    s_mod = _checkpoint_sums(t, w, mod_vals, cps)
    s_ph = _checkpoint_sums(t, w, ph_vals, cps)
    # tail means over [T/2, T] and, one doubling earlier, over [T/4, T/2]
    m_full = (s_mod[2] - s_mod[1]) / (0.5 * T_max)
    m_half = (s_mod[1] - s_mod[0]) / (0.25 * T_max)
    q_full = (s_ph[2] - s_ph[1]) / (0.5 * T_max)
    q_half = (s_ph[1] - s_ph[0]) / (0.25 * T_max)
    coherence = float(abs(q_full))
    if coherence == 0:
        raise PhaseUndefined("phase average vanished")
    phase = math.atan2(q_full.imag, q_full.real)
    ok = (
        abs(m_full - m_half) <= DAMPED_RTOL * abs(m_full)
        and abs(q_full / coherence - q_half / max(abs(q_half), 1e-300)) <= DAMPED_RTOL
        and coherence >= 1.0 - DAMPED_RTOL
    )
    if ok:
        st = "converged"
    else:
        st = "diverged" if last_kick > 0 else "truncated"
    return DampedResult(float(m_full), phase, st, coherence)


def eigenfunction_value(x0: State, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
                        T_max: float = DAMPED_T_MAX) -> complex:
    r = damped_eigenfunction(x0, params, opts, T_max)
    if x0.p == 0 and wrap(x0.theta) == 0:
        return 0j
    return r.value


def _cell_average(op, params, opts, observable, lam, T_max):
    def cell(theta, p):
        x = State(theta, p)
        try:
            if op == "damped_eigenfunction":
                r = damped_eigenfunction(x, params, opts, T_max)
                v = r.value
                return v.real, v.imag, r.status
            r = weighted_average(observable, lam, x, T_max, params, opts)
            return r.value.real, r.value.imag, r.status
        except (IntegrationError, DomainError):
            return math.nan, math.nan, "error"

    return cell


def grid_sweep(op: str, window, resolution, params: Params, opts: IntegratorOptions = DEFAULT_OPTIONS,
               observable="hamiltonian", lam: complex = 0.0, T_max: float | None = None,
               workers: int = 0, target_p1: float = 0.7, tol: float = 1e-6):
    """Evaluate one per-point operation over a (theta, p) grid.

    ``op`` is one of ``time_average``, ``laplace_average``,
    ``damped_eigenfunction`` or ``basin``.
    """
    from .grid import GridField, grid_axes, map_cells
    from .poincare import basin_grid

    n_th, n_p = (int(n) for n in resolution)
    if n_th * n_p < 2:
        raise DomainError("a sweep needs at least two cells")
    if op == "basin":
        return basin_grid(window, resolution, target_p1, tol, params, opts, workers)
    if op not in ("time_average", "laplace_average", "damped_eigenfunction"):
        raise DomainError(f"unknown sweep operation {op!r}")
    if T_max is None:
        T_max = DAMPED_T_MAX if op == "damped_eigenfunction" else 2000.0
    obs = resolve_observable(observable, params)
    lam = 0.0 if op == "time_average" else complex(lam)
    meta = {"kind": op, "T_max": T_max}
    if op == "damped_eigenfunction":
        eig = linearized_eigendata(params)
        meta["lambda"] = eig.lam
    else:
        meta["observable"] = obs.name
        meta["lambda"] = complex(lam)
    theta_axis, p_axis = grid_axes(window, resolution)
    values, status = map_cells(_cell_average(op, params, opts, obs, lam, T_max), theta_axis, p_axis, workers)
    return GridField(theta_axis, p_axis, values, status, params=params, meta=meta)
