"""Scalar observables on the cylinder, vectorized over (theta, p) arrays.

Every observable receives the *wrapped* angle. ``needs_wrap_split`` marks
observables that jump at theta = pi, so the quadrature panels get split there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import Params, energy
from .errors import DomainError


@dataclass(frozen=True)
class Observable:
    name: str
    fn: Callable
    needs_wrap_split: bool = False

    def __call__(self, theta, p, params: Params):
        return self.fn(np.asarray(theta, dtype=float), np.asarray(p, dtype=float), params)

    def at(self, state, params: Params):
        from .dynamics import wrap

        v = self(wrap(state.theta), state.p, params)
        return v.item() if np.ndim(v) == 0 else v


def _hamiltonian(theta, p, params):
    return energy(theta, p, params)


def _signed(theta, p, params):
    return np.sign(p) * energy(theta, p, params)


HAMILTONIAN = Observable("hamiltonian", _hamiltonian)
SIGNED_HAMILTONIAN = Observable("signed_hamiltonian", _signed)
ONE = Observable("one", lambda th, p, params: np.ones(np.broadcast(th, p).shape))

_REGISTRY = {o.name: o for o in (HAMILTONIAN, SIGNED_HAMILTONIAN, ONE)}


def register_observable(name: str, fn: Callable, needs_wrap_split: bool = True) -> Observable:
    """Add a user observable ``fn(theta_wrapped, p, params)`` (must accept arrays)."""
    if name in _REGISTRY:
        raise DomainError(f"observable {name!r} already registered")
    obs = Observable(name, fn, needs_wrap_split)
    _REGISTRY[name] = obs
    return obs


def get_observable(name) -> Observable:
    if isinstance(name, Observable):
        return name
    try:
        return _REGISTRY[str(name).lower().replace("-", "_")]
    except KeyError:
        raise DomainError(f"unknown observable {name!r}; known: {sorted(_REGISTRY)}") from None


def known_observables() -> list:
    return sorted(_REGISTRY)
