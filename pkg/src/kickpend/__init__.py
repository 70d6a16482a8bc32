"""Koopman analysis of a pendulum with event-triggered momentum kicks."""

from ._accel import BACKEND
from .dynamics import (
    IntegratorOptions,
    KickEvent,
    Params,
    State,
    Trajectory,
    energy,
    first_crossing,
    flow,
    guard_and_reset,
    hamiltonian,
    vector_field,
    wrap,
)

__version__ = "0.1.0"
