"""Exception types raised by kickpend."""


class KickpendError(Exception):
    """Base class for all kickpend errors."""


class IntegrationError(KickpendError):
    """The hybrid flow could not be integrated as requested."""


class MaxEventsExceeded(IntegrationError):
    """More resets than ``max_events`` (Zeno-like or runaway configuration)."""


class StepFailure(IntegrationError):
    """The step-size controller could not meet the requested tolerance."""


class DomainError(KickpendError, ValueError):
    """An argument lies outside the domain of the requested function."""


class OutsideA2(DomainError):
    """The state is not in the band of limit cycles."""


class Unsettled(KickpendError):
    """Iteration of the return map did not settle within the allowed count."""


class QuadratureFailure(KickpendError):
    """Adaptive quadrature did not reach the requested accuracy."""


class Overdamped(DomainError):
    """Damping too strong for a complex eigenvalue pair."""


class OriginSingular(DomainError):
    """The observable is undefined at the origin."""


class PhaseUndefined(DomainError):
    """The eigenfunction phase is undefined (state at the sink)."""


class NoFixedPoint(KickpendError):
    """Bracketed root search for a fixed point failed."""


class InsufficientSamples(KickpendError):
    """Too few (or too narrowly spread) samples for a fit."""
