"""Exception types shared across the package."""


class NlfpError(Exception):
    """Base class for all package errors."""


class NonIntegrable(NlfpError):
    """A singular or tail quadrature failed to converge.

    Carries the offending probe (t, x) when known.
    """

    def __init__(self, message, probe=None):
        super().__init__(message)
        self.probe = probe


class TailBoundTooLoose(NlfpError):
    """Reported quadrature error bound exceeds the requested tolerance."""


class GridTooCoarse(NlfpError):
    """Spectral grid has too few nodes."""


class BlowUp(NlfpError):
    """A particle left the configured guard ball."""

    def __init__(self, message, particle_index=None):
        super().__init__(message)
        self.particle_index = particle_index


class EmptyCurve(NlfpError):
    """A measure curve with no time slices was supplied."""


class DegenerateEnsemble(NlfpError):
    """All particles coincide; density estimation is impossible."""


class StepRejected(NlfpError):
    """A solver step violated its mass-drift budget even after retries."""


class ConfigError(NlfpError):
    """Experiment configuration is malformed."""
