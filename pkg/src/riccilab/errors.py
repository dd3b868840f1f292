"""Exception hierarchy shared by every riccilab module."""


class RiccilabError(Exception):
    """Base class for all library errors."""


class ParameterError(RiccilabError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DomainError(RiccilabError, ValueError):
    """A point or time lies outside the domain of the object queried."""


class DegenerateMetricError(RiccilabError):
    """A metric profile is not positive where it has to be."""


class NumericalError(RiccilabError):
    """Base class for failures of a numerical method."""


class StiffnessError(NumericalError):
    """The time integrator could not keep its step above the floor."""


class DegenerationError(NumericalError):
    """The evolving metric degenerated during integration."""


class StencilError(NumericalError):
    """Not enough samples to build a finite difference stencil."""


class EscapeError(NumericalError):
    """A shot left the computational domain."""

    def __init__(self, message, sigma=None):
        super().__init__(message)
        self.sigma = sigma


class UnreachedTargetError(NumericalError):
    """No L-geodesic branch reached the requested target."""


class HorizonError(RiccilabError):
    """A stage window extends past the last available time."""


class ConfigError(RiccilabError):
    """Invalid or unreadable scenario configuration."""
