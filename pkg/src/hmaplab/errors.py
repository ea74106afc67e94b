"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes (see ``hmaplab.cli``).
"""


class HmapError(Exception):
    """Base class for every error raised by hmaplab."""


class ConfigurationError(HmapError, ValueError):
    """A builder or the CLI received an out-of-range parameter."""


class DomainError(HmapError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResolutionError(HmapError):
    """The discretization is too coarse to represent the requested object."""


class TopologyError(HmapError):
    """Maps that must be homotopic have different degrees."""


class PreconditionError(HmapError):
    """Inputs violate a structural precondition (e.g. maps differ outside a ball)."""


class DegenerateInputError(HmapError):
    """Inputs make a formula degenerate (e.g. division by a zero norm)."""


class InconclusiveError(HmapError):
    """A search could not establish the expected crossing.

    ``samples`` carries whatever was evaluated before giving up, as a list of
    ``(t, count_min, count_max)`` tuples.
    """

    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = list(samples or [])
