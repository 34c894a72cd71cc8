class LabError(ValueError):
    """Base class for every error raised by the lab's library code."""


class ParameterDomainError(LabError):
    """A numeric argument lies outside its mathematical domain."""


class PreconditionError(LabError):
    """An operation was called with inputs too weak for the guarantee it reports."""


class ConfigurationError(LabError):
    """An experiment configuration violates a quantitative window or floor."""


class InputError(LabError):
    """Malformed input data, e.g. an edge endpoint outside the vertex range."""
