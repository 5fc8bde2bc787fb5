"""Exception types shared across the package."""


class SpikeBenchError(Exception):
    """Base class for all package errors."""


class DomainError(SpikeBenchError, ValueError):
    """An argument is outside the domain an operation is defined on."""


class DegenerateInputError(SpikeBenchError, ValueError):
    """The input makes the requested quantity undefined (e.g. all-zero rates)."""


class FormatError(SpikeBenchError, ValueError):
    """A file or byte stream does not follow the expected layout."""
