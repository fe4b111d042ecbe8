"""Exception types shared across the toolkit."""


class ConfigurationError(ValueError):
    """A scenario or experiment configuration is invalid."""


class DomainError(ValueError):
    """A query lies outside the valid domain of an operation."""


class SolverError(RuntimeError):
    """A numerical routine failed to produce a usable result."""
