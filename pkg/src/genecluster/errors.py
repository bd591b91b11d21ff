"""Exception types raised by genecluster."""


class GeneClusterError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GeneClusterError, ValueError):
    """Input data is malformed or unsuitable for the requested operation."""


class EmptyResultError(DataError):
    """An operation removed every gene, leaving nothing to cluster."""


class DegenerateDataError(DataError):
    """A row or column makes a formula undefined (zero spread, zero norm...)."""


class ConfigError(GeneClusterError, ValueError):
    """An experiment configuration could not be parsed or validated."""
