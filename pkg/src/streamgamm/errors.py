"""Exception types shared across the package.

Every stage raises a subclass of :class:`StreamGammError` so the CLI can
map failures to exit codes and name the failing stage.
"""


class StreamGammError(Exception):
    """Base class for all package errors."""


class SchemaError(StreamGammError):
    """A required column or config key is missing or malformed."""


class EmptyInputError(StreamGammError):
    """No usable rows survived loading or alignment."""


class AlignmentError(StreamGammError):
    """Timestamps cannot be reconciled with the 15-minute lattice."""


class DataError(StreamGammError):
    """Non-finite or otherwise unusable numeric input."""


class RankError(DataError):
    """Too few distinct covariate values for the requested basis size."""


class DegenerateColumnError(DataError):
    """A constant column was passed where variation is required."""


class SingularFitError(StreamGammError):
    """The penalized system is rank deficient."""


class ExtrapolationError(StreamGammError):
    """Evaluation requested outside the fitted range without opting in."""


class TransportError(StreamGammError):
    """Retryable HTTP failure talking to the data service."""


class NotFoundError(StreamGammError):
    """The data service does not know the requested product/site/month."""


class IntegrityError(StreamGammError):
    """A downloaded file failed checksum verification."""
