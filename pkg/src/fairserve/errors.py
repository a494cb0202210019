"""Exception types shared across the package.

Each error carries the CLI exit code it maps to, so the command layer
can translate failures without a lookup table.
"""


class FairServeError(Exception):
    exit_code = 1


class ConfigError(FairServeError):
    exit_code = 2


class DataError(FairServeError):
    exit_code = 3


class NumericalError(FairServeError):
    exit_code = 4


class EmptySide(DataError):
    """A sensitive group, or its complement, has no members in the batch."""


class NoValidGroups(DataError):
    """Every group was excluded because one of its sides was empty."""


class DegenerateData(DataError):
    """PCA input has rank below the number of requested components."""


class SingleClass(DataError):
    """Logistic regression was given labels from only one class."""


class FormatVersionError(DataError):
    """A persisted file carries a missing or unsupported format version."""


class EpisodeTerminated(FairServeError):
    """Stepping an episode that already finished."""


class NonFiniteGradient(NumericalError):
    pass
