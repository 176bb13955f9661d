"""Exception hierarchy shared by all modules.

Each class maps to one failure category; the CLI translates them into
exit codes.
"""


class ArtifactError(Exception):
    """Base class for library errors."""


class InvalidArgument(ArtifactError, ValueError):
    """A precondition on an argument is violated."""


class NumericError(ArtifactError, ArithmeticError):
    """A computation produced a non-finite or degenerate value."""


class DomainError(ArtifactError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class SignConditionError(ArtifactError):
    """The noise functional that selects the blow-up rate has the wrong sign."""


class ConsistencyError(ArtifactError):
    """A maintained invariant drifted beyond tolerance."""


class ConfigError(ArtifactError):
    """A run configuration failed to parse or validate."""


class NoBubbleError(ArtifactError):
    """No bubble core was found in a map."""


class ResolutionError(ArtifactError):
    """A feature is not resolved by the grid."""
