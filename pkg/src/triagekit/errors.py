"""Exception hierarchy shared across the pipeline."""


class TriageKitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(TriageKitError):
    """Invalid configuration, profile, ratios or model shapes."""


class ParseError(TriageKitError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(TriageKitError):
    """A record or type invariant was violated."""


class DataError(TriageKitError):
    """A dataset does not meet the preconditions of an operation."""


class TrainingError(TriageKitError):
    """Training diverged or cannot proceed."""


class ClusteringConflictError(TriageKitError):
    """A forced concept merge spans conflicting semantic types."""

    def __init__(self, message: str, members: list[str]):
        self.members = members
        super().__init__(f"{message}: {sorted(members)}")


class TaxonomyError(TriageKitError):
    """A child_of cycle was detected; carries the offending path."""

    def __init__(self, message: str, cycle: list[str]):
        self.cycle = cycle
        super().__init__(f"{message}: {' -> '.join(cycle)}")


class IngestionError(TriageKitError):
    """A corpus record could not be ingested into the knowledge graph."""


class PathError(TriageKitError):
    """A traversal path step is type-incompatible."""


class QueryError(TriageKitError):
    """A similarity or ranking query is malformed."""


class MappingError(TriageKitError):
    """Numeric-code mapping violated uniqueness."""


class SessionError(TriageKitError):
    """A session operation was called in an invalid state."""


class ProtocolError(TriageKitError):
    """An answer was given for a concept that was not asked."""


class InferenceError(TriageKitError):
    """The recommendation engine cannot produce an answer."""


class SnapshotError(TriageKitError):
    """A binary artifact (graph snapshot, model checkpoint) is unreadable."""


class BenchError(TriageKitError):
    """The benchmark harness could not reach or drive the service."""
