"""Exception hierarchy shared across the toolkit.

Every error raised by the library derives from :class:`TabembedError` so
callers can catch one base class at pipeline boundaries.  The CLI maps
subfamilies onto exit codes (config 1, backend 2, degenerate data 3).
"""


class TabembedError(Exception):
    """Base class for all toolkit errors."""


# --- ingestion / tabular -------------------------------------------------


class IngestError(TabembedError):
    pass


class UnknownColumn(IngestError):
    pass


class MalformedNumber(IngestError):
    pass


class DuplicateId(IngestError):
    pass


class MissingLabel(IngestError):
    """Empty or non-binary label cell: labels are ground truth, never imputed."""


class TooFewRecords(TabembedError):
    pass


class EmptyFeatureColumn(TabembedError):
    """A feature has no observed value in any training record, so no mean exists."""


# --- serialization -------------------------------------------------------


class UnknownTemplate(TabembedError):
    pass


class EmptyQuestion(TabembedError):
    pass


class ParseFailure(TabembedError):
    """Round-trip parse could not recover a value it should have; serializer bug."""


# --- backends ------------------------------------------------------------


class BackendError(TabembedError):
    pass


class BackendUnreachable(BackendError):
    pass


class BackendProtocolError(BackendError):
    """Response violated the wire contract (shape mismatch, bad payload)."""


class NonFiniteValues(BackendError):
    pass


class CandidateMissing(BackendError):
    pass


class CacheCorrupt(Warning):
    """Checksum mismatch on a cache entry: surfaced as a warning, treated as a miss."""


class PartialBatch(BackendError):
    def __init__(self, completed: int, total: int, cause: Exception):
        self.completed = completed
        self.total = total
        self.cause = cause
        super().__init__(
            f"embedded {completed}/{total} records before failure: {cause!r}"
        )


# --- learners ------------------------------------------------------------


class DegenerateLabels(TabembedError):
    """Training labels contain a single class."""


class EmptyMatrix(TabembedError):
    pass


class DimensionMismatch(TabembedError):
    pass


class NonConvergence(Warning):
    """Optimizer hit max_iters before the tolerance; last iterate returned."""


# --- metrics -------------------------------------------------------------


class SingleClass(TabembedError):
    pass


class LengthMismatch(TabembedError):
    pass


class ConstantInput(TabembedError):
    pass


class TooFewValidResamples(TabembedError):
    pass


# --- scoring -------------------------------------------------------------


class EmptyOptions(TabembedError):
    pass


# --- pipeline ------------------------------------------------------------


class ConfigError(TabembedError):
    pass


class InfeasiblePrevalence(TabembedError):
    pass


class FractionTooSmall(TabembedError):
    """Training-size sweep fraction leaves fewer than 10 positive records."""
