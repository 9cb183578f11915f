"""Exception types shared across the pairopt modules."""


class PairoptError(Exception):
    """Base class for all pairopt errors."""


class ParseError(PairoptError):
    """Candidate source does not parse."""


class MissingFeatures(PairoptError):
    """A similarity query was made against an unfeaturized candidate."""


class ProviderUnavailable(PairoptError):
    """Neither a live provider nor a replay entry can answer a request."""


class DimensionMismatch(PairoptError):
    """An embedding of unexpected length arrived from the provider."""


class TemplateError(PairoptError):
    """No prompt or harness template exists for the requested benchmark kind."""


class CodeExtractionFailed(PairoptError):
    """A provider response contained no fenced code block."""


class ChannelMismatch(PairoptError):
    """Feedback channels inconsistent with the configured run mode."""


class ProfilingTimeout(PairoptError):
    """A profiling subprocess exceeded its timeout and was killed."""


class ProfilerParseError(PairoptError):
    """Profiler shim output could not be parsed."""


class PreconditionViolated(PairoptError):
    """A contrast was requested with the counterpart faster than the reference."""


class DomainError(PairoptError):
    """Numeric argument outside its mathematical domain."""


class EmptyPool(PairoptError):
    """Round-input selection requested on an empty candidate pool."""


class EmptyReferences(PairoptError):
    """Efficiency scoring requested with no reference runtimes."""


class NoComparableTasks(PairoptError):
    """Speedup requested but no task has a correct solution under both methods."""


class SchemaError(PairoptError):
    """A task file violates the documented schema."""

    def __init__(self, message, path=None, field=None):
        super().__init__(message)
        self.path = path
        self.field = field


class ConfigError(PairoptError):
    """Invalid CLI or run configuration."""
