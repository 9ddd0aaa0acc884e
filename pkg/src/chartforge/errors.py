"""Exception types shared across the toolkit.

Everything raised on purpose derives from ChartForgeError so callers can
catch toolkit failures without also swallowing programming bugs.
"""


class ChartForgeError(Exception):
    pass


# --- script tracing ---

class DuplicateMarker(ChartForgeError):
    """The same #k marker appears on two different lines."""


class MalformedMarker(ChartForgeError):
    """Marker suffix is not a positive integer (e.g. "#0", "#x")."""


class ScriptError(ChartForgeError):
    """The traced script raised, or a marker sits on a non-plotting line."""


class ExecTimeout(ChartForgeError):
    """Script exceeded the wall-clock limit."""


class NoMarkedCalls(ChartForgeError):
    """A marker exists in the source but its line never executed."""


class UnknownMarker(ChartForgeError):
    pass


class UnknownExecution(ChartForgeError):
    """(marker, invocation_count) pair has no traced call."""


# --- mask extraction ---

class EmptyMask(ChartForgeError):
    """A mask has no foreground pixels (e.g. fully clipped primitive)."""


class RenderMismatch(ChartForgeError):
    """Re-render produced different dimensions than the scene image."""


class UnsupportedGranularity(ChartForgeError):
    """Requested granularity does not apply to this call type."""


class UnmappedCombination(ChartForgeError):
    """(api, role, axes_kind, granularity) outside the taxonomy."""


# --- target resolution ---

class SchemaError(ChartForgeError):
    pass


class AmbiguousNullInvocation(ChartForgeError):
    """invocation_count is null but the marked line ran more than once."""


class IndexOutOfRange(ChartForgeError):
    pass


class SingletonViolation(ChartForgeError):
    """element_indices is null but the execution produced several instances."""


# --- evaluation ---

class ShapeMismatch(ChartForgeError):
    pass


class DimensionMismatch(ChartForgeError):
    pass


class EmptyInput(ChartForgeError):
    pass


class UnknownCategory(ChartForgeError):
    pass


# --- dataset io ---

class LengthMismatch(ChartForgeError):
    """RLE counts do not sum to H*W."""


class DanglingReference(ChartForgeError):
    pass


class IOFailure(ChartForgeError):
    pass


# --- set-of-mark pipeline ---

class EmptyCandidates(ChartForgeError):
    pass


class NoSelectionFound(ChartForgeError):
    """Response text contains no bracketed integer list."""


class UnknownMarkId(ChartForgeError):
    pass


class ClientFailure(ChartForgeError):
    """Selection client failed; carries the sample id in args."""
