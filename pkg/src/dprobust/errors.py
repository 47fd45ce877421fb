"""Exception hierarchy shared by the whole package.

Public functions never raise bare ValueError/RuntimeError; they raise one of
these so callers (and the CLI exit-code mapping) can tell parameter mistakes
apart from numeric breakdowns and I/O trouble.
"""


class DpRobustError(Exception):
    """Base class for all package errors."""


class ParameterError(DpRobustError, ValueError):
    """An argument violates a documented domain constraint."""


class ShapeError(DpRobustError, ValueError):
    """Array shapes or label domains do not line up."""


class NumericError(DpRobustError, FloatingPointError):
    """Non-finite input or a numeric routine failed to converge."""


class UsageError(DpRobustError):
    """The operation was invoked in an unusable way (empty grid, bad state)."""
