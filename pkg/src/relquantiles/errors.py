"""Exception hierarchy shared by every module of the package."""


class SketchError(Exception):
    """Base class for all errors raised by relquantiles."""


class ParameterError(SketchError, ValueError):
    """An accuracy/size parameter is outside its valid range."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ModeError(SketchError):
    """Operation is not defined for the sketch's parameterization mode."""


class InputError(SketchError, ValueError):
    """An item cannot be ingested (NaN, infinite, or over the declared length)."""


class QueryError(SketchError, ValueError):
    """A query cannot be answered (empty sketch, rank out of range)."""


class MergeError(SketchError):
    """Two sketches are not compatible for merging."""


class ConsumedError(SketchError):
    """The sketch was consumed by a merge and may no longer be used."""


class InvariantError(SketchError, AssertionError):
    """An internal structural invariant does not hold."""


class UnsupportedTypeError(SketchError, TypeError):
    """The sketch's item universe has no binary encoding."""


class DecodeError(SketchError, ValueError):
    """A byte string is not a well-formed sketch file."""

    def __init__(self, offset, message):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset
