"""Mergeable streaming quantile sketch with relative rank error."""

from .errors import (
    ConsumedError,
    DecodeError,
    InputError,
    InvariantError,
    MergeError,
    ModeError,
    ParameterError,
    QueryError,
    SketchError,
    UnsupportedTypeError,
)
from .codec import deserialize, serialize
from .merge import MergeStats, merge, special_compactions
from .params import (
    Mode,
    Params,
    all_quantiles_adjust,
    derive_highconf,
    derive_mergeable,
    derive_streaming,
    grow,
)
from .sketch import Sketch

__version__ = "0.1.0"

__all__ = [
    "ConsumedError",
    "DecodeError",
    "InputError",
    "InvariantError",
    "MergeError",
    "MergeStats",
    "Mode",
    "ModeError",
    "ParameterError",
    "Params",
    "QueryError",
    "Sketch",
    "SketchError",
    "UnsupportedTypeError",
    "all_quantiles_adjust",
    "derive_highconf",
    "deserialize",
    "derive_mergeable",
    "derive_streaming",
    "grow",
    "merge",
    "serialize",
    "special_compactions",
]
