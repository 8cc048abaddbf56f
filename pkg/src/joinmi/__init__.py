"""Estimate mutual information across table joins from small sketches."""

from .aggregation import Agg, aggregate, aggregate_by_key, default_agg
from .estimators import (
    Estimator,
    MiEstimate,
    dispatch_estimator,
    entropy_mle,
    entropy_spacing_1nn,
    estimate_mi,
    mi_dc_ksg,
    mi_ksg,
    mi_mixed_ksg,
    mi_mle,
)
from .hashing import hash_derived_key, hash_key, unit_hash
from .sketch import Method, Side, Sketch, SketchJoin, build_sketch, join_sketches
from .table import JoinedSample, TableError, TwoColumnTable, full_left_join, load_csv
from .types import ValueType

__version__ = "0.1.0"

__all__ = [
    "Agg", "aggregate", "aggregate_by_key", "default_agg",
    "Estimator", "MiEstimate", "dispatch_estimator", "entropy_mle", "entropy_spacing_1nn",
    "estimate_mi", "mi_dc_ksg", "mi_ksg", "mi_mixed_ksg", "mi_mle",
    "hash_derived_key", "hash_key", "unit_hash",
    "Method", "Side", "Sketch", "SketchJoin", "build_sketch", "join_sketches",
    "JoinedSample", "TableError", "TwoColumnTable", "full_left_join", "load_csv",
    "ValueType", "__version__",
]
