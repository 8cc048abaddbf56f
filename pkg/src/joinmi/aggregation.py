"""Featurization functions that collapse repeated candidate keys to one value."""

from __future__ import annotations

from collections import Counter
from enum import Enum
from typing import Sequence

import numpy as np

from .types import ValueType


class Agg(str, Enum):
    AVG = "avg"
    SUM = "sum"
    MIN = "min"
    MAX = "max"
    COUNT = "count"
    MODE = "mode"
    FIRST = "first"

    @classmethod
    def parse(cls, name: "str | Agg") -> "Agg":
        if isinstance(name, Agg):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown aggregate {name!r} (choose from {choices})") from None


_NUMERIC_ONLY = {Agg.AVG, Agg.SUM, Agg.MIN, Agg.MAX}


def output_type(agg: Agg, input_type: ValueType) -> ValueType:
    """Type of the column produced by applying ``agg`` to ``input_type`` values."""
    if agg in _NUMERIC_ONLY and input_type is not ValueType.NUMERIC:
        raise TypeError(f"{agg.value.upper()} requires numeric input, got {input_type.value}")
    if agg is Agg.COUNT:
        return ValueType.NUMERIC
    return input_type


def default_agg(value_type: ValueType) -> Agg:
    """AVG for numeric columns, MODE for discrete ones."""
    return Agg.AVG if value_type is ValueType.NUMERIC else Agg.MODE


def _infer_type(values: Sequence) -> ValueType:
    if all(isinstance(v, str) for v in values):
        return ValueType.DISCRETE
    return ValueType.NUMERIC


def aggregate(values: Sequence, agg: "Agg | str", value_type: ValueType | None = None):
    """Collapse a non-empty group of values into one.

    MODE breaks ties by first occurrence; FIRST returns the first value in
    input order.
    """
    agg = Agg.parse(agg)
    if len(values) == 0:
        raise ValueError("cannot aggregate an empty group")
    if value_type is None:
        value_type = _infer_type(values)
    output_type(agg, value_type)

    if agg is Agg.COUNT:
        return float(len(values))
    if agg is Agg.FIRST:
        return values[0]
    if agg is Agg.MODE:
        counts = Counter(values)
        best = max(counts.values())
        # Counter preserves insertion order, so this is the earliest of the tied values.
        return next(v for v, c in counts.items() if c == best)

    arr = np.asarray(values, dtype=np.float64)
    if agg is Agg.AVG:
        return float(arr.mean())
    if agg is Agg.SUM:
        return float(arr.sum())
    if agg is Agg.MIN:
        return float(arr.min())
    return float(arr.max())


def aggregate_by_key(keys: Sequence[str], values: Sequence, value_type: ValueType,
                     agg: "Agg | str") -> tuple[list[str], list[int], np.ndarray, ValueType]:
    """Group ``values`` by key and aggregate each group.

    Returns ``(unique_keys, first_rows, aggregated, out_type)`` with keys in
    first-occurrence order; ``first_rows[i]`` is the row index where
    ``unique_keys[i]`` first appears.
    """
    agg = Agg.parse(agg)
    out_type = output_type(agg, value_type)
    groups: dict[str, list[int]] = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)

    unique_keys = list(groups)
    first_rows = [rows[0] for rows in groups.values()]
    if agg is Agg.FIRST:
        out = [values[r] for r in first_rows]
    elif agg is Agg.COUNT:
        out = [float(len(rows)) for rows in groups.values()]
    else:
        out = [aggregate([values[r] for r in rows], agg, value_type) for rows in groups.values()]
    return unique_keys, first_rows, _column(out, out_type), out_type


def _column(values: Sequence, value_type: ValueType) -> np.ndarray:
    if value_type is ValueType.NUMERIC:
        return np.asarray(values, dtype=np.float64)
    arr = np.empty(len(values), dtype=object)
    arr[:] = list(values)
    return arr
