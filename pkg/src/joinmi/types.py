from enum import Enum


class ValueType(str, Enum):
    """Distribution type of a value column."""

    DISCRETE = "discrete"
    NUMERIC = "numeric"
