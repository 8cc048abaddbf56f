"""Two-column (key, value) tables, CSV ingestion and the exact left join."""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import Agg, _column, aggregate_by_key
from .types import ValueType

log = logging.getLogger(__name__)

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_NON_FINITE = {"nan", "+nan", "-nan", "inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"}


class TableError(ValueError):
    """Raised for unusable table input (missing columns, no surviving rows)."""


def parses_as_number(cell: str) -> bool:
    """True for decimal / scientific literals, including spelled-out NaN and infinities."""
    s = cell.strip()
    return bool(_NUMBER.match(s)) or s.lower() in _NON_FINITE


def as_column(values: Sequence, value_type: ValueType) -> np.ndarray:
    return _column(values, value_type)


@dataclass(eq=False)
class TwoColumnTable:
    """A join-key column paired with a homogeneously typed value column."""

    keys: list[str]
    values: np.ndarray
    value_type: ValueType
    name: str = ""
    key_name: str = "key"
    value_name: str = "value"
    dropped_rows: int = 0

    def __post_init__(self):
        self.keys = [str(k) for k in self.keys]
        self.value_type = ValueType(self.value_type)
        self.values = as_column(self.values, self.value_type)
        if len(self.keys) != len(self.values):
            raise TableError(f"{len(self.keys)} keys but {len(self.values)} values")
        if self.value_type is ValueType.NUMERIC and not np.all(np.isfinite(self.values)):
            raise TableError("numeric values must be finite")

    def __len__(self) -> int:
        return len(self.keys)

    @classmethod
    def from_pairs(cls, keys: Sequence, values: Sequence, value_type: ValueType | None = None,
                   **kwargs) -> "TwoColumnTable":
        if value_type is None:
            value_type = (ValueType.DISCRETE if any(isinstance(v, str) for v in values)
                          else ValueType.NUMERIC)
        return cls(list(keys), values, value_type, **kwargs)


@dataclass(frozen=True)
class KeyStats:
    n_rows: int
    distinct_count: int
    frequencies: dict[str, int] = field(default_factory=dict)


def key_stats(t: TwoColumnTable) -> KeyStats:
    """Exact frequency table of the key column (keys in first-occurrence order)."""
    freq = dict(Counter(t.keys))
    return KeyStats(len(t), len(freq), freq)


@dataclass(eq=False)
class JoinedSample:
    """Paired (x, y) values: x is the augmentation feature, y the training target."""

    x: np.ndarray
    y: np.ndarray
    x_type: ValueType
    y_type: ValueType

    def __post_init__(self):
        self.x_type = ValueType(self.x_type)
        self.y_type = ValueType(self.y_type)
        self.x = as_column(self.x, self.x_type)
        self.y = as_column(self.y, self.y_type)
        if len(self.x) != len(self.y):
            raise ValueError(f"x has {len(self.x)} values but y has {len(self.y)}")

    def __len__(self) -> int:
        return len(self.x)

    def swapped(self) -> "JoinedSample":
        return JoinedSample(self.y, self.x, self.y_type, self.x_type)

    def retyped(self, x_type: ValueType | None = None, y_type: ValueType | None = None) -> "JoinedSample":
        """Same pairs with different type tags (e.g. integer codes treated as labels)."""
        return JoinedSample(self.x, self.y, x_type or self.x_type, y_type or self.y_type)

    def pairs(self) -> list[tuple]:
        return list(zip(self.x.tolist(), self.y.tolist()))


@lru_cache(maxsize=64)
def _read_csv_cached(path: str, delimiter: str, mtime: float) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: missing header row") from None
        columns: list[list[str]] = [[] for _ in header]
        for row in reader:
            if not row:
                continue
            for i in range(len(header)):
                columns[i].append(row[i] if i < len(row) else "")
    return header, columns


def read_csv_columns(path: str | Path, delimiter: str = ",") -> tuple[list[str], list[list[str]]]:
    """Header and raw text columns of a CSV file (rows padded to header width)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return _read_csv_cached(str(path.resolve()), delimiter, path.stat().st_mtime)


def infer_type(cells: Sequence[str]) -> ValueType:
    """NUMERIC iff every non-empty cell parses as a number."""
    non_empty = [c for c in cells if c.strip() != ""]
    if non_empty and all(parses_as_number(c) for c in non_empty):
        return ValueType.NUMERIC
    return ValueType.DISCRETE


def load_csv(path: str | Path, key_column: str, value_column: str,
             delimiter: str = ",") -> TwoColumnTable:
    """Load one (key, value) column pair from a CSV file.

    Rows with an empty key, an empty value or a non-finite number are
    dropped; the count is kept in ``dropped_rows``.
    """
    header, columns = read_csv_columns(path, delimiter)
    for col in (key_column, value_column):
        if col not in header:
            raise TableError(f"{path}: no column named {col!r} (have {header})")
    key_cells = columns[header.index(key_column)]
    value_cells = columns[header.index(value_column)]
    value_type = infer_type(value_cells)

    keys: list[str] = []
    values: list = []
    dropped = 0
    for k, v in zip(key_cells, value_cells):
        if k == "" or v.strip() == "":
            dropped += 1
            continue
        if value_type is ValueType.NUMERIC:
            num = float(v)
            if not math.isfinite(num):
                dropped += 1
                continue
            values.append(num)
        else:
            values.append(v)
        keys.append(k)

    if not keys:
        raise TableError(f"{path}: zero surviving rows for ({key_column}, {value_column})")
    if dropped:
        log.debug("%s: dropped %d rows for (%s, %s)", path, dropped, key_column, value_column)
    return TwoColumnTable(keys, values, value_type, name=Path(path).stem,
                          key_name=key_column, value_name=value_column, dropped_rows=dropped)


@dataclass(frozen=True)
class ColumnPair:
    path: Path
    key_column: str
    value_column: str

    @property
    def label(self) -> str:
        return f"{self.path.name}:{self.key_column}:{self.value_column}"


def enumerate_column_pairs(corpus_dir: str | Path, delimiter: str = ",") -> list[ColumnPair]:
    """Every (text key column, value column) pair of every CSV under ``corpus_dir``.

    Files are visited in sorted path order and pairs in column-index order.
    Unreadable files are skipped and counted in a warning.
    """
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {corpus_dir}")
    pairs: list[ColumnPair] = []
    skipped = 0
    for path in sorted(corpus_dir.rglob("*.csv")):
        try:
            header, columns = read_csv_columns(path, delimiter)
        except (OSError, UnicodeDecodeError, csv.Error, TableError):
            skipped += 1
            continue
        types = [infer_type(col) for col in columns]
        for ki, key in enumerate(header):
            if types[ki] is not ValueType.DISCRETE:
                continue
            for vi, value in enumerate(header):
                if vi != ki:
                    pairs.append(ColumnPair(path, key, value))
    if skipped:
        log.warning("skipped %d unreadable file(s) under %s", skipped, corpus_dir)
    return pairs


def full_left_join(train: TwoColumnTable, aug: TwoColumnTable, agg: "Agg | str") -> JoinedSample:
    """Exact left join of ``train`` with ``aug`` aggregated by key.

    ``aug`` is grouped by key and collapsed with ``agg``; each train row whose
    key is present emits ``(aggregated aug value, train value)`` in train
    order. Rows without a match are discarded (the NULL-discard rule).
    """
    unique_keys, _, agg_values, x_type = aggregate_by_key(aug.keys, aug.values, aug.value_type, agg)
    lookup = {k: i for i, k in enumerate(unique_keys)}
    rows = [(lookup[k], i) for i, k in enumerate(train.keys) if k in lookup]
    xi = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
    yi = np.fromiter((r[1] for r in rows), dtype=np.int64, count=len(rows))
    return JoinedSample(agg_values[xi], train.values[yi], x_type, train.value_type)
