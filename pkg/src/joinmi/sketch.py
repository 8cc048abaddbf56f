"""Fixed-budget sketches of two-column tables and the sketch join.

Five builders share one layout: each keeps a set of ``<h(k), value>``
entries chosen by a different sampling rule.

* TUPSK ranks rows by the hash of the occurrence-indexed key ``<k, j>`` so
  every training row has the same inclusion probability.
* LV2SK keeps the ``n`` keys with the smallest hash, then ``max(1, floor(n N_k / N))``
  rows of each.
* PRISK is LV2SK with a frequency-weighted (priority sampling) first level.
* INDSK samples rows (or aggregated keys) by independent coin flips.
* CSK keeps the ``n`` smallest-hash keys with the first value seen for each.

The augmentation side (``Side.AUG``) is always aggregated to unique keys
before selection, so joining two sketches on the key hash never fans out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .aggregation import Agg, aggregate_by_key
from .hashing import HASH_CONTRACT, hash_derived_key, hash_key, unit_hash_array
from .table import JoinedSample, TwoColumnTable, as_column
from .types import ValueType

FORMAT_VERSION = 1
_MIN_UNIT_HASH = 2.0 ** -32


class Method(str, Enum):
    TUPSK = "tupsk"
    LV2SK = "lv2sk"
    PRISK = "prisk"
    INDSK = "indsk"
    CSK = "csk"

    @classmethod
    def parse(cls, name: "str | Method") -> "Method":
        if isinstance(name, Method):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown sketch method {name!r}") from None


class Side(str, Enum):
    TRAIN = "train"
    AUG = "aug"


class SketchError(ValueError):
    pass


@dataclass(eq=False)
class Sketch:
    method: Method
    side: Side
    n: int
    agg: Agg | None
    seed: int
    key_hashes: np.ndarray
    values: np.ndarray
    value_type: ValueType
    source_n: int
    source_distinct: int
    format_version: int = FORMAT_VERSION

    def __len__(self) -> int:
        return len(self.key_hashes)

    def to_dict(self) -> dict:
        order = np.argsort(self.key_hashes, kind="stable")
        tag = "n" if self.value_type is ValueType.NUMERIC else "d"
        if self.value_type is ValueType.NUMERIC:
            vals = [float(v) for v in self.values[order]]
        else:
            vals = [str(v) for v in self.values[order]]
        return {
            "format_version": self.format_version,
            "method": self.method.value,
            "side": self.side.value,
            "n": self.n,
            "agg": self.agg.value if self.agg is not None else None,
            "seed": self.seed,
            "source_N": self.source_n,
            "source_m_K": self.source_distinct,
            "hash": HASH_CONTRACT,
            "entries": [{"kh": int(kh), "t": tag, "v": v}
                        for kh, v in zip(self.key_hashes[order].tolist(), vals)],
        }

    def to_json(self) -> str:
        """Canonical serialization: entries sorted by key hash, fixed key order."""
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "Sketch":
        if doc.get("format_version") != FORMAT_VERSION:
            raise SketchError(f"unsupported sketch format_version {doc.get('format_version')!r}")
        if doc.get("hash") != HASH_CONTRACT:
            raise SketchError(f"sketch hash contract {doc.get('hash')!r} != {HASH_CONTRACT!r}")
        entries = doc["entries"]
        tags = {e["t"] for e in entries}
        if len(tags) > 1:
            raise SketchError("sketch mixes discrete and numeric entries")
        value_type = ValueType.DISCRETE if tags == {"d"} else ValueType.NUMERIC
        return cls(
            method=Method.parse(doc["method"]),
            side=Side(doc["side"]),
            n=int(doc["n"]),
            agg=Agg.parse(doc["agg"]) if doc.get("agg") else None,
            seed=int(doc["seed"]),
            key_hashes=np.array([e["kh"] for e in entries], dtype=np.uint32),
            values=as_column([e["v"] for e in entries], value_type),
            value_type=value_type,
            source_n=int(doc["source_N"]),
            source_distinct=int(doc["source_m_K"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Sketch":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Sketch":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(eq=False)
class SketchJoin:
    sample: JoinedSample
    matched_keys: int

    def __len__(self) -> int:
        return len(self.sample)


def _check_budget(n: int) -> None:
    if n < 1:
        raise ValueError(f"sketch budget n must be >= 1, got {n}")


def _key_hashes(keys: list[str]) -> np.ndarray:
    return np.fromiter((hash_key(k) for k in keys), dtype=np.uint32, count=len(keys))


def _smallest(u: np.ndarray, key_hashes: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` smallest ``u``; ties broken by key hash then row index."""
    order = np.lexsort((rows, key_hashes, u))
    return order[:n]


def _aggregated(t: TwoColumnTable, agg: Agg | None):
    if agg is None:
        raise SketchError("an aggregate function is required for the AUG side")
    keys, first_rows, values, out_type = aggregate_by_key(t.keys, t.values, t.value_type, agg)
    return keys, np.asarray(first_rows, dtype=np.int64), values, out_type


def _sketch(method, side, n, agg, seed, t, distinct, key_hashes, values, value_type) -> Sketch:
    return Sketch(method, side, n, agg, seed, np.asarray(key_hashes, dtype=np.uint32),
                  as_column(values, value_type), value_type, len(t), distinct)


def _distinct_keys(t: TwoColumnTable) -> tuple[list[str], np.ndarray, np.ndarray, list[list[int]]]:
    """Distinct keys in first-occurrence order with first row, count and row lists."""
    groups: dict[str, list[int]] = {}
    for i, k in enumerate(t.keys):
        groups.setdefault(k, []).append(i)
    keys = list(groups)
    rows = list(groups.values())
    first = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
    counts = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
    return keys, first, counts, rows


def build_tupsk(t: TwoColumnTable, side: Side, n: int, agg: Agg | None = None, seed: int = 0) -> Sketch:
    """Tuple-based sketch.

    TRAIN rows are ranked by ``h_u(<k, j>)`` where ``j`` is the 1-based
    occurrence index of ``k`` in table order; AUG keys are aggregated and
    ranked by ``h_u(<k, 1>)``. The ``n`` smallest are kept.
    """
    _check_budget(n)
    side = Side(side)
    if side is Side.TRAIN:
        seen: dict[str, int] = {}
        derived = np.empty(len(t), dtype=np.uint32)
        for i, k in enumerate(t.keys):
            j = seen.get(k, 0) + 1
            seen[k] = j
            derived[i] = hash_derived_key(k, j)
        kh = _key_hashes(t.keys)
        chosen = _smallest(unit_hash_array(derived), kh, np.arange(len(t)), n)
        return _sketch(Method.TUPSK, side, n, agg, seed, t, len(seen), kh[chosen],
                       t.values[chosen], t.value_type)

    keys, first_rows, values, out_type = _aggregated(t, agg)
    derived = np.fromiter((hash_derived_key(k, 1) for k in keys), dtype=np.uint32, count=len(keys))
    kh = _key_hashes(keys)
    chosen = _smallest(unit_hash_array(derived), kh, first_rows, n)
    return _sketch(Method.TUPSK, side, n, agg, seed, t, len(keys), kh[chosen], values[chosen], out_type)


def per_key_sample_size(n: int, key_count: int, n_rows: int) -> int:
    """Second-level sample size ``max(1, floor(n * N_k / N))``, capped at ``N_k``."""
    return min(key_count, max(1, (n * key_count) // n_rows))


def _reservoir(seed: int, key_hash: int, rows: list[int], size: int) -> list[int]:
    """``size`` rows of one key, uniformly without replacement, in table order.

    Each row gets a random tag from a stream seeded by ``(seed, key_hash)``;
    the ``size`` smallest tags win, i.e. the head of a priority reservoir.
    """
    if size >= len(rows):
        return rows
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, int(key_hash)])
    tags = rng.random(len(rows))
    keep = np.sort(np.argsort(tags, kind="stable")[:size])
    return [rows[i] for i in keep]


def _two_level(method: Method, t: TwoColumnTable, side: Side, n: int, agg: Agg | None, seed: int,
               priority: bool) -> Sketch:
    _check_budget(n)
    side = Side(side)
    keys, first, counts, rows = _distinct_keys(t)
    kh = _key_hashes(keys)
    u = unit_hash_array(kh)
    if priority:
        # Largest N_k / u first: sort ascending on the negated priority.
        score = -(counts / np.maximum(u, _MIN_UNIT_HASH))
    else:
        score = u
    chosen = _smallest(score, kh, first, n)

    if side is Side.AUG:
        if agg is None:
            raise SketchError("an aggregate function is required for the AUG side")
        # Only the selected keys are aggregated.
        sel_keys = [keys[c] for c in chosen for _ in rows[c]]
        sel_rows = np.asarray([i for c in chosen for i in rows[c]], dtype=np.int64)
        _, _, values, out_type = aggregate_by_key(sel_keys, t.values[sel_rows], t.value_type, agg)
        return _sketch(method, side, n, agg, seed, t, len(keys), kh[chosen], values, out_type)

    picked: list[int] = []
    picked_hashes: list[int] = []
    for c in chosen:
        size = per_key_sample_size(n, int(counts[c]), len(t))
        sub = _reservoir(seed, int(kh[c]), rows[c], size)
        picked.extend(sub)
        picked_hashes.extend([int(kh[c])] * len(sub))
    idx = np.asarray(picked, dtype=np.int64)
    return _sketch(method, side, n, agg, seed, t, len(keys), picked_hashes, t.values[idx], t.value_type)


def build_lv2sk(t: TwoColumnTable, side: Side, n: int, agg: Agg | None = None, seed: int = 0) -> Sketch:
    """Two-level sketch: min-hash keys, then frequency-proportional rows per key."""
    return _two_level(Method.LV2SK, t, side, n, agg, seed, priority=False)


def build_prisk(t: TwoColumnTable, side: Side, n: int, agg: Agg | None = None, seed: int = 0) -> Sketch:
    """Two-level sketch whose first level keeps the keys with largest ``N_k / h_u(k)``."""
    return _two_level(Method.PRISK, t, side, n, agg, seed, priority=True)


_SIDE_STREAM = {Side.TRAIN: 0x7A11, Side.AUG: 0xA06}


def build_indsk(t: TwoColumnTable, side: Side, n: int, agg: Agg | None = None, seed: int = 0) -> Sketch:
    """Independent Bernoulli sample at rate ``n/N`` (rows) or ``n/m_K`` (aggregated keys).

    Coin flips come from a generator seeded by ``(seed, side)`` and never
    look at the key hashes, so the two sides are not coordinated.
    """
    _check_budget(n)
    side = Side(side)
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, _SIDE_STREAM[side]])
    if side is Side.TRAIN:
        rate = min(1.0, n / len(t)) if len(t) else 1.0
        keep = np.flatnonzero(rng.random(len(t)) < rate)
        kh = _key_hashes([t.keys[i] for i in keep])
        distinct = len(set(t.keys))
        return _sketch(Method.INDSK, side, n, agg, seed, t, distinct, kh, t.values[keep], t.value_type)

    keys, _, values, out_type = _aggregated(t, agg)
    rate = min(1.0, n / len(keys)) if keys else 1.0
    keep = np.flatnonzero(rng.random(len(keys)) < rate)
    kh = _key_hashes([keys[i] for i in keep])
    return _sketch(Method.INDSK, side, n, agg, seed, t, len(keys), kh, values[keep], out_type)


def build_csk(t: TwoColumnTable, side: Side, n: int, seed: int = 0) -> Sketch:
    """Min-hash keys with the first value seen for each (no aggregation)."""
    _check_budget(n)
    side = Side(side)
    keys, first, _, _ = _distinct_keys(t)
    kh = _key_hashes(keys)
    chosen = _smallest(unit_hash_array(kh), kh, first, n)
    return _sketch(Method.CSK, side, n, Agg.FIRST, seed, t, len(keys), kh[chosen],
                   t.values[first[chosen]], t.value_type)


def build_sketch(t: TwoColumnTable, method: "Method | str", side: "Side | str", n: int,
                 agg: "Agg | str | None" = None, seed: int = 0) -> Sketch:
    """Dispatch to the builder for ``method``."""
    method = Method.parse(method)
    side = Side(side)
    agg = Agg.parse(agg) if agg is not None else None
    if method is Method.CSK:
        return build_csk(t, side, n, seed)
    builder = {
        Method.TUPSK: build_tupsk,
        Method.LV2SK: build_lv2sk,
        Method.PRISK: build_prisk,
        Method.INDSK: build_indsk,
    }[method]
    return builder(t, side, n, agg, seed)


def join_sketches(s_train: Sketch, s_aug: Sketch) -> SketchJoin:
    """Equi-join two sketches on key hash.

    Each training entry whose hash is present in ``s_aug`` yields
    ``(aug value, train value)``, in training-entry order.
    """
    lookup: dict[int, int] = {}
    for i, kh in enumerate(s_aug.key_hashes.tolist()):
        if kh in lookup:
            raise SketchError("augmentation sketch has repeated key hashes")
        lookup[kh] = i
    xi: list[int] = []
    yi: list[int] = []
    matched: set[int] = set()
    for j, kh in enumerate(s_train.key_hashes.tolist()):
        i = lookup.get(kh)
        if i is not None:
            xi.append(i)
            yi.append(j)
            matched.add(kh)
    sample = JoinedSample(s_aug.values[np.asarray(xi, dtype=np.int64)],
                          s_train.values[np.asarray(yi, dtype=np.int64)],
                          s_aug.value_type, s_train.value_type)
    return SketchJoin(sample, len(matched))
