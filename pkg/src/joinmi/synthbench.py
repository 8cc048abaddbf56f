"""Synthetic (X, Y) generators with exactly known MI, split into joinable tables.

Trinomial draws ``(X, Y)`` as the first two counts of ``m`` categorical
trials with probabilities ``(p1, p2, 1 - p1 - p2)``. CDUnif draws
``X ~ Unif{0..m-1}`` and ``Y ~ Unif[X, X + 2]``.

Both are decomposed into a training table ``[K_Y, Y]`` and an augmentation
table ``[K_X, X]`` whose left join reproduces the generated pairs:
``KeyInd`` uses sequential unique keys, ``KeyDep`` uses the text of ``X``
itself as the key (many-to-one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .table import TwoColumnTable
from .types import ValueType

DEFAULT_ROWS = 10_000
P_RANGE = (0.15, 0.85)
MAX_TARGET_MI = 3.5
MAX_PARAM_DRAWS = 10_000
_TRIAL_CHUNK = 4_000_000


class KeyMode(str, Enum):
    KEY_IND = "ind"
    KEY_DEP = "dep"

    @classmethod
    def parse(cls, name: "str | KeyMode") -> "KeyMode":
        if isinstance(name, KeyMode):
            return name
        aliases = {"ind": cls.KEY_IND, "keyind": cls.KEY_IND, "dep": cls.KEY_DEP, "keydep": cls.KEY_DEP}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown key mode {name!r}") from None

    @property
    def label(self) -> str:
        return "KeyInd" if self is KeyMode.KEY_IND else "KeyDep"


@dataclass(frozen=True)
class TrinomialSpec:
    m: int
    p1: float
    p2: float
    target_mi: float = float("nan")
    n_rows: int = DEFAULT_ROWS
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not (0 < self.p1 < 1 and 0 < self.p2 < 1 and self.p1 + self.p2 < 1):
            raise ValueError(f"invalid trinomial probabilities ({self.p1}, {self.p2})")


@dataclass(frozen=True)
class CDUnifSpec:
    m: int
    n_rows: int = DEFAULT_ROWS
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")


@dataclass(eq=False)
class SynthInstance:
    train: TwoColumnTable
    aug: TwoColumnTable
    true_mi: float
    key_mode: KeyMode
    spec: TrinomialSpec | CDUnifSpec
    x: np.ndarray
    y: np.ndarray


# --------------------------------------------------------------------------
# Trinomial
# --------------------------------------------------------------------------

def correlation_for_mi(target_mi: float) -> float:
    """Correlation magnitude of a bivariate normal with MI ``target_mi``."""
    return math.sqrt(1.0 - math.exp(-2.0 * target_mi))


def trinomial_correlation(p1: float, p2: float) -> float:
    """Pearson correlation of the first two trinomial counts (always negative)."""
    return -p1 * p2 / (math.sqrt(p1 * (1 - p1)) * math.sqrt(p2 * (1 - p2)))


def select_trinomial_params(target_mi: float, rng: np.random.Generator | int | None = None,
                            max_draws: int = MAX_PARAM_DRAWS) -> tuple[float, float]:
    """Pick ``(p1, p2)`` whose normal-approximation MI equals ``target_mi``.

    ``p1`` is drawn from ``Unif(0.15, 0.85)`` and ``p2`` solves
    ``|corr(p1, p2)| = r``; draws are repeated until ``p2`` lands in
    ``[0.15, 0.85]``.
    """
    if not 0 < target_mi <= MAX_TARGET_MI:
        raise ValueError(f"target MI must be in (0, {MAX_TARGET_MI}], got {target_mi}")
    rng = np.random.default_rng(rng)
    r2 = correlation_for_mi(target_mi) ** 2
    lo, hi = P_RANGE
    for _ in range(max_draws):
        p1 = float(rng.uniform(lo, hi))
        odds1 = p1 / (1.0 - p1)
        # r^2 = odds(p1) * odds(p2)  =>  p2 = r^2 / (odds(p1) + r^2)
        p2 = r2 / (odds1 + r2)
        if lo <= p2 <= hi:
            return p1, p2
    raise RuntimeError(f"no (p1, p2) in {P_RANGE} found for target MI {target_mi} "
                       f"after {max_draws} draws")


def _binomial_log_pmf(m: int, p: float) -> np.ndarray:
    i = np.arange(m + 1, dtype=np.float64)
    return (gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1)
            + i * math.log(p) + (m - i) * math.log1p(-p))


def _entropy_from_log_pmf(logp: np.ndarray) -> float:
    p = np.exp(logp)
    terms = np.where(p > 0, -p * logp, 0.0)
    return math.fsum(terms.ravel().tolist())


def true_mi_trinomial(m: int, p1: float, p2: float) -> float:
    """Exact MI (nats) between the first two counts of ``Mult(m, (p1, p2, p3))``."""
    p3 = 1.0 - p1 - p2
    i = np.arange(m + 1, dtype=np.float64)[:, None]
    j = np.arange(m + 1, dtype=np.float64)[None, :]
    rest = m - i - j
    valid = rest >= 0
    rest_safe = np.where(valid, rest, 0.0)
    logp = (gammaln(m + 1) - gammaln(i + 1) - gammaln(j + 1) - gammaln(rest_safe + 1)
            + i * math.log(p1) + j * math.log(p2) + rest_safe * math.log(p3))
    h_xy = _entropy_from_log_pmf(logp[valid])
    h_x = _entropy_from_log_pmf(_binomial_log_pmf(m, p1))
    h_y = _entropy_from_log_pmf(_binomial_log_pmf(m, p2))
    return h_x + h_y - h_xy


def sample_trinomial(spec: TrinomialSpec) -> tuple[np.ndarray, np.ndarray]:
    """``n_rows`` draws of (count of outcome 1, count of outcome 2) over ``m`` trials."""
    rng = np.random.default_rng(spec.seed)
    x = np.empty(spec.n_rows, dtype=np.int64)
    y = np.empty(spec.n_rows, dtype=np.int64)
    cut = spec.p1 + spec.p2
    rows_per_chunk = max(1, _TRIAL_CHUNK // spec.m)
    for start in range(0, spec.n_rows, rows_per_chunk):
        stop = min(spec.n_rows, start + rows_per_chunk)
        u = rng.random((stop - start, spec.m))
        first = u < spec.p1
        x[start:stop] = first.sum(axis=1)
        y[start:stop] = (u < cut).sum(axis=1) - x[start:stop]
    return x, y


# --------------------------------------------------------------------------
# CDUnif
# --------------------------------------------------------------------------

def true_mi_cdunif(m: int) -> float:
    """``log(m) - (m - 1) log(2) / m``."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    return math.log(m) - (m - 1) * math.log(2) / m


def sample_cdunif(spec: CDUnifSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    x = rng.integers(0, spec.m, size=spec.n_rows)
    y = x + rng.uniform(0.0, 2.0, size=spec.n_rows)
    return x, y


# --------------------------------------------------------------------------
# decomposition
# --------------------------------------------------------------------------

def key_text(v) -> str:
    """Decimal text of a key value; integral floats render without a fraction."""
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def decompose(x, y, mode: "KeyMode | str") -> tuple[TwoColumnTable, TwoColumnTable]:
    """Split pairs into ``(train[K_Y, Y], aug[K_X, X])`` whose left join gives back the pairs."""
    mode = KeyMode.parse(mode)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("x and y must have the same length")
    if mode is KeyMode.KEY_IND:
        keys = [str(i) for i in range(len(x))]
        train = TwoColumnTable(keys, y, ValueType.NUMERIC, name="train", key_name="K_Y", value_name="Y")
        aug = TwoColumnTable(list(keys), x, ValueType.NUMERIC, name="aug", key_name="K_X", value_name="X")
        return train, aug

    if not np.all(np.equal(np.mod(x, 1.0), 0.0)):
        raise ValueError("KeyDep needs discrete (integer-valued) x")
    train_keys = [key_text(v) for v in x]
    distinct: dict[str, float] = {}
    for k, v in zip(train_keys, x.tolist()):
        distinct.setdefault(k, v)
    train = TwoColumnTable(train_keys, y, ValueType.NUMERIC, name="train", key_name="K_Y", value_name="Y")
    aug = TwoColumnTable(list(distinct), list(distinct.values()), ValueType.NUMERIC,
                         name="aug", key_name="K_X", value_name="X")
    return train, aug


def make_instance(spec: TrinomialSpec | CDUnifSpec, mode: "KeyMode | str") -> SynthInstance:
    if isinstance(spec, TrinomialSpec):
        x, y = sample_trinomial(spec)
        true_mi = true_mi_trinomial(spec.m, spec.p1, spec.p2)
    else:
        x, y = sample_cdunif(spec)
        true_mi = true_mi_cdunif(spec.m)
    mode = KeyMode.parse(mode)
    train, aug = decompose(x, y, mode)
    return SynthInstance(train, aug, true_mi, mode, spec, x, y)
