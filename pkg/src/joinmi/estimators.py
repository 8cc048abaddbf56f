"""Entropy and mutual information estimators over joined samples (nats).

* MLE: plug-in entropies of the empirical distribution.
* KSG: Kraskov-Stoegbauer-Grassberger, first variant, for continuous pairs.
* MixedKSG: the Gao et al. variant that falls back to plug-in counts where
  points coincide, for numeric columns with ties or discrete atoms.
* DC-KSG: Ross' estimator for one discrete and one continuous column.

k-NN searches use max-norm distances. Small samples are searched by brute
force; larger ones go through a KD-tree, which yields identical counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .table import JoinedSample
from .types import ValueType

DEFAULT_K = 3
BRUTE_FORCE_MAX = 1024
EULER_GAMMA = 0.57721566490153286061


class Estimator(str, Enum):
    MLE = "mle"
    KSG = "ksg"
    MIXED_KSG = "mixed-ksg"
    DC_KSG = "dc-ksg"

    @classmethod
    def parse(cls, name: "str | Estimator") -> "Estimator":
        if isinstance(name, Estimator):
            return name
        key = name.lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown estimator {name!r}") from None


@dataclass(frozen=True)
class MiEstimate:
    estimator: Estimator
    value: float
    sample_size: int
    k: int | None = None
    skipped: int = 0

    def to_dict(self) -> dict:
        return {"estimator": self.estimator.value, "value_nats": self.value,
                "n": self.sample_size, "k": self.k}


# ---------------------------------------------------------------------------
# digamma
# ---------------------------------------------------------------------------

# B_2j / (2j) for j = 1..7
_ASYMPTOTIC = (1.0 / 12, -1.0 / 120, 1.0 / 252, -1.0 / 240, 1.0 / 132, -691.0 / 32760, 1.0 / 12)
_SHIFT_TO = 10.0


def digamma(x: float) -> float:
    """psi(x) for x > 0 via upward recurrence and the asymptotic series."""
    if not x > 0:
        raise ValueError(f"digamma is only defined here for x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_TO:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for c in reversed(_ASYMPTOTIC):
        series = series * inv2 + c
    return acc + math.log(x) - 0.5 / x - series * inv2


def digamma_array(x) -> np.ndarray:
    """Vectorized :func:`digamma`."""
    x = np.array(x, dtype=np.float64, copy=True)
    if np.any(~(x > 0)):
        raise ValueError("digamma is only defined here for x > 0")
    acc = np.zeros_like(x)
    small = x < _SHIFT_TO
    while np.any(small):
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < _SHIFT_TO
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_ASYMPTOTIC):
        series = series * inv2 + c
    return acc + np.log(x) - 0.5 / x - series * inv2


# ---------------------------------------------------------------------------
# plug-in estimators
# ---------------------------------------------------------------------------

def _codes(values: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(values, return_inverse=True)
    return inverse.ravel()


def _entropy_from_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    p = np.sort(counts[counts > 0]) / n
    return -math.fsum((p * np.log(p)).tolist())


def entropy_mle(values) -> float:
    """Plug-in entropy ``-sum p log p`` of the empirical distribution."""
    values = np.asarray(values) if not isinstance(values, np.ndarray) else values
    if len(values) == 0:
        raise ValueError("entropy of an empty sample is undefined")
    return _entropy_from_counts(np.bincount(_codes(values)))


def mi_mle(s: JoinedSample) -> MiEstimate:
    """Plug-in MI ``H(X) + H(Y) - H(X, Y)``; every value is a symbol."""
    if len(s) == 0:
        raise ValueError("cannot estimate MI on an empty sample")
    cx = _codes(s.x)
    cy = _codes(s.y)
    joint = cx.astype(np.int64) * (int(cy.max()) + 1) + cy
    hx = _entropy_from_counts(np.bincount(cx))
    hy = _entropy_from_counts(np.bincount(cy))
    hxy = _entropy_from_counts(np.bincount(_codes(joint)))
    return MiEstimate(Estimator.MLE, hx + hy - hxy, len(s))


# ---------------------------------------------------------------------------
# neighbor searches
# ---------------------------------------------------------------------------

def _as_points(values: np.ndarray) -> np.ndarray:
    pts = np.asarray(values, dtype=np.float64)
    return pts[:, None] if pts.ndim == 1 else pts


def _pairwise_maxnorm(pts: np.ndarray) -> np.ndarray:
    d = np.abs(pts[:, None, 0] - pts[None, :, 0])
    for j in range(1, pts.shape[1]):
        np.maximum(d, np.abs(pts[:, None, j] - pts[None, :, j]), out=d)
    return d


def kth_neighbor_distance(values: np.ndarray, k: int, brute: bool | None = None) -> np.ndarray:
    """Max-norm distance from each point to its k-th nearest other point."""
    pts = _as_points(values)
    n = len(pts)
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    if brute is None:
        brute = n <= BRUTE_FORCE_MAX
    if brute:
        d = _pairwise_maxnorm(pts)
        np.fill_diagonal(d, np.inf)
        return np.partition(d, k - 1, axis=1)[:, k - 1]
    dist, _ = cKDTree(pts).query(pts, k=k + 1, p=np.inf)
    return dist[:, k]


def count_within(values: np.ndarray, radius: np.ndarray, strict: bool,
                 brute: bool | None = None) -> np.ndarray:
    """For each point i, the number of other points j with d(i, j) < r_i (strict) or <= r_i."""
    pts = _as_points(values)
    radius = np.asarray(radius, dtype=np.float64)
    n = len(pts)
    if brute is None:
        brute = n <= BRUTE_FORCE_MAX
    if brute:
        d = _pairwise_maxnorm(pts)
        hits = d < radius[:, None] if strict else d <= radius[:, None]
        counts = hits.sum(axis=1)
        # Self is at distance 0: always a hit for <=, a hit for < only when r > 0.
        return counts - (radius > 0 if strict else 1)
    tree = cKDTree(pts)
    if strict:
        r = np.nextafter(radius, 0.0)
        positive = radius > 0
        counts = np.zeros(n, dtype=np.int64)
        if np.any(positive):
            counts[positive] = tree.query_ball_point(pts[positive], r[positive], p=np.inf,
                                                     return_length=True) - 1
        return counts
    return tree.query_ball_point(pts, radius, p=np.inf, return_length=True) - 1


# ---------------------------------------------------------------------------
# k-NN estimators
# ---------------------------------------------------------------------------

def entropy_spacing_1nn(values) -> float:
    """Differential entropy from sorted spacings, ``psi(N) - psi(1) + mean log spacing``.

    Zero spacings (ties) are floored at ``eps * max(1, range)`` so the log
    stays finite; heavily tied data is therefore biased low.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n < 2:
        raise ValueError("spacing entropy needs at least 2 values")
    spacings = np.diff(x)
    floor = np.finfo(np.float64).eps * max(1.0, float(x[-1] - x[0]))
    spacings = np.maximum(spacings, floor)
    return digamma(n) - digamma(1) + math.fsum(np.log(spacings).tolist()) / (n - 1)


def _numeric(s: JoinedSample, name: str) -> None:
    if s.x_type is not ValueType.NUMERIC or s.y_type is not ValueType.NUMERIC:
        raise TypeError(f"{name} needs two numeric columns, got ({s.x_type.value}, {s.y_type.value})")


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n <= k:
        raise ValueError(f"need more than k={k} samples, got {n}")


def mi_ksg(s: JoinedSample, k: int = DEFAULT_K) -> MiEstimate:
    """KSG estimator (variant 1) with strict marginal counts."""
    _numeric(s, "KSG")
    n = len(s)
    _check_k(k, n)
    x = s.x.astype(np.float64)
    y = s.y.astype(np.float64)
    rho = kth_neighbor_distance(np.column_stack((x, y)), k)
    nx = count_within(x, rho, strict=True)
    ny = count_within(y, rho, strict=True)
    terms = digamma_array(nx + 1) + digamma_array(ny + 1)
    value = digamma(k) + digamma(n) - math.fsum(terms.tolist()) / n
    return MiEstimate(Estimator.KSG, value, n, k)


def mi_mixed_ksg(s: JoinedSample, k: int = DEFAULT_K) -> MiEstimate:
    """Mixed discrete-continuous KSG.

    Each point contributes ``psi(k_i) + log N - psi(n_x,i) - psi(n_y,i)``
    with self-inclusive counts. Where the k-NN distance ``rho_i`` is positive,
    ``k_i = k`` and the marginal counts are taken strictly inside ``rho_i``;
    where it is zero, all three counts are of coincident points, which
    recovers the plug-in estimate on discrete atoms.
    """
    _numeric(s, "MixedKSG")
    n = len(s)
    _check_k(k, n)
    x = s.x.astype(np.float64)
    y = s.y.astype(np.float64)
    pts = np.column_stack((x, y))
    rho = kth_neighbor_distance(pts, k)
    tied = rho == 0
    k_tilde = np.full(n, float(k))
    nx = count_within(x, rho, strict=True) + 1.0
    ny = count_within(y, rho, strict=True) + 1.0
    if np.any(tied):
        zero = np.zeros(n)
        k_tilde[tied] = count_within(pts, zero, strict=False)[tied] + 1.0
        nx[tied] = count_within(x, zero, strict=False)[tied] + 1.0
        ny[tied] = count_within(y, zero, strict=False)[tied] + 1.0
    terms = digamma_array(k_tilde) - digamma_array(nx) - digamma_array(ny)
    return MiEstimate(Estimator.MIXED_KSG, math.log(n) + math.fsum(terms.tolist()) / n, n, k)


def mi_dc_ksg(s: JoinedSample, k: int = DEFAULT_K) -> MiEstimate:
    """Ross' estimator for a discrete column against a continuous one.

    The discrete side is whichever column is tagged DISCRETE. Points whose
    class has at most ``k`` members are dropped and reported in ``skipped``.
    """
    types = (s.x_type, s.y_type)
    if types.count(ValueType.DISCRETE) != 1:
        raise TypeError(f"DC-KSG needs one discrete and one numeric column, got "
                        f"({s.x_type.value}, {s.y_type.value})")
    total = len(s)
    _check_k(k, total)
    if s.x_type is ValueType.DISCRETE:
        labels, cont = s.x, s.y
    else:
        labels, cont = s.y, s.x
    codes = _codes(labels)
    class_sizes = np.bincount(codes)
    keep = class_sizes[codes] > k
    skipped = int((~keep).sum())
    if not np.any(keep):
        raise ValueError(f"every class has at most k={k} members")
    codes = codes[keep]
    y = np.asarray(cont, dtype=np.float64)[keep]
    n = len(y)

    radius = np.empty(n)
    for c in np.unique(codes):
        members = np.flatnonzero(codes == c)
        radius[members] = kth_neighbor_distance(y[members], k)
    m = count_within(y, radius, strict=False)
    sizes = np.bincount(codes)[codes]
    terms = digamma_array(sizes) + digamma_array(m)
    value = digamma(n) + digamma(k) - math.fsum(terms.tolist()) / n
    return MiEstimate(Estimator.DC_KSG, value, total, k, skipped)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def perturb_to_continuous(values, seed: int = 0) -> np.ndarray:
    """Break ties with Gaussian noise of sd ``1e-6 * max(sample sd, 1)``."""
    v = np.asarray(values, dtype=np.float64)
    scale = 1e-6 * max(float(np.std(v, ddof=1)) if len(v) > 1 else 0.0, 1.0)
    rng = np.random.default_rng(seed)
    return v + rng.normal(0.0, scale, size=len(v))


def dispatch_estimator(x_type: ValueType, y_type: ValueType) -> Estimator:
    """MLE for two discrete columns, MixedKSG for two numeric ones, DC-KSG otherwise."""
    x_type, y_type = ValueType(x_type), ValueType(y_type)
    if x_type is ValueType.DISCRETE and y_type is ValueType.DISCRETE:
        return Estimator.MLE
    if x_type is ValueType.NUMERIC and y_type is ValueType.NUMERIC:
        return Estimator.MIXED_KSG
    return Estimator.DC_KSG


def estimate_mi(s: JoinedSample, estimator: "Estimator | str" = "auto", k: int = DEFAULT_K,
                perturb: bool = False, seed: int = 0) -> MiEstimate:
    """Estimate MI with a named estimator, or pick one from the column types.

    With ``perturb``, every numeric column the estimator treats as continuous
    gets tie-breaking noise first.
    """
    if estimator == "auto":
        est = dispatch_estimator(s.x_type, s.y_type)
    else:
        est = Estimator.parse(estimator)
    if est is Estimator.MLE:
        return mi_mle(s)
    if perturb:
        x = perturb_to_continuous(s.x, seed) if s.x_type is ValueType.NUMERIC else s.x
        y = perturb_to_continuous(s.y, seed + 1) if s.y_type is ValueType.NUMERIC else s.y
        s = JoinedSample(x, y, s.x_type, s.y_type)
    if est is Estimator.KSG:
        return mi_ksg(s, k)
    if est is Estimator.MIXED_KSG:
        return mi_mixed_ksg(s, k)
    return mi_dc_ksg(s, k)
