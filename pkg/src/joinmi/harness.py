"""Experiment runner: sketch-based MI estimates against a reference.

Synthetic sweeps compare against the analytic MI of the generator; real
corpus sweeps compare against the estimate computed on the full join.
Results are flat :class:`ExperimentRow` records that :func:`summarize`
groups into error and correlation metrics and :func:`emit_report` writes to
disk.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
from scipy import stats

from .aggregation import Agg, default_agg
from .estimators import DEFAULT_K, Estimator, dispatch_estimator, estimate_mi, perturb_to_continuous
from .sketch import Method, Side, SketchError, build_sketch, join_sketches
from .synthbench import (
    CDUnifSpec,
    KeyMode,
    MAX_TARGET_MI,
    TrinomialSpec,
    decompose,
    sample_cdunif,
    sample_trinomial,
    select_trinomial_params,
    true_mi_cdunif,
    true_mi_trinomial,
)
from .table import ColumnPair, JoinedSample, TableError, enumerate_column_pairs, full_left_join, load_csv
from .types import ValueType

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
ROW_COLUMNS = ("dataset", "key_mode", "dist", "m", "method", "n", "estimator", "seed",
               "sketch_join_size", "full_join_size", "mi_sketch", "mi_fulljoin", "mi_true")
SUMMARY_COLUMNS = ("count", "excluded", "mse", "rmse", "pearson_r", "spearman_r",
                   "avg_sketch_join_size", "join_size_pct")
DEFAULT_ESTIMATORS = {
    "trinomial": (Estimator.MLE, Estimator.MIXED_KSG, Estimator.DC_KSG),
    "cdunif": (Estimator.MIXED_KSG, Estimator.DC_KSG),
}
TRUE_MI = "true"
FULL_JOIN = "full"


@dataclass
class ExperimentRow:
    dataset: str
    key_mode: str
    dist: str
    m: int | None
    method: str
    n: int
    estimator: str
    seed: int
    sketch_join_size: int
    full_join_size: int
    mi_sketch: float | None = None
    mi_fulljoin: float | None = None
    mi_true: float | None = None

    def sort_key(self) -> tuple:
        return (self.dist, self.dataset, self.key_mode, self.method, self.estimator, self.n, self.seed)

    def reference(self, kind: str) -> float | None:
        return self.mi_true if kind == TRUE_MI else self.mi_fulljoin


@dataclass(frozen=True)
class MetricSummary:
    mse: float | None
    rmse: float | None
    pearson_r: float | None
    spearman_r: float | None
    avg_sketch_join_size: float
    join_size_pct: float
    count: int
    excluded: int = 0


@dataclass(frozen=True)
class SweepConfig:
    """Synthetic sweep settings.

    Each instance takes its ``m`` from ``m_values`` round-robin, or draws it
    uniformly from the inclusive ``m_range`` when ``m_values`` is empty.
    One generated sample per instance is decomposed under every key mode.
    """

    dist: str = "trinomial"
    m_values: tuple[int, ...] = (512,)
    m_range: tuple[int, int] | None = None
    key_modes: tuple[str, ...] = ("ind", "dep")
    methods: tuple[str, ...] = tuple(m.value for m in Method)
    estimators: tuple[str, ...] | None = None
    n: int = 256
    instances: int = 100
    n_rows: int = 10_000
    seed: int = 0
    k: int = DEFAULT_K
    target_range: tuple[float, float] = (0.0, MAX_TARGET_MI)
    workers: int = 1

    def __post_init__(self):
        if self.dist not in DEFAULT_ESTIMATORS:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if not self.m_values and self.m_range is None:
            raise ValueError("either m_values or m_range is required")
        if self.instances < 0:
            raise ValueError("instances must be >= 0")

    def estimator_list(self) -> tuple[Estimator, ...]:
        if self.estimators is None:
            return DEFAULT_ESTIMATORS[self.dist]
        return tuple(Estimator.parse(e) for e in self.estimators)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = [e.value for e in self.estimator_list()]
        return d


@dataclass(frozen=True)
class RealSweepConfig:
    n: int = 1024
    min_join: int = 100
    pairs: int | None = 200
    methods: tuple[str, ...] = (Method.TUPSK.value,)
    seed: int = 0
    k: int = DEFAULT_K
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# synthetic sweeps
# --------------------------------------------------------------------------

def draw_spec(config: SweepConfig, index: int) -> TrinomialSpec | CDUnifSpec:
    """Generator parameters of instance ``index``; its seed is ``config.seed + index``."""
    seed = config.seed + index
    rng = np.random.default_rng([seed, 1])
    if config.m_values:
        m = int(config.m_values[index % len(config.m_values)])
    else:
        lo, hi = config.m_range
        m = int(rng.integers(lo, hi + 1))
    if config.dist == "cdunif":
        return CDUnifSpec(m=m, n_rows=config.n_rows, seed=seed)
    lo, hi = config.target_range
    while True:
        target = float(rng.uniform(lo, hi))
        if target <= 0:
            continue
        try:
            p1, p2 = select_trinomial_params(target, rng)
        except RuntimeError:
            # targets too small for the probability range; draw another
            continue
        return TrinomialSpec(m=m, p1=p1, p2=p2, target_mi=target, n_rows=config.n_rows, seed=seed)


def prepare_sample(s: JoinedSample, estimator: Estimator, dist: str, seed: int) -> JoinedSample:
    """Type a synthetic joined sample for ``estimator``.

    MLE treats both counts as symbols. DC-KSG treats X as the discrete
    column; discrete Trinomial Y is made continuous by perturbation first.
    """
    if estimator is Estimator.MLE:
        return s.retyped(ValueType.DISCRETE, ValueType.DISCRETE)
    if estimator is Estimator.DC_KSG:
        y = perturb_to_continuous(s.y, seed) if dist == "trinomial" else s.y
        return JoinedSample(s.x, y, ValueType.DISCRETE, ValueType.NUMERIC)
    return s


def _safe_estimate(s: JoinedSample, estimator: Estimator, dist: str, seed: int, k: int) -> float | None:
    if len(s) == 0:
        return None
    try:
        return float(estimate_mi(prepare_sample(s, estimator, dist, seed), estimator, k=k).value)
    except (ValueError, TypeError) as exc:
        log.debug("estimate failed (%s, n=%d): %s", estimator.value, len(s), exc)
        return None


def _run_instance(config: SweepConfig, index: int) -> list[ExperimentRow]:
    spec = draw_spec(config, index)
    if isinstance(spec, TrinomialSpec):
        x, y = sample_trinomial(spec)
        mi_true = true_mi_trinomial(spec.m, spec.p1, spec.p2)
    else:
        x, y = sample_cdunif(spec)
        mi_true = true_mi_cdunif(spec.m)
    estimators = config.estimator_list()
    dataset = f"{config.dist}-{index:05d}"
    rows: list[ExperimentRow] = []
    full_cache: dict[Estimator, float | None] = {}
    for mode in (KeyMode.parse(km) for km in config.key_modes):
        train, aug = decompose(x, y, mode)
        full = full_left_join(train, aug, Agg.AVG)
        for est in estimators:
            # every key mode joins back to the same pairs in the same order
            if est not in full_cache:
                full_cache[est] = _safe_estimate(full, est, config.dist, spec.seed, config.k)
        for method in (Method.parse(m) for m in config.methods):
            s_train = build_sketch(train, method, Side.TRAIN, config.n, Agg.AVG, spec.seed)
            s_aug = build_sketch(aug, method, Side.AUG, config.n, Agg.AVG, spec.seed)
            joined = join_sketches(s_train, s_aug).sample
            for est in estimators:
                rows.append(ExperimentRow(
                    dataset=dataset, key_mode=mode.label, dist=config.dist, m=spec.m,
                    method=method.value, n=config.n, estimator=est.value, seed=spec.seed,
                    sketch_join_size=len(joined), full_join_size=len(full),
                    mi_sketch=_safe_estimate(joined, est, config.dist, spec.seed, config.k),
                    mi_fulljoin=full_cache[est], mi_true=mi_true))
    return rows


def _run_instance_star(args):
    return _run_instance(*args)


def run_synthetic_sweep(config: SweepConfig) -> list[ExperimentRow]:
    """Generate, decompose, sketch, join and estimate every instance.

    Failed estimates (empty sketch joins, degenerate samples) are kept as
    rows with ``mi_sketch`` set to None.
    """
    jobs = [(config, i) for i in range(config.instances)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_instance_star, jobs))
    else:
        chunks = [_run_instance(*job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=ExperimentRow.sort_key)
    return rows


def _run_full_instance(config: SweepConfig, index: int) -> list[ExperimentRow]:
    spec = draw_spec(config, index)
    if isinstance(spec, TrinomialSpec):
        x, y = sample_trinomial(spec)
        mi_true = true_mi_trinomial(spec.m, spec.p1, spec.p2)
    else:
        x, y = sample_cdunif(spec)
        mi_true = true_mi_cdunif(spec.m)
    dataset = f"{config.dist}-{index:05d}"
    rows = []
    cache: dict[Estimator, float | None] = {}
    for mode in (KeyMode.parse(km) for km in config.key_modes):
        train, aug = decompose(x, y, mode)
        full = full_left_join(train, aug, Agg.AVG)
        for est in config.estimator_list():
            if est not in cache:
                cache[est] = _safe_estimate(full, est, config.dist, spec.seed, config.k)
            rows.append(ExperimentRow(
                dataset=dataset, key_mode=mode.label, dist=config.dist, m=spec.m, method="full",
                n=len(full), estimator=est.value, seed=spec.seed, sketch_join_size=len(full),
                full_join_size=len(full), mi_sketch=None, mi_fulljoin=cache[est], mi_true=mi_true))
    return rows


def run_full_join_sweep(config: SweepConfig) -> list[ExperimentRow]:
    """Estimates on the full join only (``method="full"``), against true MI.

    Sketch settings in ``config`` are ignored.
    """
    rows = [row for i in range(config.instances) for row in _run_full_instance(config, i)]
    rows.sort(key=ExperimentRow.sort_key)
    return rows


# --------------------------------------------------------------------------
# real corpora
# --------------------------------------------------------------------------

def sample_pair_combinations(pairs: Sequence[ColumnPair], count: int | None,
                             seed: int) -> list[tuple[ColumnPair, ColumnPair]]:
    """Uniform sample of (train, aug) column-pair combinations from different files."""
    combos = [(a, b) for a in pairs for b in pairs if a.path != b.path]
    if count is None or count >= len(combos):
        return combos
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(combos), size=count, replace=False))
    return [combos[i] for i in chosen]


def _real_sample(s: JoinedSample, estimator: Estimator, k: int) -> float | None:
    if len(s) == 0:
        return None
    try:
        return float(estimate_mi(s, estimator, k=k).value)
    except (ValueError, TypeError) as exc:
        log.debug("estimate failed (%s, n=%d): %s", estimator.value, len(s), exc)
        return None


def run_real_sweep(corpus_dir: str | Path, config: RealSweepConfig = RealSweepConfig()) -> list[ExperimentRow]:
    """Sketch-vs-full-join comparison over sampled column-pair combinations.

    The estimator is chosen from the joined column types. Rows whose sketch
    join is at or below ``config.min_join`` stay in the output;
    :func:`summarize` drops them when given the same threshold.
    """
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    pairs = enumerate_column_pairs(corpus_dir)
    if not pairs:
        raise TableError(f"no usable column pairs under {corpus_dir}")
    combos = sample_pair_combinations(pairs, config.pairs, config.seed)
    tables = {}
    sketches = {}

    def table(p: ColumnPair):
        if p not in tables:
            tables[p] = load_csv(p.path, p.key_column, p.value_column)
        return tables[p]

    def sketch(p: ColumnPair, method: Method, side: Side):
        key = (p, method, side)
        if key not in sketches:
            t = table(p)
            agg = default_agg(t.value_type) if side is Side.AUG else None
            sketches[key] = build_sketch(t, method, side, config.n, agg, config.seed)
        return sketches[key]

    rows: list[ExperimentRow] = []
    for train_pair, aug_pair in combos:
        train, aug = table(train_pair), table(aug_pair)
        full = full_left_join(train, aug, default_agg(aug.value_type))
        dataset = f"{train_pair.label}|{aug_pair.label}"
        for method in (Method.parse(m) for m in config.methods):
            try:
                joined = join_sketches(sketch(train_pair, method, Side.TRAIN),
                                       sketch(aug_pair, method, Side.AUG)).sample
            except SketchError as exc:
                log.warning("skipping %s (%s): %s", dataset, method.value, exc)
                continue
            est = dispatch_estimator(full.x_type, full.y_type)
            rows.append(ExperimentRow(
                dataset=dataset, key_mode="", dist="real", m=None, method=method.value,
                n=config.n, estimator=est.value, seed=config.seed,
                sketch_join_size=len(joined), full_join_size=len(full),
                mi_sketch=_real_sample(joined, est, config.k),
                mi_fulljoin=_real_sample(full, est, config.k)))
    rows.sort(key=ExperimentRow.sort_key)
    return rows


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _correlation(fn, a: np.ndarray, b: np.ndarray) -> float | None:
    if len(a) < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    return float(fn(a, b)[0])


def metric_summary(rows: Sequence[ExperimentRow], reference: str = TRUE_MI,
                   min_join_size: int | None = None, estimate: str = "mi_sketch") -> MetricSummary:
    """Metrics for one group of rows.

    Rows missing either estimate, or whose sketch join is not larger than
    ``min_join_size``, are excluded from the error and correlation metrics.
    Join-size averages use every row. ``estimate`` names the compared
    column (``mi_fulljoin`` scores full-join estimates against true MI).
    """
    if reference not in (TRUE_MI, FULL_JOIN):
        raise ValueError(f"reference must be {TRUE_MI!r} or {FULL_JOIN!r}")
    used = [r for r in rows
            if getattr(r, estimate) is not None and r.reference(reference) is not None
            and (min_join_size is None or r.sketch_join_size > min_join_size)]
    est = np.array([getattr(r, estimate) for r in used], dtype=np.float64)
    ref = np.array([r.reference(reference) for r in used], dtype=np.float64)
    if len(used):
        mse = math.fsum(((est - ref) ** 2).tolist()) / len(used)
        rmse = math.sqrt(mse)
    else:
        mse = rmse = None
    sizes = [r.sketch_join_size for r in rows]
    avg_size = math.fsum(sizes) / len(sizes) if sizes else 0.0
    mean_n = math.fsum(r.n for r in rows) / len(rows) if rows else 0.0
    return MetricSummary(
        mse=mse, rmse=rmse,
        pearson_r=_correlation(stats.pearsonr, est, ref),
        spearman_r=_correlation(stats.spearmanr, est, ref),
        avg_sketch_join_size=avg_size,
        join_size_pct=100.0 * avg_size / mean_n if mean_n else 0.0,
        count=len(used), excluded=len(rows) - len(used))


def summarize(rows: Iterable[ExperimentRow], reference: str = TRUE_MI,
              by: Sequence[str] = ("dist", "method", "estimator", "key_mode"),
              min_join_size: int | None = None, estimate: str = "mi_sketch") -> dict[tuple, MetricSummary]:
    """:func:`metric_summary` for every group of ``rows`` sharing the ``by`` fields."""
    groups: dict[tuple, list[ExperimentRow]] = {}
    for r in rows:
        groups.setdefault(tuple(getattr(r, f) for f in by), []).append(r)
    return {key: metric_summary(groups[key], reference, min_join_size, estimate) for key in sorted(groups, key=str)}


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], records: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow([_cell(v) for v in rec])
    return buf.getvalue()


def rows_to_csv(rows: Iterable[ExperimentRow]) -> str:
    ordered = sorted(rows, key=ExperimentRow.sort_key)
    return _csv_text(ROW_COLUMNS, ([getattr(r, c) for c in ROW_COLUMNS] for r in ordered))


def read_rows_csv(path: str | Path) -> list[ExperimentRow]:
    """Load rows written by :func:`emit_report`."""
    types = {f.name: f.type for f in fields(ExperimentRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for name, text in rec.items():
                t = types[name]
                if text == "" and "None" in t:
                    kw[name] = None
                elif t.startswith("int"):
                    kw[name] = int(text)
                elif t.startswith("float"):
                    kw[name] = float(text)
                else:
                    kw[name] = text
            out.append(ExperimentRow(**kw))
    return out


def emit_report(rows: Sequence[ExperimentRow], summaries: dict[tuple, MetricSummary],
                out_dir: str | Path, config: dict | None = None,
                group_fields: Sequence[str] = ("dist", "method", "estimator", "key_mode")) -> dict[str, Path]:
    """Write ``rows.csv``, ``summary.csv`` and ``manifest.json`` to ``out_dir``.

    Output bytes depend only on the arguments (no timestamps), so reruns with
    the same seed are byte-identical.
    """
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"rows": out_dir / "rows.csv", "summary": out_dir / "summary.csv",
             "manifest": out_dir / "manifest.json"}
    paths["rows"].write_text(rows_to_csv(rows), encoding="utf-8")
    summary_records = ([*key, *(getattr(s, c) for c in SUMMARY_COLUMNS)] for key, s in summaries.items())
    paths["summary"].write_text(_csv_text((*group_fields, *SUMMARY_COLUMNS), summary_records),
                                encoding="utf-8")
    manifest = {
        "format_version": REPORT_FORMAT_VERSION,
        "config": config or {},
        "seeds": sorted({r.seed for r in rows}),
        "row_count": len(rows),
        "versions": {"joinmi": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# --------------------------------------------------------------------------
# timing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    N: int
    full_join_ms: float
    sketch_join_ms: float
    full_mi_ms: float
    sketch_mi_ms: float

    @property
    def speedup(self) -> float:
        return (self.full_join_ms + self.full_mi_ms) / (self.sketch_join_ms + self.sketch_mi_ms)


def _median_ms(fn, repeats: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def time_comparison(n: int = 256, N_list: Sequence[int] = (5_000, 10_000, 20_000), m: int = 512,
                    target_mi: float = 1.0, repeats: int = 5, seed: int = 0) -> list[TimingRow]:
    """Median wall-clock time of joins and MI estimates, full tables vs. sketches.

    Uses KeyInd Trinomial instances; sketches are built beforehand and the
    estimator is the one dispatched from the column types.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p1, p2 = select_trinomial_params(target_mi, seed)
    out = []
    for N in N_list:
        if N < n:
            raise ValueError(f"table size {N} is smaller than the sketch budget {n}")
        x, y = sample_trinomial(TrinomialSpec(m=m, p1=p1, p2=p2, n_rows=N, seed=seed))
        train, aug = decompose(x, y, KeyMode.KEY_IND)
        s_train = build_sketch(train, Method.TUPSK, Side.TRAIN, n, None, seed)
        s_aug = build_sketch(aug, Method.TUPSK, Side.AUG, n, Agg.AVG, seed)
        full = full_left_join(train, aug, Agg.AVG)
        sketched = join_sketches(s_train, s_aug).sample
        out.append(TimingRow(
            N=N,
            full_join_ms=_median_ms(lambda: full_left_join(train, aug, Agg.AVG), repeats),
            sketch_join_ms=_median_ms(lambda: join_sketches(s_train, s_aug), repeats),
            full_mi_ms=_median_ms(lambda: estimate_mi(full), repeats),
            sketch_mi_ms=_median_ms(lambda: estimate_mi(sketched), repeats)))
    return out


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

TRINOMIAL_M_GRID = (16, 64, 256, 512, 1024)
CDUNIF_M_RANGE = (2, 1000)


def preset(name: str, instances: int = 100, seed: int = 0, workers: int = 1) -> list[SweepConfig]:
    """Named experiment grids.

    ``table3``: all five methods at n=256 on Trinomial (m over the standard
    grid) and CDUnif (m uniform in [2, 1000]), both key modes.
    ``fig2``: LV2SK and TUPSK at n=256 on Trinomial with m=512.
    """
    if name == "table3":
        return [
            SweepConfig(dist="trinomial", m_values=TRINOMIAL_M_GRID, n=256, instances=instances,
                        seed=seed, workers=workers),
            SweepConfig(dist="cdunif", m_values=(), m_range=CDUNIF_M_RANGE, n=256,
                        instances=instances, seed=seed, workers=workers),
        ]
    if name == "fig2":
        return [SweepConfig(dist="trinomial", m_values=(512,), methods=("lv2sk", "tupsk"), n=256,
                            instances=instances, seed=seed, workers=workers)]
    raise ValueError(f"unknown preset {name!r}; choose from 'table3', 'fig2'")
