"""End-to-end acceptance checks.

Each test covers one numbered criterion and records a one-line verdict that
the terminal summary prints, so the whole gate reads as a short report.
"""
import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from scipy import stats

from joinmi.aggregation import Agg
from joinmi.estimators import digamma, entropy_mle, mi_ksg, mi_mixed_ksg, mi_mle
from joinmi.harness import (
    FULL_JOIN,
    TRUE_MI,
    RealSweepConfig,
    SweepConfig,
    metric_summary,
    preset,
    run_full_join_sweep,
    run_real_sweep,
    run_synthetic_sweep,
    summarize,
    time_comparison,
)
from joinmi.sketch import Method, Side, build_lv2sk, build_sketch, build_tupsk, join_sketches, per_key_sample_size
from joinmi.table import JoinedSample, TwoColumnTable, full_left_join
from joinmi.types import ValueType

from joinmi.synthbench import true_mi_trinomial
from test_synthbench import brute_force_mi

pytestmark = pytest.mark.acceptance

N = ValueType.NUMERIC
D = ValueType.DISCRETE
SEED = 20240611


class Verdict:
    """Collects sub-checks, records them, and fails with all of them listed."""

    def __init__(self, record, label):
        self.record = record
        self.label = label
        self.parts = []

    def check(self, name, ok, detail):
        self.parts.append((name, bool(ok), detail))

    def finish(self):
        failed = [f"{n}: {d}" for n, ok, d in self.parts if not ok]
        summary = "; ".join(f"{n} {'ok' if ok else 'FAIL'} ({d})" for n, ok, d in self.parts)
        self.record("criterion", self.label)
        self.record("detail", summary)
        assert not failed, "; ".join(failed)


@pytest.fixture
def verdict(record_property, request):
    label = request.node.get_closest_marker("criterion").args[0]
    return Verdict(record_property, label)


def fmt(v, digits=3):
    return "n/a" if v is None else f"{v:.{digits}f}"


# ---------------------------------------------------------------------------
# sweeps shared between criteria
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def table3_rows():
    return {cfg.dist: run_synthetic_sweep(cfg) for cfg in preset("table3", instances=100, seed=SEED)}


# ---------------------------------------------------------------------------

@pytest.mark.criterion("1 full-join fidelity")
def test_full_join_fidelity(verdict):
    configs = [
        SweepConfig(dist="trinomial", m_values=(512,), instances=200, seed=SEED),
        SweepConfig(dist="cdunif", m_values=(), m_range=(2, 1000), instances=200, seed=SEED),
    ]
    for cfg in configs:
        rows = run_full_join_sweep(cfg)
        for (est,), s in summarize(rows, TRUE_MI, by=("estimator",), estimate="mi_fulljoin").items():
            ok = s.rmse is not None and s.rmse < 0.10 and s.pearson_r is not None and s.pearson_r > 0.98
            verdict.check(f"{cfg.dist}/{est}", ok,
                          f"rmse {fmt(s.rmse)}, r {fmt(s.pearson_r, 4)}, used {s.count}/{s.count + s.excluded}")
    verdict.finish()


@pytest.mark.criterion("2 sketch comparison at n=256")
def test_sketch_comparison(verdict, table3_rows):
    paper_mse = {"trinomial": 0.22, "cdunif": 0.77}
    for dist, rows in table3_rows.items():
        by = {m: s for (m,), s in summarize(rows, TRUE_MI, by=("method",)).items()}
        tup, ind = by["tupsk"], by["indsk"]
        verdict.check(f"{dist} (a) tupsk join", tup.join_size_pct >= 99.0, f"{tup.join_size_pct:.2f}%")
        verdict.check(f"{dist} (b) indsk join", 35.0 <= ind.join_size_pct <= 65.0, f"{ind.join_size_pct:.2f}%")
        others = {m: by[m].mse for m in ("lv2sk", "csk", "indsk")}
        verdict.check(f"{dist} (c) mse order", all(tup.mse < v for v in others.values()),
                      f"tupsk {fmt(tup.mse)} vs " + ", ".join(f"{m} {fmt(v)}" for m, v in others.items()))
        target = paper_mse[dist]
        verdict.check(f"{dist} (d) tupsk mse", abs(tup.mse - target) <= 0.5 * target,
                      f"{fmt(tup.mse)} vs {target} +-50%")
    verdict.finish()


@pytest.mark.criterion("3 join-key robustness")
def test_join_key_robustness(verdict):
    cfg = SweepConfig(dist="trinomial", m_values=(512,), methods=("lv2sk", "tupsk"), estimators=("mle",),
                      n=256, instances=100, seed=SEED)
    rows = run_synthetic_sweep(cfg)
    gaps = {}
    for method in ("tupsk", "lv2sk"):
        bias = {}
        for mode in ("KeyInd", "KeyDep"):
            errs = [r.mi_sketch - r.mi_true for r in rows
                    if r.method == method and r.key_mode == mode and r.mi_sketch is not None]
            bias[mode] = float(np.mean(errs))
        gaps[method] = abs(bias["KeyInd"] - bias["KeyDep"])
    verdict.check("tupsk gap <= 0.1", gaps["tupsk"] <= 0.1, f"{gaps['tupsk']:.4f}")
    verdict.check("tupsk gap < lv2sk gap", gaps["tupsk"] < gaps["lv2sk"],
                  f"{gaps['tupsk']:.4f} vs {gaps['lv2sk']:.4f}")
    verdict.finish()


@pytest.mark.criterion("4 high-MI breakdown")
def test_high_mi_breakdown(verdict):
    # m in [5, 14] puts true MI in [1, 2]; m in [181, 361] puts it in [4.5, 5.2]
    bands = {"low": (5, 14), "high": (181, 361)}
    err = {}
    for band, m_range in bands.items():
        cfg = SweepConfig(dist="cdunif", m_values=(), m_range=m_range, methods=("tupsk", "lv2sk"),
                          n=256, instances=60, seed=SEED)
        rows = run_synthetic_sweep(cfg)
        lo, hi = (1.0, 2.0) if band == "low" else (4.5, 5.2)
        for method in ("tupsk", "lv2sk"):
            used = [abs(r.mi_sketch - r.mi_true) for r in rows
                    if r.method == method and r.mi_sketch is not None and lo <= r.mi_true <= hi]
            absent = sum(1 for r in rows if r.method == method and r.mi_sketch is None)
            err[band, method] = (float(np.mean(used)), len(used), absent)
    t_lo, t_hi, l_hi = err["low", "tupsk"], err["high", "tupsk"], err["high", "lv2sk"]
    verdict.check("tupsk high >= 2x low", t_hi[0] >= 2 * t_lo[0], f"{t_hi[0]:.3f} vs {t_lo[0]:.3f}")
    verdict.check("tupsk high < lv2sk high", t_hi[0] < l_hi[0],
                  f"{t_hi[0]:.3f} (n={t_hi[1]}, absent {t_hi[2]}) vs {l_hi[0]:.3f} "
                  f"(n={l_hi[1]}, absent {l_hi[2]})")
    verdict.finish()


@pytest.mark.criterion("5 worked-example goldens")
def test_worked_examples(verdict, example):
    train, cand = example
    for agg, expected in ((Agg.AVG, [1, 1, 3, 2]), (Agg.MODE, [1, 1, 2, 3]), (Agg.COUNT, [1, 1, 3, 3])):
        got = full_left_join(train, cand, agg).x.tolist()
        verdict.check(agg.value, got == expected, f"{got}")
    h = entropy_mle(["hot"] * 5 + [f"v{i}" for i in range(95)])
    verdict.check("entropy", abs(h - 4.5247) < 1e-3, f"{h:.5f}")
    n_f = per_key_sample_size(5, 95, 100)
    verdict.check("n_f", n_f == 4, f"{n_f}")
    verdict.finish()


@pytest.mark.criterion("6 structural properties")
def test_structural_properties(verdict):
    rng = np.random.default_rng(SEED)
    counts = dict.fromkeys(("lv2sk bound", "tupsk size", "aug unique", "subset", "determinism"), 0)
    bad = dict.fromkeys(counts, 0)
    for trial in range(1000):
        n = int(rng.integers(1, 32))
        n_keys = int(rng.integers(1, 60))
        n_rows = int(rng.integers(1, 200))
        w = rng.random(n_keys) ** float(rng.uniform(0.2, 5))
        keys = [f"k{i}" for i in rng.choice(n_keys, n_rows, p=w / w.sum())]
        train = TwoColumnTable(keys, rng.integers(0, 9, n_rows).astype(float), N)
        a_rows = int(rng.integers(1, 200))
        aug = TwoColumnTable([f"k{i}" for i in rng.integers(0, n_keys, a_rows)],
                             rng.integers(0, 9, a_rows).astype(float), N)
        m_k = len(set(keys))
        if m_k >= n:
            s = build_lv2sk(train, Side.TRAIN, n, seed=trial)
            counts["lv2sk bound"] += 1
            bad["lv2sk bound"] += not (n <= len(s) <= 2 * n)
        counts["tupsk size"] += 1
        bad["tupsk size"] += len(build_tupsk(train, Side.TRAIN, n)) != min(n, n_rows)
        full = {agg: full_left_join(train, aug, agg).pairs() for agg in (Agg.AVG, Agg.FIRST)}
        for method in Method:
            s_t = build_sketch(train, method, Side.TRAIN, n, None, trial)
            s_a = build_sketch(aug, method, Side.AUG, n, Agg.AVG, trial)
            counts["aug unique"] += 1
            bad["aug unique"] += len(set(s_a.key_hashes.tolist())) != len(s_a)
            ref = full[Agg.FIRST if method is Method.CSK else Agg.AVG]
            counts["subset"] += 1
            bad["subset"] += bool(Counter(join_sketches(s_t, s_a).sample.pairs()) - Counter(ref))
            counts["determinism"] += 1
            bad["determinism"] += build_sketch(train, method, Side.TRAIN, n, None, trial).to_json() != s_t.to_json()
    for name in counts:
        verdict.check(name, bad[name] == 0, f"{counts[name] - bad[name]}/{counts[name]}")
    verdict.finish()


@pytest.mark.criterion("7 sampling laws")
def test_sampling_laws(verdict):
    keys = list("abcde") + ["f"] * 95
    seeds = 20_000
    tup_counts = np.zeros(100)
    a_hits = f_hits = 0
    for s in range(seeds):
        salted = [f"{s}/{k}" for k in keys]
        t = TwoColumnTable(salted, np.arange(100.0), N)
        tup_counts[int(build_tupsk(t, Side.TRAIN, 1).values[0])] += 1
        chosen = set(build_lv2sk(t, Side.TRAIN, 5, seed=s).values.tolist())
        a_hits += 0.0 in chosen
        f_hits += 5.0 in chosen
    chi = stats.chisquare(tup_counts)
    verdict.check("tupsk uniform", chi.pvalue > 0.01, f"chi-square p={chi.pvalue:.3f}")
    # first f row against the a row, one-sided
    p = stats.binomtest(f_hits, seeds, a_hits / seeds, alternative="less").pvalue
    verdict.check("lv2sk f < a", p < 0.01,
                  f"f row {f_hits / seeds:.4f} vs a row {a_hits / seeds:.4f}, p={p:.2g}")
    verdict.finish()


@pytest.mark.criterion("8 estimator unit suite")
def test_estimator_suite(verdict):
    mpmath.mp.dps = 50
    xs = [0.25, 1, 2, 3.5, 10.5, 97.3, 1e4]
    worst = max(abs(digamma(x) - float(mpmath.digamma(x))) for x in xs)
    verdict.check("digamma", worst < 1e-10, f"max err {worst:.1e}")

    rng = np.random.default_rng(SEED)
    labels = [str(v) for v in rng.integers(0, 9, 500)]
    same = mi_mle(JoinedSample(labels, labels, D, D)).value
    verdict.check("mle(X,X)=H(X)", same == entropy_mle(labels), f"{same:.6f}")

    m, n = 20, 500
    est = [mi_mle(JoinedSample([str(v) for v in rng.integers(0, m, n)], [str(v) for v in rng.integers(0, m, n)],
                               D, D)).value for _ in range(1000)]
    predicted = (m * m - 2 * m + 1) / (2 * n)
    rel = abs(np.mean(est) - predicted) / predicted
    verdict.check("bias law", rel < 0.2, f"mean {np.mean(est):.4f} vs {predicted:.4f} ({100 * rel:.1f}%)")

    x = rng.integers(0, 4, 5000)
    y = (x + rng.integers(0, 2, 5000)) % 4
    gap = abs(mi_mixed_ksg(JoinedSample(x, y, N, N)).value
              - mi_mle(JoinedSample([str(v) for v in x], [str(v) for v in y], D, D)).value)
    verdict.check("mixed-ksg vs mle", gap < 0.05, f"gap {gap:.4f}")

    g1 = rng.standard_normal(10_000)
    g2 = 0.9 * g1 + math.sqrt(1 - 0.81) * rng.standard_normal(10_000)
    ksg = mi_ksg(JoinedSample(g1, g2, N, N)).value
    truth = -0.5 * math.log(1 - 0.81)
    verdict.check("ksg gaussian", abs(ksg - truth) < 0.1, f"{ksg:.4f} vs {truth:.4f}")

    worst = max(abs(true_mi_trinomial(mm, p1, p2) - brute_force_mi(mm, p1, p2))
                for mm in range(1, 8) for p1, p2 in ((0.2, 0.3), (0.5, 0.25)))
    verdict.check("trinomial oracle", worst < 1e-10, f"max err {worst:.1e}")
    verdict.finish()


@pytest.mark.criterion("9 sketch speedup")
def test_speedup(verdict):
    row = time_comparison(n=256, N_list=(20_000,), repeats=5, seed=SEED)[0]
    verdict.check("speedup >= 10", row.speedup >= 10,
                  f"{row.speedup:.1f}x (full {row.full_join_ms + row.full_mi_ms:.1f} ms, "
                  f"sketch {row.sketch_join_ms + row.sketch_mi_ms:.2f} ms)")
    verdict.finish()


@pytest.mark.criterion("corpus smoke test")
def test_mini_corpus_smoke(verdict, mini_corpus):
    cfg = RealSweepConfig(n=1024, min_join=100, seed=SEED)
    rows = run_real_sweep(mini_corpus, cfg)
    s = metric_summary(rows, FULL_JOIN, min_join_size=cfg.min_join)
    verdict.check("spearman >= 0.7", s.spearman_r is not None and s.spearman_r >= 0.7,
                  f"{fmt(s.spearman_r)} over {s.count} pairs with join > {cfg.min_join}")
    verdict.finish()
