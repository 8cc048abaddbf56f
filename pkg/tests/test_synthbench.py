import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from joinmi.aggregation import Agg
from joinmi.estimators import mi_mixed_ksg
from joinmi.synthbench import (
    CDUnifSpec,
    KeyMode,
    TrinomialSpec,
    correlation_for_mi,
    decompose,
    key_text,
    make_instance,
    sample_cdunif,
    sample_trinomial,
    select_trinomial_params,
    trinomial_correlation,
    true_mi_cdunif,
    true_mi_trinomial,
)
from joinmi.table import JoinedSample, full_left_join
from joinmi.types import ValueType

probs = st.tuples(st.floats(0.02, 0.9), st.floats(0.02, 0.9)).filter(lambda p: p[0] + p[1] < 0.97)


def entropy(ps):
    return -math.fsum(p * math.log(p) for p in ps if p > 0)


def brute_force_mi(m, p1, p2):
    """MI of the first two trinomial counts by enumerating every trial sequence."""
    joint, px, py = Counter(), Counter(), Counter()
    outcome_p = (p1, p2, 1 - p1 - p2)
    for seq in itertools.product(range(3), repeat=m):
        w = math.prod(outcome_p[o] for o in seq)
        i, j = seq.count(0), seq.count(1)
        joint[i, j] += w
        px[i] += w
        py[j] += w
    return entropy(px.values()) + entropy(py.values()) - entropy(joint.values())


# -- parameter selection ------------------------------------------------------

def test_correlation_for_top_target():
    assert correlation_for_mi(3.5) == pytest.approx(0.999, abs=1e-3)
    assert correlation_for_mi(1e-12) < 1e-5


@given(st.floats(0.02, 3.5), st.integers(0, 2**32 - 1))
@settings(max_examples=200)
def test_selected_params_round_trip(target, seed):
    p1, p2 = select_trinomial_params(target, seed)
    assert 0.15 <= p1 <= 0.85 and 0.15 <= p2 <= 0.85
    assert trinomial_correlation(p1, p2) == pytest.approx(-correlation_for_mi(target), abs=1e-9)


def test_selection_rejects_bad_targets():
    for bad in (0.0, -1.0, 3.6):
        with pytest.raises(ValueError):
            select_trinomial_params(bad, 0)
    # |r| this small needs p2 < 0.15 for every p1 in range
    with pytest.raises(RuntimeError):
        select_trinomial_params(1e-4, 0, max_draws=200)


def test_spec_validation():
    with pytest.raises(ValueError):
        TrinomialSpec(m=0, p1=0.3, p2=0.3)
    with pytest.raises(ValueError):
        TrinomialSpec(m=5, p1=0.6, p2=0.5)
    with pytest.raises(ValueError):
        CDUnifSpec(m=1)


# -- exact MI -----------------------------------------------------------------

@given(probs)
def test_single_trial_mi(p):
    p1, p2 = p
    p3 = 1 - p1 - p2
    expected = entropy([p1, 1 - p1]) + entropy([p2, 1 - p2]) - entropy([p1, p2, p3])
    assert true_mi_trinomial(1, p1, p2) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("m", range(1, 9))
def test_small_m_matches_enumeration(m):
    for p1, p2 in [(0.2, 0.3), (0.45, 0.45), (0.15, 0.7)]:
        assert abs(true_mi_trinomial(m, p1, p2) - brute_force_mi(m, p1, p2)) < 1e-10


@given(probs, st.integers(1, 60))
@settings(max_examples=60)
def test_trinomial_mi_symmetric_in_p(p, m):
    p1, p2 = p
    assert true_mi_trinomial(m, p1, p2) == pytest.approx(true_mi_trinomial(m, p2, p1), abs=1e-10)


def test_selected_specs_stay_in_range():
    rng = np.random.default_rng(0)
    for target in rng.uniform(0.05, 3.5, 20):
        p1, p2 = select_trinomial_params(float(target), rng)
        assert 0 <= true_mi_trinomial(512, p1, p2) <= 3.6


def test_cdunif_closed_form():
    assert true_mi_cdunif(2) == pytest.approx(0.5 * math.log(2), abs=1e-12)
    assert true_mi_cdunif(1000) == pytest.approx(6.215, abs=1e-3)
    assert true_mi_cdunif(256) == pytest.approx(4.85, abs=5e-3)
    assert all(true_mi_cdunif(m) < true_mi_cdunif(m + 1) for m in range(2, 300))


# -- samplers -------------------------------------------------------------------

def test_trinomial_sampler_moments():
    spec = TrinomialSpec(m=40, p1=0.3, p2=0.5, n_rows=100_000, seed=1)
    x, y = sample_trinomial(spec)
    assert np.all(x + y <= spec.m) and np.all(x >= 0) and np.all(y >= 0)
    se = math.sqrt(spec.m * 0.3 * 0.7 / spec.n_rows)
    assert abs(x.mean() - spec.m * 0.3) < 4 * se
    assert abs(np.corrcoef(x, y)[0, 1] - trinomial_correlation(0.3, 0.5)) < 0.02


def test_trinomial_sampler_deterministic():
    spec = TrinomialSpec(m=10, p1=0.2, p2=0.2, n_rows=500, seed=4)
    a, b = sample_trinomial(spec), sample_trinomial(spec)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_cdunif_sampler():
    spec = CDUnifSpec(m=8, n_rows=100_000, seed=2)
    x, y = sample_cdunif(spec)
    assert np.all((x <= y) & (y <= x + 2))
    freq = np.bincount(x, minlength=8) / spec.n_rows
    se = math.sqrt((1 / 8) * (7 / 8) / spec.n_rows)
    assert np.all(np.abs(freq - 1 / 8) < 4 * se)


def test_cdunif_estimate_near_truth():
    x, y = sample_cdunif(CDUnifSpec(m=5, n_rows=10_000, seed=3))
    est = mi_mixed_ksg(JoinedSample(x, y, ValueType.NUMERIC, ValueType.NUMERIC)).value
    assert abs(est - true_mi_cdunif(5)) < 0.15


# -- decomposition -----------------------------------------------------------------

def test_key_text():
    assert key_text(3.0) == "3"
    assert key_text(np.int64(7)) == "7"
    assert key_text(2.5) == "2.5"


@pytest.mark.parametrize("mode", list(KeyMode))
def test_decompose_round_trip(mode):
    x, y = sample_trinomial(TrinomialSpec(m=30, p1=0.4, p2=0.3, n_rows=2000, seed=5))
    train, aug = decompose(x, y, mode)
    joined = full_left_join(train, aug, Agg.FIRST)
    assert Counter(joined.pairs()) == Counter(zip(x.astype(float).tolist(), y.astype(float).tolist()))
    if mode is KeyMode.KEY_IND:
        assert joined.x.tolist() == x.astype(float).tolist()
    else:
        assert len(aug) == len(set(aug.keys)) == len(np.unique(x))


def test_keydep_small_example():
    train, aug = decompose([3, 3, 7], [10.0, 20.0, 30.0], "keydep")
    assert train.keys == ["3", "3", "7"]
    assert dict(zip(aug.keys, aug.values.tolist())) == {"3": 3.0, "7": 7.0}
    assert full_left_join(train, aug, Agg.FIRST).pairs() == [(3.0, 10.0), (3.0, 20.0), (7.0, 30.0)]


def test_keydep_rejects_continuous_x():
    with pytest.raises(ValueError):
        decompose([0.5, 1.0], [1.0, 2.0], KeyMode.KEY_DEP)


def test_key_mode_parsing():
    assert KeyMode.parse("KeyInd") is KeyMode.KEY_IND
    assert KeyMode.parse("dep").label == "KeyDep"
    with pytest.raises(ValueError):
        KeyMode.parse("both")


def test_make_instance():
    spec = CDUnifSpec(m=12, n_rows=300, seed=6)
    inst = make_instance(spec, "dep")
    assert inst.true_mi == true_mi_cdunif(12)
    assert len(inst.train) == 300
    assert inst.key_mode is KeyMode.KEY_DEP
