import itertools

import pytest
from hypothesis import given, strategies as st

from joinmi.aggregation import Agg, aggregate, aggregate_by_key, default_agg, output_type
from joinmi.types import ValueType

N = ValueType.NUMERIC
D = ValueType.DISCRETE


def test_worked_example_values():
    assert aggregate([2, 2, 5], Agg.AVG) == 3
    assert aggregate([0, 3, 3], Agg.MODE) == 3
    assert aggregate([1], Agg.COUNT) == 1


def test_standard_aggregates():
    v = [4.0, 1.0, 7.0]
    assert aggregate(v, "sum") == 12.0
    assert aggregate(v, "min") == 1.0
    assert aggregate(v, "max") == 7.0
    assert aggregate(v, "first") == 4.0
    assert aggregate(v, "count") == 3.0


def test_mode_ties_go_to_first_occurrence():
    assert aggregate(["x", "y", "y", "x"], Agg.MODE) == "x"
    assert aggregate(["y", "x", "x", "y"], Agg.MODE) == "y"


def test_empty_group_rejected():
    with pytest.raises(ValueError):
        aggregate([], Agg.AVG)


@pytest.mark.parametrize("agg", [Agg.AVG, Agg.SUM, Agg.MIN, Agg.MAX])
def test_numeric_only_aggregates_reject_text(agg):
    with pytest.raises(TypeError):
        aggregate(["a", "b"], agg)
    with pytest.raises(TypeError):
        output_type(agg, D)


def test_output_types():
    assert output_type(Agg.COUNT, D) is N
    assert output_type(Agg.MODE, D) is D
    assert output_type(Agg.FIRST, N) is N
    assert default_agg(N) is Agg.AVG
    assert default_agg(D) is Agg.MODE


def test_parse_names():
    assert Agg.parse("AVG") is Agg.AVG
    with pytest.raises(ValueError):
        Agg.parse("median")


values = st.lists(st.integers(-50, 50).map(float), min_size=1, max_size=12)


@given(values)
def test_singleton_is_identity(v):
    for agg in Agg:
        expected = 1.0 if agg is Agg.COUNT else v[0]
        assert aggregate(v[:1], agg) == expected


@given(values, st.randoms())
def test_order_free_aggregates_ignore_permutation(v, rnd):
    shuffled = list(v)
    rnd.shuffle(shuffled)
    for agg in (Agg.AVG, Agg.SUM, Agg.MIN, Agg.MAX, Agg.COUNT):
        assert aggregate(shuffled, agg) == pytest.approx(aggregate(v, agg), rel=1e-12)


@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=8))
def test_mode_and_first_follow_input_order(v):
    for perm in itertools.islice(itertools.permutations(v), 20):
        perm = list(perm)
        assert aggregate(perm, Agg.FIRST) == perm[0]
        counts = {x: perm.count(x) for x in perm}
        best = max(counts.values())
        assert aggregate(perm, Agg.MODE) == next(x for x in perm if counts[x] == best)


@given(st.integers(1, 30))
def test_count_depends_only_on_size(n):
    assert aggregate(["q"] * n, Agg.COUNT) == aggregate(list(range(n)), Agg.COUNT) == n


def test_aggregate_by_key_groups_in_first_occurrence_order():
    keys, first, out, out_type = aggregate_by_key(
        ["a", "b", "b", "b", "c", "c", "c"], [1, 2, 2, 5, 0, 3, 3], N, Agg.AVG)
    assert keys == ["a", "b", "c"]
    assert first == [0, 1, 4]
    assert out.tolist() == [1.0, 3.0, 2.0]
    assert out_type is N
