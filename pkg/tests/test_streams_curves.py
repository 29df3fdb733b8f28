import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexist.curves import MomentAccumulator, SurvivalCurve, merge_all
from coexist.streams import Stream, as_stream, block_sizes, hash64, map_blocks


def test_hash64_is_stable_and_separates_inputs():
    assert hash64(7, "a", 0) == hash64(7, "a", 0)
    keys = {hash64(s, t, i) for s in range(3) for t in ("a", "b") for i in range(50)}
    assert len(keys) == 300


def test_stream_children_are_distinct_and_reproducible():
    s = Stream(3, "tag")
    assert s.child(1).key != s.child(2).key
    assert s.child(1, 2).key == s.child(1).child(2).key
    np.testing.assert_array_equal(s.child(4).generator().random(5), s.child(4).generator().random(5))
    assert as_stream(3, "tag") == s
    assert as_stream(s, "other") is s


@given(st.integers(0, 100_000), st.integers(1, 5000))
def test_block_sizes(total, block):
    sizes = block_sizes(total, block)
    assert sum(sizes) == total
    assert all(0 < s <= block for s in sizes)


def test_map_blocks_preserves_order():
    assert map_blocks(lambda b: b * b, 10, workers=4) == [b * b for b in range(10)]


def test_accumulator_matches_numpy():
    v = np.random.default_rng(0).random((500, 3))
    acc = merge_all([MomentAccumulator.of(v[:100]), MomentAccumulator.of(v[100:])])
    np.testing.assert_allclose(acc.mean(), v.mean(axis=0))
    np.testing.assert_allclose(acc.stderr(), v.std(axis=0, ddof=1) / np.sqrt(500))


def test_accumulator_merge_is_associative():
    parts = [MomentAccumulator.of(np.full((2, 1), float(i))) for i in range(3)]
    a = parts[0].merge(parts[1]).merge(parts[2])
    b = parts[0].merge(parts[1].merge(parts[2]))
    assert a.count == b.count
    np.testing.assert_array_equal(a.total, b.total)
    assert MomentAccumulator.empty(2).merge(parts[0]).count == 2


def test_survival_curve_needs_increasing_grid():
    with pytest.raises(ValueError):
        SurvivalCurve([2, 1], [0.1, 0.2], [0.0, 0.0], 10)
