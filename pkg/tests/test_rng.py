import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isotns.rng import BLOCK, blocks, map_blocks, stream, tag_id


def test_streams_reproducible():
    a = stream(5, "x", 3).random(10)
    b = stream(5, "x", 3).random(10)
    np.testing.assert_array_equal(a, b)


def test_streams_separate_by_seed_tag_and_block():
    base = stream(5, "x", 3).random(10)
    for other in (stream(6, "x", 3), stream(5, "y", 3), stream(5, "x", 4)):
        assert not np.array_equal(base, other.random(10))


def test_seed_range():
    stream(2**64 - 1, "x")
    with pytest.raises(ValueError):
        stream(-1, "x")
    with pytest.raises(ValueError):
        stream(2**64, "x")


def test_tag_id_stable():
    assert tag_id("occupancy") == tag_id("occupancy")
    assert tag_id("occupancy") != tag_id("estimate")
    assert 0 <= tag_id("anything") < 2**64


@given(st.integers(0, 3000), st.integers(1, 300))
def test_blocks_cover_range(n, size):
    bl = blocks(n, size)
    covered = [i for _, a, b in bl for i in range(a, b)]
    assert covered == list(range(n))
    assert [b for b, _, _ in bl] == list(range(len(bl)))


@pytest.mark.parametrize("threads", [1, 2, 5])
def test_map_blocks_order_independent_of_threads(threads):
    def fn(block, start, stop):
        return stream(1, "t", block).random(stop - start)

    out = np.concatenate(map_blocks(fn, 3 * BLOCK + 17, threads))
    ref = np.concatenate(map_blocks(fn, 3 * BLOCK + 17, 1))
    np.testing.assert_array_equal(out, ref)
    assert out.size == 3 * BLOCK + 17
