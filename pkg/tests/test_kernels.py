import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from treerange._kernels import PointSet, count_distinct, pack_keys, preorder_parents, running_distinct
from treerange.estimates import EstimateRecord, agree
from treerange.parallel import replicate
from treerange.rng import rng_stream


@given(arrays(np.int64, st.tuples(st.integers(1, 200), st.integers(1, 5)), elements=st.integers(-50, 50)))
def test_distinct_counts_agree(pts):
    ref = len(np.unique(pts, axis=0))
    assert count_distinct(pts) == ref
    r = running_distinct(pts)
    assert r[-1] == ref and np.all(np.diff(r) >= 0)
    ps = PointSet(pts.shape[1], 4)
    flags = ps.add(pts)
    assert flags.sum() == ref and len(ps) == ref
    assert ps.add(pts).sum() == 0


def test_pack_keys_overflow_falls_back():
    pts = np.array([[0, 0, 0], [2 ** 40, 2 ** 40, 2 ** 40], [0, 0, 0]], np.int64)
    assert pack_keys(pts) is None
    assert count_distinct(pts) == 2


def test_preorder_parents_truncated():
    par, end = preorder_parents(np.array([2, 0], np.int64))
    assert end == -1 and par.tolist() == [-1, 0]
    par, end = preorder_parents(np.array([1, 0, 3], np.int64))
    assert end == 2


def _draw(rng, k):
    return rng.integers(0, 10 ** 9, k)


def test_replicate_order_and_workers():
    a = replicate(_draw, 7, 5, (3,), workers=1)
    b = replicate(_draw, 7, 5, (3,), workers=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = replicate(_draw, 3, 5, (3,), workers=1, start=4)
    assert all(np.array_equal(x, y) for x, y in zip(a[4:], c))
    assert np.array_equal(a[0], rng_stream(5, 0).integers(0, 10 ** 9, 3))


def test_estimate_record():
    r = EstimateRecord.from_samples([1.0, 2.0, 3.0])
    assert r.value == 2.0 and r.stderr > 0
    assert EstimateRecord.from_samples([4.0]).stderr == 0.0
    assert agree(r, EstimateRecord.from_samples([2.1, 1.9, 2.0]))
