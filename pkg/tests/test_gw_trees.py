import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from treerange.gw_trees import (
    PlaneTree, assign_locations, check_lukasiewicz, cycle_rotate, enumerate_plane_trees, first_passage,
    gw_size, lukasiewicz, range_of, sample_forest_counts, sample_gw_conditioned_size, sample_uniform_plane_tree,
    size_feasible, tree_from_lukasiewicz, tree_probability,
)
from treerange.distributions import make_jump_delta
from treerange.errors import CapExceeded, InfeasibleSize, InvalidPath


def test_catalan_counts():
    assert [len(enumerate_plane_trees(n)) for n in range(1, 8)] == [1, 1, 2, 5, 14, 42, 132]


def test_tree_probabilities_sum(geo):
    # P(#T = n) for geometric mu is Catalan(n-1) 2^-(2n-1)
    for n in range(1, 7):
        total = sum(tree_probability(t, geo) for t in enumerate_plane_trees(n))
        assert total == pytest.approx(math.comb(2 * n - 2, n - 1) / n / 2 ** (2 * n - 1))


def test_invalid_paths():
    with pytest.raises(InvalidPath):
        check_lukasiewicz(np.array([0, -1, 0]))
    with pytest.raises(InvalidPath):
        check_lukasiewicz(np.array([1, -1]))
    with pytest.raises(InvalidPath):
        check_lukasiewicz(np.array([], np.int64))


@st.composite
def plane_trees(draw):
    # random Lukasiewicz path via the cycle lemma
    n = draw(st.integers(1, 40))
    counts = draw(st.lists(st.integers(0, 4), min_size=n, max_size=n))
    inc = np.array(counts, np.int64) - 1
    s = int(inc.sum())
    if s != -1:
        # adjust the last increments to make the total -1
        need = -1 - s
        i = 0
        while need != 0:
            step = max(-1 - inc[i], min(3 - inc[i], need))
            inc[i] += step
            need -= step
            i = (i + 1) % n
    return tree_from_lukasiewicz(cycle_rotate(inc))


@given(plane_trees())
def test_lukasiewicz_roundtrip(tree):
    assert tree_from_lukasiewicz(lukasiewicz(tree)) == tree
    assert PlaneTree.from_text(tree.to_text()) == tree
    assert first_passage(lukasiewicz(tree)) == tree.size


@given(plane_trees())
def test_parents_and_heights(tree):
    par = tree.parents()
    h = tree.heights()
    assert par[0] == -1 and np.all(par[1:] < np.arange(1, tree.size))
    assert np.bincount(par[1:], minlength=tree.size).tolist() == tree.children.tolist()
    assert np.all(h[1:] == h[par[1:]] + 1)


def test_range_bounds(srw4, rng):
    for _ in range(50):
        t = sample_uniform_plane_tree(30, rng)
        r = range_of(assign_locations(t, srw4, rng))
        assert 1 <= r <= 30


def test_delta_walk_range_is_height(rng):
    t = sample_uniform_plane_tree(25, rng)
    sp = assign_locations(t, make_jump_delta([1, 0]), rng)
    assert range_of(sp) == t.heights().max() + 1


def test_small_sizes(geo, rng):
    sizes = np.array([gw_size(geo, rng, 10_000) for _ in range(20_000)])
    assert np.mean(sizes == 1) == pytest.approx(0.5, abs=0.012)
    assert np.mean(sizes == 2) == pytest.approx(0.125, abs=0.008)


def test_cap(geo):
    rng = np.random.default_rng(1)
    hit = False
    for _ in range(200):
        try:
            sample_forest_counts(geo, 1, rng, size_cap=50)
        except CapExceeded:
            hit = True
            break
    assert hit
    c = sample_forest_counts(geo, 1, np.random.default_rng(1), size_cap=50, truncate=True)
    assert len(c) <= 50 + 64


def test_infeasible(binary):
    assert not size_feasible(binary, 4)
    with pytest.raises(InfeasibleSize):
        sample_gw_conditioned_size(binary, 4, np.random.default_rng(0))
    assert size_feasible(binary, 5)


def test_conditioned_uniform_on_four(rng):
    trees = [sample_uniform_plane_tree(4, rng) for _ in range(10_000)]
    counts = Counter(t.children.tobytes() for t in trees)
    assert len(counts) == 5
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_conditioned_binary_law(binary, rng):
    # every binary tree with 5 vertices has probability 2^-5, so the two shapes are equally likely
    trees = [sample_gw_conditioned_size(binary, 5, rng) for _ in range(4000)]
    counts = Counter(t.children.tobytes() for t in trees)
    assert len(counts) == 2
    assert stats.chisquare(list(counts.values())).pvalue > 0.001
