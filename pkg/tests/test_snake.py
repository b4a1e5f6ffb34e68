import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from treerange.analytics import GreenTable
from treerange.distributions import make_jump_delta, make_jump_srw
from treerange.errors import DomainError, TooFewHits
from treerange.gw_trees import assign_locations, range_of, sample_uniform_plane_tree
from treerange.rng import rng_stream
from treerange.snake import (
    SnakeState, estimate_no_return_head, excursion_range, free_range, free_snake_run, green_identity_check,
    head_return_exact, head_return_table, pitman_enumerate, pitman_pmf, pitman_vector,
    return_probabilities_exact, sample_excursion, snake_step, symmetry_check, uniform_dyck_steps,
)

SRW4 = make_jump_srw(4)


def test_pitman_small():
    assert pitman_pmf(1, 1, exact=True) == 1
    assert pitman_pmf(2, 0, exact=True) == Fraction(1, 4)
    assert pitman_pmf(2, 2, exact=True) == Fraction(3, 4)
    with pytest.raises(DomainError):
        pitman_pmf(3, 0)
    with pytest.raises(DomainError):
        pitman_pmf(2, 4)


@pytest.mark.parametrize("k", range(0, 21))
def test_pitman_matches_enumeration(k):
    enum = pitman_enumerate(k)
    assert enum == {m: pitman_pmf(k, m, exact=True) for m in range(k % 2, k + 1, 2)}


def test_pitman_normalisation():
    for k in range(0, 65):
        assert sum(pitman_pmf(k, m, exact=True) for m in range(k % 2, k + 1, 2)) == 1
    for k in (100, 1000, 10_000):
        assert abs(pitman_vector(k)[1].sum() - 1) < 1e-12


def test_head_return_small():
    assert head_return_exact(SRW4, 1, exact=True) == 0
    assert head_return_exact(SRW4, 2, exact=True) == Fraction(11, 32)
    assert head_return_exact(SRW4, 2) == pytest.approx(11 / 32, abs=1e-15)


def test_exact_return_probabilities():
    p = return_probabilities_exact(SRW4, 4)
    assert p[2] == Fraction(1, 8)
    # 4-step loops in Z^4: one axis used twice (4 axes x 6 orders) or two axes once each (6 pairs x 24 orders)
    assert p[4] == Fraction(4 * 6 + 6 * 24, 8 ** 4)


def test_float_matches_exact():
    for k in (3, 10, 25):
        assert head_return_exact(SRW4, k) == pytest.approx(float(head_return_exact(SRW4, k, exact=True)), rel=1e-12)


def test_head_return_against_simulation():
    k = 6
    exact = float(head_return_exact(SRW4, k, exact=True))
    hits = 0
    reps = 20_000
    rng = rng_stream(3)
    for _ in range(reps):
        st_ = SnakeState.start(SRW4, rng)
        for _ in range(k):
            snake_step(st_, rng)
        hits += not st_.head.any()
    se = math.sqrt(exact * (1 - exact) / reps)
    assert abs(hits / reps - exact) < 4 * se


def test_kernel_deterministic():
    rng = np.random.default_rng(0)
    st_ = SnakeState.start(SRW4, rng, m=3, init_path=[[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0], [2, 1, 0, 0]])
    snake_step(st_, rng, erase=True)
    assert st_.zeta == 2
    assert st_.head.tolist() == [1, 0, 0, 0]
    snake_step(st_, rng, erase=False, jump=[0, 0, 1, 0])
    assert st_.zeta == 3
    assert st_.head.tolist() == [1, 0, 1, 0]
    # memoised initial values are stable
    assert st_.value(1).tolist() == [1, 1, 0, 0]


def test_lifetime_is_simple_walk():
    rng = np.random.default_rng(1)
    st_ = SnakeState.start(SRW4, rng)
    ups = 0
    n = 20_000
    for _ in range(n):
        z = st_.zeta
        snake_step(st_, rng)
        assert abs(st_.zeta - z) == 1
        ups += st_.zeta > z
    assert abs(ups / n - 0.5) < 4 * 0.5 / math.sqrt(n)


def test_path_increments_in_support():
    rng = np.random.default_rng(2)
    st_ = SnakeState.start(SRW4, rng)
    for _ in range(500):
        snake_step(st_, rng)
    js = range(st_.zeta - 30, st_.zeta)
    for j in js:
        assert np.abs(st_.value(j + 1) - st_.value(j)).sum() == 1


def test_free_run_consistent_with_state():
    ud, heads = free_snake_run(SRW4, 2000, np.random.default_rng(4))
    assert heads.shape == (2001, 4)
    assert np.all(np.abs(np.diff(heads, axis=0)).sum(axis=1) <= 2 * 2000)
    # appended heads differ from the previous head by one step
    up = ud > 0
    assert np.all(np.abs(heads[1:][up] - heads[:-1][up]).sum(axis=1) == 1)


@settings(max_examples=30)
@given(st.integers(1, 60), st.integers(0, 1000))
def test_dyck_steps(n, seed):
    ud = uniform_dyck_steps(n, np.random.default_rng(seed))
    z = np.cumsum(ud)
    assert len(ud) == 2 * n and z[-1] == 0 and z.min() >= 0


def test_excursion_small():
    ex = sample_excursion(1, SRW4, np.random.default_rng(0))
    assert ex.zeta_path.tolist() == [0, 1, 0]
    assert excursion_range(ex) == 2
    ex = sample_excursion(50, SRW4, np.random.default_rng(1))
    assert excursion_range(ex) <= 51


def test_excursion_heads_delta():
    ex = sample_excursion(40, make_jump_delta([1]), np.random.default_rng(3))
    # with a deterministic unit jump the head is the lifetime itself
    assert np.array_equal(ex.head_path[:, 0], ex.zeta_path)


def test_excursion_law_matches_tree_range():
    rng1, rng2 = rng_stream(10), rng_stream(11)
    a = [excursion_range(sample_excursion(60, SRW4, rng1)) for _ in range(3000)]
    b = [range_of(assign_locations(sample_uniform_plane_tree(61, rng2), SRW4, rng2)) for _ in range(3000)]
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_no_return_head_first_step():
    rec = estimate_no_return_head(SRW4, 1, 200, 0)
    assert rec.value == 1.0
    big = estimate_no_return_head(SRW4, 2000, 300, 1)
    small = estimate_no_return_head(SRW4, 100, 300, 1)
    assert small.value >= big.value


def test_no_return_head_stopped():
    rec = estimate_no_return_head(SRW4, 10, 100, 2, p_stop=5)
    assert 0 < rec.value < 1


def test_free_range_bounds():
    rec = free_range(SRW4, 5000, 4, 3, checkpoints=[100, 1000])
    scale = math.log(5000) / 5000
    assert 0 < rec.value <= 5001 * scale
    assert rec.extra["second_moment"] >= rec.value ** 2 - 1e-12


def test_symmetry_k2():
    rep = symmetry_check(SRW4, 2, 4000, 5)
    assert rep["hit_rate"] == pytest.approx(11 / 32, abs=0.03)
    assert rep["depth_p"] > 0.001 and rep["step_p"] > 0.001


def test_symmetry_too_few():
    with pytest.raises(TooFewHits):
        symmetry_check(SRW4, 2, 50, 5)


def test_green_identity_d5():
    th = make_jump_srw(5)
    w0 = np.array([[0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [1, 1, 0, 0, 0]])
    res = green_identity_check(th, w0, 2, 1500, 9, GreenTable(th, 10), step_cap=200_000)
    assert abs(res["z"]) < 3.5, res


def test_visitzero_table_monotone():
    tab = head_return_table(SRW4, [100, 1000])
    assert tab[100] > tab[1000] > 0
