import math

import numpy as np
import pytest
from scipy import stats
from hypothesis import given, settings, strategies as st

from treerange._kernels import count_distinct
from treerange.analytics import GreenTable
from treerange.distributions import make_geometric_critical, make_jump_delta, make_jump_srw, make_offspring
from treerange.errors import DomainError, HTableMiss, InsufficientPrefix
from treerange.rng import rng_stream
from treerange.spine import (
    SpinePrefix, SpineStream, build_h_table, estimate_a, estimate_c_formula, estimate_no_return,
    estimate_range_constant, conditioned_range, gw_size_pmf, invariance_expected, phi_values, range_process,
    shift_invariance_test, shift_tau,
)

GEO = make_geometric_critical()
SRW3 = make_jump_srw(3)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 5, 17]))
def test_shift_recentres_the_sequence(seed, n):
    sp = SpinePrefix.sample(GEO, SRW3, rng_stream(seed))
    z = sp.locations(n + 40)
    shifted = sp.shift_n(n).locations(40)
    assert np.array_equal(shifted, z[n:n + 40] - z[n])


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 30), st.integers(1, 30))
def test_subadditivity_pathwise(seed, n, m):
    sp = SpinePrefix.sample(GEO, SRW3, rng_stream(seed))
    z = sp.locations(n + m)
    rest = sp.shift_n(n).locations(m)
    assert count_distinct(z) <= count_distinct(z[:n]) + count_distinct(rest)


def test_frozen_fixture_shift():
    # T_0 = single vertex; T_-1 has 2 children, the first with one child
    theta = make_jump_delta([1])
    counts = [[0], [2, 1, 0, 0]]
    locs = [[[0]], [[-1], [0], [1], [0]]]
    sp = SpinePrefix.from_parts(GEO, theta, counts, locs, [True, True])
    new = shift_tau(sp)
    assert new.counts[0].tolist() == [1, 0]
    assert new.counts[1].tolist() == [1, 0]
    assert new.locs[0].tolist() == [[0], [1]]
    assert new.locs[1].tolist() == [[-1], [0]]
    with pytest.raises(InsufficientPrefix):
        SpinePrefix.from_parts(GEO, theta, [[0]], [[[0]]], [True]).shift()


def test_stream_starts_at_origin(rng):
    st_ = SpineStream(GEO, SRW3, rng)
    block = st_.take(1000)
    assert np.all(block[0] == 0)
    assert np.abs(np.diff(block, axis=0)).sum(axis=1).max() < 1000


def test_range_process_monotone(rng):
    tr = range_process(SpineStream(GEO, SRW3, rng), 5000, [1, 10, 100, 1000, 5000])
    assert tr.r_values[0] == 1
    assert np.all(np.diff(tr.r_values) >= 0)
    assert np.all(tr.r_values <= tr.checkpoints)
    with pytest.raises(DomainError):
        range_process(SpineStream(GEO, SRW3, rng), 10, [20])


def test_increment_law_is_stationary():
    # under the invariant law z_{u_1} - z_{u_0} and z_{u_2} - z_{u_1} have the same law
    cells = {tuple(v): i for i, v in enumerate(SRW3.support)}
    tab = np.zeros((2, len(cells) + 1))
    for i in range(4000):
        z = SpineStream(GEO, SRW3, rng_stream(5, i)).take(3)
        for row, inc in enumerate((z[1] - z[0], z[2] - z[1])):
            tab[row, cells.get(tuple(inc), len(cells))] += 1
    assert stats.chi2_contingency(tab).pvalue > 0.001


def test_size_pmf_catalan():
    pmf = gw_size_pmf(GEO, 8)
    for n in range(1, 9):
        assert pmf[n] == pytest.approx(math.comb(2 * n - 2, n - 1) / n / 2 ** (2 * n - 1))


def test_invariance_cells_sum_to_one():
    j, s = invariance_expected(GEO)
    assert j.sum() == pytest.approx(1.0)
    assert s.sum() == pytest.approx(1.0)
    assert j[0] == pytest.approx(0.25)


def test_shift_invariance_small():
    rep = shift_invariance_test(GEO, make_jump_srw(1), 3000, 12)
    assert rep["passed"], rep


def test_phi_geometric_matches_series():
    q = np.linspace(0, 1, 11)
    assert np.allclose(phi_values(GEO, q), 1 / (2 - q))
    binary = make_offspring([(0, 0.5), (2, 0.5)])
    # tail(0) = 1/2, tail(1) = 1/2
    assert np.allclose(phi_values(binary, q), 0.5 + 0.5 * q)


def test_h_table_against_direct_estimate():
    th = SRW3
    tab = build_h_table(GEO, th, 3, 4000, 1, batches=4, fallback="error")
    direct = estimate_a(GEO, th, 4000, 2)
    se = math.sqrt(direct.stderr ** 2 + tab.a() * (1 - tab.a()) / 4000)
    assert abs(tab.a() - direct.value) < 4 * se
    with pytest.raises(HTableMiss):
        tab.h([[10, 0, 0]])
    # visiting 0 is certain, so h(0) = 0
    assert tab.h([[0, 0, 0]])[0] == 0.0


def test_h_table_fallback_and_jmax_zero():
    # the visit probability is proportional to G only for d >= 5
    th = make_jump_srw(5)
    tab = build_h_table(GEO, th, 2, 2000, 3, batches=4, green=GreenTable(th, 6))
    assert 0.3 < tab.kappa < 1.5
    assert 0.0 <= tab.h([[9, 0, 0, 0, 0]])[0] <= 1.0
    rec = estimate_c_formula(GEO, th, 0, 10, 4, tab)
    assert rec.value == pytest.approx(tab.a())
    rec = estimate_c_formula(GEO, th, 50, 40, 4, tab)
    assert 0 < rec.value <= tab.a()
    assert rec.extra["value_at_jmax_over_10"] >= rec.value


def test_estimators_are_probabilities():
    r = estimate_range_constant(GEO, SRW3, 2000, 4, 1)
    assert 0 < r.value <= 1
    nr = estimate_no_return(GEO, SRW3, 500, 50, 2)
    curve = nr.extra["curve"]
    vals = [curve[h] for h in sorted(curve)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    cr = conditioned_range(GEO, SRW3, 300, 5, 3)
    assert 0 < cr.value <= 301 / 300
