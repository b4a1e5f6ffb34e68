import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats
from scipy.stats import norm

from treerange.brw import (
    PointMeasure, brw_replicas, brw_run, brw_step, criticality_check, j_cdf, j_density, ks_progeny,
    progeny_law, ratio_experiment,
)
from treerange.distributions import OffspringDistribution, make_geometric_critical, make_jump_delta, make_jump_srw, make_offspring
from treerange.errors import CapExceeded, DomainError
from treerange.gw_trees import assign_locations, range_of, sample_gw
from treerange.rng import rng_stream

GEO = make_geometric_critical()
SRW5 = make_jump_srw(5)


def test_empty_state_stays_empty(rng):
    assert brw_step(PointMeasure.empty(5), GEO, SRW5, rng).total == 0


def test_forced_binary_step(rng):
    # mu(2) = 1 is not critical, so the validated constructor rejects it; build the law directly
    forced = OffspringDistribution(pmf=np.array([0.0, 0.0, 1.0]), mean=2.0, variance=0.0, name="forced")
    st = brw_step(PointMeasure.at_origin(1, 2), forced, make_jump_delta([1, 0]), rng)
    assert st.counts == {(1, 0): 2}


def test_point_measure_invariants():
    with pytest.raises(DomainError):
        PointMeasure(np.zeros((1, 2), np.int64), np.array([0]))
    pm = PointMeasure.from_particles(np.array([[0, 0], [1, 0], [0, 0]]))
    assert pm.total == 3 and pm.counts == {(0, 0): 2, (1, 0): 1}


def test_criticality():
    res = criticality_check(GEO, SRW5, 20_000, 3)
    assert abs(res["mean"] - 1) < 4 * res["stderr"]


def test_j_cdf_values():
    assert j_cdf(1.0) == pytest.approx(0.31731050786291415)
    assert j_cdf(1e12) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DomainError):
        j_cdf(0.0)


def test_j_cdf_quadrature_oracle():
    for s in (0.3, 1.0, 5.0):
        q, _ = integrate.quad(j_density, 0, s)
        assert j_cdf(s) == pytest.approx(q, rel=1e-8)
    med = optimize.brentq(lambda s: integrate.quad(j_density, 0, s)[0] - 0.5, 0.5, 10)
    assert med == pytest.approx(1 / norm.ppf(0.75) ** 2, rel=1e-6)
    assert j_cdf(med) == pytest.approx(0.5, abs=1e-8)


def test_progeny_law_closed_form():
    # p = 1: P(N = n) = Catalan(n-1) 2^{-(2n-1)} for geometric mu
    law = progeny_law(GEO, 1, 9)
    for n in range(1, 10):
        assert law[n] == pytest.approx(math.comb(2 * n - 2, n - 1) / n / 2 ** (2 * n - 1))


def test_progeny_law_hitting_time_theorem():
    # P(N = n) = (p / n) P(S_n = -p) for p = 3, with S the walk with steps k - 1
    binary = make_offspring([(0, 0.5), (2, 0.5)])
    law = progeny_law(binary, 3, 9)
    for n in range(3, 10):
        # S_n = -3 means (n - 3)/2 up-steps out of n
        up = (n - 3) / 2
        exact = 0.0 if up != int(up) else math.comb(n, int(up)) / 2 ** n
        assert law[n] == pytest.approx(3 / n * exact)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_progeny_pmf_empirical(p):
    runs = brw_replicas(p, GEO, None, 20_000, 40 + p, progeny_cap=10 ** 6)
    n = np.array([r.progeny for r in runs])
    law = progeny_law(GEO, p, p + 8)
    for k in range(p, p + 9):
        f = np.mean(n == k)
        se = math.sqrt(law[k] * (1 - law[k]) / len(n))
        assert abs(f - law[k]) < 4 * se + 1e-12


def test_run_bounds():
    for i in range(50):
        r = brw_run(3, GEO, SRW5, rng_stream(2, i), progeny_cap=10 ** 6)
        assert 1 <= r.range <= r.progeny and r.progeny >= 3


def test_p1_extinction_rate():
    runs = brw_replicas(1, GEO, SRW5, 4000, 8, progeny_cap=10 ** 5)
    assert np.mean([r.progeny == 1 for r in runs]) == pytest.approx(0.5, abs=0.03)


def test_joint_law_matches_spatial_tree():
    # p = 1: (R, N) has the law of (range, size) of one spatial GW tree
    a = brw_replicas(1, GEO, SRW5, 6000, 12, progeny_cap=10 ** 5)
    rng = rng_stream(13)
    b = []
    for _ in range(6000):
        try:
            t = sample_gw(GEO, rng, 10 ** 5)
        except CapExceeded:
            # huge trees land in the "n > 7, R < N" cell, like capped runs
            b.append((0, 10 ** 5 + 1))
            continue
        b.append((range_of(assign_locations(t, SRW5, rng)), t.size))
    cells = lambda r, n: n if n <= 7 else 8 + (r < n)
    ca = np.bincount([cells(r.range, r.progeny) for r in a], minlength=10)
    cb = np.bincount([cells(r, n) for r, n in b], minlength=10)
    assert stats.chi2_contingency(np.array([ca, cb])[:, ca + cb > 0]).pvalue > 0.001


def test_ks_progeny_small():
    runs = brw_replicas(30, GEO, None, 2000, 5, progeny_cap=10 ** 7)
    res = ks_progeny(runs, 30, 2.0)
    assert res["p_value"] > 0.001


def test_ratio_experiment():
    out = ratio_experiment(5, GEO, SRW5, 60, 9, progeny_cap=10 ** 6)
    assert np.all((out["ratio"] > 0) & (out["ratio"] <= 1))
