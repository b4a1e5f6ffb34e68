import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import comb

from treerange.analytics import (
    GreenTable, bessel_log_integral, convolution_mass_drift, cs_bound_fit, green, green_asymptotic,
    green_sum_along_walk, green_sum_mean_exact, harmonic_defect, kemperman_check, kemperman_grid, llt_compare,
    return_probabilities, step_pmf_power, suffcond_diagnostic,
)
from treerange.distributions import make_geometric_critical, make_jump, make_jump_srw
from treerange.errors import BoxBudgetExceeded, DomainError, NonTransient, ParityError

# Watson's integral: G(0) for SRW on Z^3
WATSON3 = 1.516386059151978


def _g0_by_return_sum(d, M=4000):
    # sum of exact return probabilities plus the local-limit tail 2 (d / 4 pi n)^{d/2} over even steps
    p = return_probabilities(make_jump_srw(d), M)
    n = np.arange(M // 2 + 1, 10 ** 7)
    return math.fsum(p) + float(np.sum(2 * (d / (4 * math.pi * n)) ** (d / 2)))


def test_step_pmf_small():
    f = step_pmf_power(make_jump_srw(2), 2)
    assert f.at([0, 0]) == pytest.approx(0.25)
    assert f.at([1, 1]) == pytest.approx(0.125)
    assert f.at([2, 0]) == pytest.approx(1 / 16)
    assert f.total() == pytest.approx(1.0)


def test_mass_conservation():
    mass, sym = convolution_mass_drift(make_jump_srw(2), 200)
    assert mass <= 1e-12 and sym <= 1e-15


def test_box_budget():
    with pytest.raises(BoxBudgetExceeded):
        convolution_mass_drift(make_jump_srw(4), 1000)


def test_return_probabilities_closed_forms():
    m = np.arange(0, 41, 2)
    p1 = return_probabilities(make_jump_srw(1), 40)
    assert np.allclose(p1[m], comb(m, m // 2) / 2.0 ** m, rtol=1e-12)
    p2 = return_probabilities(make_jump_srw(2), 40)
    # p_{2n}(0) in Z^2 equals the square of the one-dimensional value
    assert np.allclose(p2[m], (comb(m, m // 2) / 2.0 ** m) ** 2, rtol=1e-12)
    assert np.all(p2[1::2] == 0)


def test_split_agrees_with_dp():
    th = make_jump_srw(4)
    a = return_probabilities(th, 20, method="split")
    b = return_probabilities(th, 20, method="dp")
    assert np.max(np.abs(a - b)) < 1e-15
    assert a[2] == pytest.approx(1 / 8)


def test_green_origin_polya():
    assert green(make_jump_srw(3), [0, 0, 0]).value == pytest.approx(WATSON3, rel=1e-9)
    assert green(make_jump_srw(4), [0, 0, 0, 0]).value == pytest.approx(_g0_by_return_sum(4), rel=1e-7)


def test_green_recurrent_and_drift():
    with pytest.raises(NonTransient):
        green(make_jump_srw(2), [0, 0])
    drift = make_jump([[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0]], [0.25] * 4)
    with pytest.raises(DomainError):
        green(drift, [0, 0, 0])


def test_green_certified_convolution_bound():
    srw = make_jump_srw(5)
    table = make_jump(srw.support, srw.probs)
    exact = green(srw, [1, 0, 0, 0, 0]).value
    for eps in (0.2, 0.05):
        g = green(table, [1, 0, 0, 0, 0], eps=eps, kmax=14)
        assert g.method == "convolution"
        assert g.value <= exact <= g.value + g.tail_bound


def test_green_asymptotics_d4():
    th = make_jump_srw(4)
    vals = [r * r * green(th, [r, 0, 0, 0]).value for r in (10, 20, 40)]
    target = 2 / math.pi ** 2
    errs = [abs(v / target - 1) for v in vals]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01
    assert green_asymptotic(th, [[40, 0, 0, 0]])[0] * 1600 == pytest.approx(target)


def test_green_table_harmonic():
    tab = GreenTable(make_jump_srw(4), 12)
    assert harmonic_defect(tab, 10) < 1e-10
    assert tab.origin == pytest.approx(green(make_jump_srw(4), [0, 0, 0, 0]).value, rel=1e-12)
    bad = tab.with_corruption([2, 1, 0, 0], 1.01)
    assert harmonic_defect(bad, 10) > 1e-4


def test_green_table_lazy_walk():
    # G for the walk that stays put half of the time is twice the SRW Green function
    srw = make_jump_srw(3)
    sup = np.vstack([np.zeros((1, 3), np.int64), srw.support])
    lazy = make_jump(sup, [0.5] + [1 / 12] * 6)
    tab = GreenTable(lazy, 4, dp_steps=60)
    exact = 2 * green(srw, [1, 0, 0]).value
    assert tab(np.array([[1, 0, 0]]))[0] == pytest.approx(exact, rel=0.02)


def test_kemperman_grid_small():
    rows = kemperman_grid(10, 51)
    assert rows and all(a == b for _, _, a, b in rows)
    with pytest.raises(ParityError):
        kemperman_check(0, 2)


@given(st.integers(0, 15), st.integers(1, 80))
def test_kemperman_hypothesis(m, dk):
    k = m + dk
    if (k + m) % 2 == 0:
        with pytest.raises(ParityError):
            kemperman_check(m, k)
    else:
        lhs, rhs = kemperman_check(m, k)
        assert lhs == rhs
        assert isinstance(lhs, Fraction)


def test_llt_compare_small_error():
    assert llt_compare(10_000, 0) < 1e-4
    assert llt_compare(100, 0) > llt_compare(10_000, 0)


def test_green_sum_mean():
    th = make_jump_srw(4)
    tab = GreenTable(th, 12)
    exact = green_sum_mean_exact(th, 200)
    rec = green_sum_along_walk(th, 200, 400, 5, tab)
    assert abs(rec.value * math.log(200) - exact) < 4 * rec.stderr * math.log(200)


def test_suffcond_d5_stabilises():
    th = make_jump_srw(5)
    rec = suffcond_diagnostic(make_geometric_critical(), th, 2000, 50, 3, GreenTable(th, 8), j_from=200)
    assert rec.extra["stabilized"]


def test_bessel_integral_mean():
    rec = bessel_log_integral(1.0, 20.0, 1e-3, 100, 7)
    assert abs(rec.value - rec.extra["target"]) < 4 * rec.stderr
    assert rec.extra["marginal_4"] == pytest.approx(1.0, abs=6 * rec.extra["marginal_4_stderr"])
    with pytest.raises(DomainError):
        bessel_log_integral(1.0, 2.0, 0.1, 1, 0)


def test_cs_bound_grows_slowly():
    fit = cs_bound_fit(GreenTable(make_jump_srw(4), 16), radii=(2, 4, 8), box=16)
    assert all(v > 0 for v in fit.values())
