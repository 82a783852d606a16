import pytest
from hypothesis import given, strategies as st

from onebit_mimo.costs import CostEstimator, PowerParams, complexity, receiver_power

N_R = (20, 30, 40, 50, 60, 70, 80, 90, 100)

# total operations at M = 3, tau = 20, l_win = 3, N_t = 8
COST_POINTS = {
    CostEstimator.STANDARD_LS: (24798022400, 83590886400, 198020089600, 386615936000, 667908729600,
                                1060428774400, 1582706374400, 2253271833600, 3090655456000),
    CostEstimator.LRA_LS: (25723605200, 86708630400, 205404938800, 401034034400, 692817421200,
                           1099976603200, 1641733084400, 2337308368800, 3205923960400),
    CostEstimator.LRA_LMMSE: (29516878640, 99502439760, 235720944880, 460233194000, 795099987120,
                              1262382124240, 1884140405360, 2682435630480, 3679328599600),
    CostEstimator.LRA_LMS: (6910560, 10365840, 13821120, 17276400, 20731680, 24186960, 27642240,
                            31097520, 34552800),
}

POWER_POINTS = {
    1: (803.62, 1064.74, 1074.98, 1095.46, 1136.42),
    2: (808.74, 1074.98, 1095.46, 1136.42, 1218.34),
    3: (813.86, 1085.22, 1115.94, 1177.38, 1300.26),
}


@pytest.mark.parametrize("est", list(CostEstimator))
def test_complexity_reference_points(est):
    got = tuple(complexity(est, n_r, 8, 3, 20, 3).total for n_r in N_R)
    assert got == COST_POINTS[est]


def test_lms_split():
    rep = complexity("lra_lms", 20, 8, 3, 20, 3)
    assert (rep.additions, rep.multiplications) == (3168720, 3741840)
    assert isinstance(rep.total, int)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_power_reference_points(m):
    got = [receiver_power(b, m, 64).total_mw for b in range(1, 6)]
    assert got == pytest.approx(POWER_POINTS[m], abs=0.01)


def test_power_components():
    rep = receiver_power(1, 1, 64)
    assert rep.components["AGC"] == 0
    assert receiver_power(2, 1, 64).components["AGC"] == pytest.approx(2 * 64 * 2.0)
    custom = receiver_power(1, 1, 64, PowerParams(p_bb=0.0))
    assert rep.total_mw - custom.total_mw == pytest.approx(200.0)


@given(n_r=st.integers(8, 200), m=st.integers(1, 4), tau=st.integers(8, 40))
def test_lms_cheapest_and_monotone(n_r, m, tau):
    costs = {e: complexity(e, n_r, 8, m, tau).total for e in CostEstimator}
    assert costs[CostEstimator.LRA_LMS] == min(costs.values())
    for e in CostEstimator:
        assert complexity(e, n_r + 1, 8, m, tau).total > costs[e]


def test_invalid_arguments():
    with pytest.raises(ValueError):
        complexity("unknown", 20, 8, 3, 20)
    with pytest.raises(ValueError):
        complexity("lra_ls", 0, 8, 3, 20)
    with pytest.raises(ValueError):
        complexity("lra_ls", 20, 8, 1.5, 20)
    with pytest.raises(ValueError):
        complexity("lra_lms", 20, 8, 3, 2, l_win=3)
    with pytest.raises(ValueError):
        receiver_power(0, 1, 64)
    assert complexity("StandardLS", 20, 8, 3, 20) == complexity(CostEstimator.STANDARD_LS, 20, 8, 3, 20)
