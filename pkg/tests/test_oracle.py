import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timing_sim import oracle
from timing_sim.latency import DeterministicCluster, DeterministicLine
from timing_sim.protocol import ProtocolParams
from timing_sim.rewards import RewardParams
from timing_sim.strategies import StrategyProfile

LINE_PROTO = ProtocolParams(6, 4, 4, 25.0)
LINE_REWARDS = RewardParams.linear(1.0, 0.0, 1.5, 25.0)
CLUSTER = oracle.ClusterParams(6, 3, 1, 10)
CLUSTER_PROTO = ProtocolParams(9, 6, 6, 100.0)
CLUSTER_REWARDS = RewardParams.linear(1.0, 0.0, 1.5, 100.0)


@pytest.mark.parametrize("i, j, expected", [(0, 5, 5), (2, 3, 3), (0, 1, 5)])
def test_line_quorum_examples(i, j, expected):
    assert oracle.line_quorum_closed_form(6, i, j) == expected


@pytest.mark.parametrize(
    "n, s_end, s_mid, e_end, e_mid",
    [
        (6, F(9, 2), F(7, 2), F(3, 2), F(-1, 2)),
        (12, F(61, 6), F(23, 3), F(23, 6), F(-1, 3)),
        (18, F(95, 6), F(71, 6), F(37, 6), F(-1, 6)),
        (36, F(197, 6), F(73, 3), F(79, 6), F(1, 3)),
    ],
)
def test_line_means_frozen(n, s_end, s_mid, e_end, e_mid):
    assert oracle.line_mean_start(n, "endpoint") == s_end
    assert oracle.line_mean_start(n, "center") == s_mid
    assert oracle.line_mean_error(n, "endpoint") == e_end
    assert oracle.line_mean_error(n, "center") == e_mid


def test_line_closed_forms_need_multiple_of_six():
    with pytest.raises(ValueError):
        oracle.line_mean_start(9, "center")
    with pytest.raises(ValueError):
        oracle.line_quorum_closed_form(7, 0, 1)


def test_cluster_means_examples():
    got = oracle.cluster_means(CLUSTER, 6, 6)
    assert got == oracle.cluster_means_enumerated(CLUSTER, 6, 6)
    # small X: the quorum needs the other cluster
    small = oracle.ClusterParams(5, 4, 1, 10)
    assert oracle.cluster_means(small, 6, 6) == oracle.cluster_means_enumerated(small, 6, 6)


def test_honest_utilities_frozen():
    line = oracle.honest_utility_closed_form(LINE_PROTO, LINE_REWARDS, DeterministicLine(6).matrix())
    assert line == [F(99, 71), F(209, 142), F(219, 142), F(219, 142), F(209, 142), F(99, 71)]
    cl = oracle.honest_utility_closed_form(CLUSTER_PROTO, CLUSTER_REWARDS, oracle.cluster_matrix(CLUSTER))
    assert cl == [F(19, 9)] * 6 + [F(67, 36)] * 3


def test_profile_utility_matches_closed_form():
    for proto, rw, m in (
        (LINE_PROTO, LINE_REWARDS, DeterministicLine(6).matrix()),
        (CLUSTER_PROTO, CLUSTER_REWARDS, oracle.cluster_matrix(CLUSTER)),
    ):
        honest = StrategyProfile.honest(proto.n)
        assert oracle.profile_utility_exact(proto, rw, m, honest) == oracle.honest_utility_closed_form(proto, rw, m)


def test_small_coalition_prediction_frozen():
    m = DeterministicLine(6).matrix()
    pred = oracle.small_coalition_prediction(LINE_PROTO, LINE_REWARDS, m, [0, 5])
    assert pred[0] == pred[5] == F(207, 142)
    assert pred[1:5] == oracle.honest_utility_closed_form(LINE_PROTO, LINE_REWARDS, m)[1:5]
    enumerated = oracle.profile_utility_exact(LINE_PROTO, LINE_REWARDS, m, StrategyProfile.with_coalition(6, [0, 5]))
    assert enumerated == pred


def test_large_coalition_frozen():
    prof = StrategyProfile.with_coalition(9, range(6), leaders_late=True)
    got = oracle.profile_utility_exact(CLUSTER_PROTO, CLUSTER_REWARDS, oracle.cluster_matrix(CLUSTER), prof)
    assert got == [F(23, 60)] * 6 + [F(67, 330)] * 3


def test_z_low_latency():
    z = oracle.large_coalition_threshold(CLUSTER_PROTO, 6)
    assert z == F(1, 7)
    check = oracle.z_low_latency_check(oracle.cluster_matrix(CLUSTER), CLUSTER_PROTO, z)
    assert check.satisfied and check.offenders == 3
    assert check.mean_durations == (2,) * 6 + (20,) * 3
    line = oracle.z_low_latency_check(DeterministicLine(6).matrix(), LINE_PROTO, oracle.large_coalition_threshold(LINE_PROTO, 4))
    assert not line.satisfied and line.offenders == 4
    with pytest.raises(ValueError):
        oracle.large_coalition_threshold(CLUSTER_PROTO, 5)
    assert oracle.large_coalition_defection_bound(CLUSTER_PROTO, F(1, 8), 6)


def test_zero_latency_utility_is_unbounded():
    with pytest.warns(UserWarning):
        out = oracle.profile_utility_exact(LINE_PROTO, LINE_REWARDS, np.zeros((6, 6)), StrategyProfile.honest(6))
    assert out == [math.inf] * 6


def test_line_early_limit():
    assert oracle.advantage_line_early_limit(1.5, 5) == F(3, 29)


@pytest.mark.parametrize("n", [6, 12, 36])
def test_line_early_derived_matches_enumeration(n):
    args = (n, F(3, 2), 5, F(1, 1000), F(1, 100))
    assert oracle.advantage_line_early_derived(*args) == oracle.advantage_line_early_enumerated(*args)


def test_line_early_printed_form_converges_to_limit():
    # the printed form differs from enumeration at small n; both share the limit
    args = (F(3, 2), 5, F(1, 1000), F(1, 100))
    assert float(oracle.advantage_line_early(6, *args)) == pytest.approx(0.0833, abs=1e-4)
    assert float(oracle.advantage_line_early_derived(6, *args)) == pytest.approx(0.0693, abs=1e-4)
    big = 600_000
    lim = oracle.advantage_line_early_limit(F(3, 2), 5)
    assert abs(oracle.advantage_line_early(big, *args) - lim) < 1e-4
    assert abs(oracle.advantage_line_early_derived(big, *args) - lim) < 1e-4


def test_cluster_early_matches_enumeration():
    # early advantage equals (best proxy / worst proxy) - 1 from enumerated means
    p = oracle.ClusterParams(7, 2, 1, 10)
    kappa, d, mu, mu0 = F(3, 2), 5, F(1, 1000), F(1, 100)
    got = oracle.advantage_cluster_early(p, kappa, d, mu, mu0, c=6)
    means = oracle.cluster_means_enumerated(p, 6, 6)
    tau = 2 * d * p.inter
    b = kappa * mu

    def proxy(k):
        s, e = means[f"start_{k}"], means[f"error_{k}"]
        return mu * s + mu0 + b * (tau - s - e)

    hi, lo = max(proxy("x"), proxy("y")), min(proxy("x"), proxy("y"))
    assert got == hi / lo - 1


def test_ratio_advantage_rejects_bad_regime():
    with pytest.raises(ValueError, match="invalid parameter regime"):
        oracle.ratio_advantage(F(1), F(0))


def test_advantage_dispatch():
    inputs = oracle.AdvantageInputs(oracle.LineParams(60), 1.5, 5, 6e-6, 0.005, 0.038, "early")
    assert oracle.advantage(inputs) == oracle.advantage_line_early(60, 1.5, 5, 6e-6, 0.005)
    late = oracle.AdvantageInputs(oracle.LineParams(60), 1.5, 5, 6e-6, 0.005, 0.038, "late")
    assert oracle.advantage(late) == oracle.advantage_line_late(60, 0.038, 0.005, 5, 6e-6)
    with pytest.raises(ValueError):
        oracle.LineParams(9)


def test_binary_decay_stationary_examples():
    assert oracle.binary_decay_stationary(0, F(1, 2)) == (0, 1)
    assert oracle.binary_decay_stationary(1, F(1, 2)) == (1, 0)
    assert oracle.binary_decay_stationary(F(1, 2), F(1, 2)) == (F(2, 3), F(1, 3))


def test_binary_decay_grid_sums_to_one():
    for p in np.linspace(0, 1, 100):
        for rho in np.linspace(0.005, 0.995, 100):
            low, high = oracle.binary_decay_stationary(float(p), float(rho))
            assert low + high == pytest.approx(1.0)
            assert 0 <= low <= 1


@given(st.fractions(0, 1), st.fractions(F(1, 1000), F(999, 1000)))
def test_binary_decay_balance_equation(p, rho):
    # a low-weight validator is elected at relative rate 1 - rho and leaves on an on-time vote;
    # a high-weight one is elected at rate 1 and leaves on a late vote
    low, high = oracle.binary_decay_stationary(p, rho)
    flow_out = low * (1 - rho) * (1 - p)
    flow_in = high * p
    assert flow_out == flow_in
    assert low + high == 1


def test_figure_grids():
    ns = oracle.line_figure_grid()
    assert ns[0] == 6 and ns[-1] <= 100_000 and all(n % 6 == 0 for n in ns)
    ls = oracle.cluster_figure_grid()
    assert len(ls) == 100 and ls[0] == pytest.approx(0.2) and ls[-1] == pytest.approx(10_000)
