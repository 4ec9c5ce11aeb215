import math
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from timing_sim.protocol import aggregate_votes
from timing_sim.rewards import REWARD_OUT_OF_DOMAIN, RewardParams, is_time_decreasing


def test_mev():
    assert RewardParams(6.5e-6, 0.0, 0.0, 0.0, 12000).mev(12000) == pytest.approx(0.078)
    assert RewardParams(2, 1, 3, 30, 10).mev(0) == 1
    assert RewardParams(2, 1, 3, 30, 10).mev(3) == 7


def test_block_reward_endpoints():
    r = RewardParams.linear(1.0, 0.0, 2.0, 10.0)
    assert r.block_reward(10.0) == 0
    assert r.block_reward(0.0) == r.b0 == 20.0
    assert r.block_reward(math.inf) == 0
    assert r.block_reward(aggregate_votes([None] * 3, 2)) == 0


def test_block_reward_midpoint():
    r = RewardParams(mu=0.0, mu0=0.0, b=0.038 / 12000, b0=0.038, tau=12000)
    assert r.block_reward(6000) == pytest.approx(0.019)


def test_block_reward_flags_out_of_domain():
    r = RewardParams.linear(1.0, 0.0, 2.0, 10.0)
    v = Counter()
    assert r.block_reward(12.0, v) == 0
    assert r.block_reward(-1.0, v) == 22.0  # evaluated on the line, but flagged
    assert v[REWARD_OUT_OF_DOMAIN] == 2


def test_static_rewards():
    r = RewardParams(1.0, 0.5, 2.0, 20.0, 10.0, static=True)
    assert r.block_reward(3.0) == 20.0 and r.block_reward(0) == 20.0


def test_b0_must_match_timeout():
    with pytest.raises(ValueError, match="b \\* tau"):
        RewardParams(1.0, 0.0, 2.0, 5.0, 10.0)


def test_is_time_decreasing():
    assert is_time_decreasing(RewardParams.linear(1.0, 0.0, 2.0, 5.0))
    assert not is_time_decreasing(RewardParams.linear(1.0, 0.0, 1.0, 5.0))
    mu, tau = 6.5e-6, 12000
    at = RewardParams(mu, 0.0, 0.078 / tau, 0.078, tau)
    above = RewardParams(mu, 0.0, 0.0781 / tau, 0.0781, tau)
    assert not is_time_decreasing(at, tau)
    assert is_time_decreasing(above, tau)


def test_target_block_reward():
    r = RewardParams.linear(1.0, 0.0, 2.0, 10.0, target=4.0)
    assert r.block_reward(0.0) == 0
    assert r.block_reward(4.0) == pytest.approx(2.0 * 6.0)
    assert r.block_reward(10.0) == 0
    assert r.target_block_reward(2.0, 4.0) == pytest.approx(6.0)


@given(st.floats(0.01, 10), st.floats(1.01, 5), st.floats(1, 1000), st.floats(0, 1), st.floats(0, 1))
def test_time_decreasing_property(mu, kappa, tau, a, b):
    r = RewardParams.linear(mu, 0.1, kappa, tau)
    x1, x2 = sorted((a * tau, b * tau))
    if x2 - x1 > 1e-6 * tau:
        assert r.total(x1) > r.total(x2)


@given(st.floats(0.01, 10), st.floats(1.01, 5), st.floats(10, 1000), st.floats(0.05, 0.95), st.floats(0, 1), st.floats(0, 1))
def test_target_shape_property(mu, kappa, tau, tfrac, a, b):
    target = tfrac * tau
    r = RewardParams.linear(mu, 0.0, kappa, tau, target=target)
    x1, x2 = sorted((a, b))
    if x2 - x1 < 1e-6:
        return
    # rising before the target, total reward falling after it
    assert r.block_reward(x1 * target) < r.block_reward(x2 * target)
    y1, y2 = target + x1 * (tau - target), target + x2 * (tau - target)
    assert r.mev(y1) + r.block_reward(y1) > r.mev(y2) + r.block_reward(y2)
