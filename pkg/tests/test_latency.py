import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timing_sim.latency import (
    DRAW_BLOCK,
    DeterministicCluster,
    DeterministicLine,
    ExplicitMatrix,
    LognormalWorld,
    colocate,
    load_ping_table,
    normalize_weights,
    order_statistic,
    sample_draw,
    sample_draws,
    world_model_from_table,
)


def test_line_entries():
    m = sample_draw(DeterministicLine(4), 123, 0).latency
    assert m[0, 3] == 3
    assert np.array_equal(m, np.abs(np.subtract.outer(np.arange(4), np.arange(4))))


def test_cluster_entries():
    m = DeterministicCluster(2, 2, 1.0, 10.0).matrix()
    assert m[0, 1] == 1 and m[0, 2] == 10 and m[3, 2] == 1
    assert np.all(np.diag(m) == 0)


def test_cluster_rejects_bad_latencies():
    with pytest.raises(ValueError):
        DeterministicCluster(2, 2, 10.0, 1.0)


def test_line_triangle_equality():
    n = 8
    m = DeterministicLine(n).matrix()
    for i in range(n):
        for j in range(n):
            for k in range(n):
                between = min(i, j) <= k <= max(i, j)
                assert (m[i, k] + m[k, j] == m[i, j]) == between
                assert m[i, k] + m[k, j] >= m[i, j]


@pytest.mark.parametrize(
    "values, r, expected",
    [([5, 1, 3], 2, 3), ([2, 2, 2], 3, 2), ([-2, 0, 2, 2, 2, 2], 4, 2)],
)
def test_order_statistic_examples(values, r, expected):
    assert order_statistic(values, r) == expected


def test_order_statistic_line_differences():
    # |0-k| - |2-k| on the six-validator line
    diffs = [abs(0 - k) - abs(2 - k) for k in range(6)]
    assert sorted(diffs) == [-2, 0, 2, 2, 2, 2]
    assert order_statistic(diffs, 4) == 2


def test_order_statistic_rank_range():
    with pytest.raises(ValueError):
        order_statistic([1, 2], 3)
    with pytest.raises(ValueError):
        order_statistic([1, 2], 0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.data())
def test_order_statistic_matches_sort(values, data):
    r = data.draw(st.integers(1, len(values)))
    assert order_statistic(values, r) == sorted(values)[r - 1]


def test_bundled_ping_table():
    t = load_ping_table()
    assert len(t.cities) == 11
    a, d = t.cities.index("Amsterdam"), t.cities.index("Dublin")
    assert t.ping[a, d] == pytest.approx(18.898)
    s, y = t.cities.index("Seoul"), t.cities.index("Sydney")
    assert t.ping[s, y] == pytest.approx(137.450)
    assert t.weights[a] == 18
    assert sum(t.weights) == 115


def test_world_model_from_table():
    t = load_ping_table()
    model = world_model_from_table(t.ping, t.weights, cities=t.cities)
    assert model.n == 115
    assert model.tags().count("Amsterdam") == 18
    seoul = model.tags().index("Seoul")
    sydney = model.tags().index("Sydney")
    assert model.log_location(seoul, sydney) == pytest.approx(math.log(137.450))


def test_world_two_nodes_amsterdam_dublin():
    t = load_ping_table()
    counts = [1 if c in ("Amsterdam", "Dublin") else 0 for c in t.cities]
    model = LognormalWorld(t.cities, tuple(counts), t.ping)
    assert model.log_location(0, 1) == pytest.approx(math.log(18.898))
    # log-samples across many rounds centre on the underlying mean
    draws = sample_draws(model, 5, 0, 4000)
    logs = np.log(draws[:, 0, 1])
    assert abs(logs.mean() - math.log(18.898)) < 4 * 0.8 / math.sqrt(4000)
    assert abs(logs.std() - 0.8) < 0.05


def test_one_city_uses_intra_distribution():
    model = world_model_from_table(np.array([[0.0]]), [2], intra_params=(1.0, 0.5))
    assert model.log_location(0, 1) == 1.0 and model.log_location(1, 0) == 1.0
    logs = np.log(sample_draws(model, 1, 0, 4000)[:, 0, 1])
    assert abs(logs.mean() - 1.0) < 4 * 0.5 / math.sqrt(4000)


def test_sample_draw_is_pure():
    model = ExplicitMatrix(np.full((5, 5), 2.0), "lognormal", 0.3)
    a = sample_draw(model, [3, 1], 700).latency
    sample_draw(model, [3, 1], 2)  # unrelated call in between
    b = sample_draw(model, [3, 1], 700).latency
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_draw(model, [3, 1], 701).latency)
    assert np.all(np.diag(a) == 0) and np.all(a[~np.eye(5, dtype=bool)] > 0)


def test_sample_draws_matches_single_draws():
    model = ExplicitMatrix(np.ones((4, 4)), "exponential")
    start = DRAW_BLOCK - 3
    stack = sample_draws(model, 9, start, 10)
    for r in range(10):
        assert np.array_equal(stack[r], sample_draw(model, 9, start + r).latency)


def test_normalize_weights():
    w = load_ping_table().weights
    out = normalize_weights(w, 100)
    assert sum(out) == 100
    assert all(abs(o - x * 100 / 115) < 1 for o, x in zip(out, w))
    assert normalize_weights([1, 1, 1], 4) == (2, 1, 1)


def test_colocate():
    m = colocate(DeterministicLine(5).matrix(), [1, 3])
    assert m[1, 3] == 0 and m[3, 1] == 0 and m[1, 2] == 1


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(0, 5000))
def test_draws_nonnegative_with_zero_diagonal(seed, r):
    model = world_model_from_table(load_ping_table().ping, [1] * 11)
    m = sample_draw(model, seed, r).latency
    assert np.all(m >= 0) and np.all(np.diag(m) == 0)
