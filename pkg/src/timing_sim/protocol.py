"""One round of the timing game: start time, maximum delay, votes, aggregation.

Ranks are 1-based.  ``k`` ranges over all ``n`` validators (leader and
previous leader included) in every order-statistic multiset.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .latency import LatencyDraw, order_statistic

__all__ = [
    "ProtocolParams",
    "RoundOutcome",
    "quorum_time",
    "start_time",
    "latency_error",
    "compute_max_delay",
    "honest_vote",
    "aggregate_votes",
    "MAX_DELAY_CLAMPED",
]

MAX_DELAY_CLAMPED = "max_delay_clamped"


@dataclass(frozen=True)
class ProtocolParams:
    """Validator count ``n``, quorum ``c``, vote rank ``m`` and timeout ``tau`` (ms)."""

    n: int
    c: int
    m: int
    tau: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"need n >= 3 validators, got {self.n}")
        if not (self.n / 2 < self.c <= self.n):
            raise ValueError(f"quorum c={self.c} must satisfy n/2 < c <= n (n={self.n})")
        if not self.m <= self.n:
            raise ValueError(f"vote rank m={self.m} exceeds n={self.n}")
        if not self.m > self.n - self.c:
            raise ValueError(
                f"vote rank must satisfy m > n - c (got m={self.m}, n - c={self.n - self.c}); "
                "otherwise the aggregated vote can fall below the leader's delay"
            )
        if not self.tau > 0:
            raise ValueError("timeout tau must be positive")

    @property
    def k_small(self) -> int:
        """Largest coalition size that cannot push the aggregate below the delay."""
        return self.m + self.c - self.n

    @classmethod
    def two_thirds(cls, n: int, tau: float) -> "ProtocolParams":
        """``c = m = 2n/3`` for ``n`` divisible by 3."""
        if n % 3:
            raise ValueError(f"n={n} is not divisible by 3")
        return cls(n=n, c=2 * n // 3, m=2 * n // 3, tau=tau)


@dataclass(frozen=True)
class RoundOutcome:
    leader: int
    previous: Optional[int]
    start_time: float
    delay: float
    max_delay: float
    votes: tuple[Optional[float], ...]
    aggregated_vote: float
    reward: float = 0.0

    @property
    def round_duration(self) -> float:
        return self.start_time + self.delay


def _mat(d) -> np.ndarray:
    return d.latency if isinstance(d, LatencyDraw) else np.asarray(d, dtype=np.float64)


def quorum_time(draw_prev, draw_votes, j: int, i: int, c: int) -> float:
    """c-th smallest of ``l[j, k] + l[k, i]`` over all k: when i holds a quorum on j's block."""
    prev, votes = _mat(draw_prev), _mat(draw_votes)
    return order_statistic(prev[j, :] + votes[:, i], c)


def start_time(draw_prev, draw_votes, j: int, i: int, c: int) -> float:
    """Time from j's proposal until i has both the block and a quorum."""
    return max(quorum_time(draw_prev, draw_votes, j, i, c), float(_mat(draw_prev)[j, i]))


def latency_error(draw_i, draw_j, i: int, j: int, r: int) -> float:
    """r-th smallest of ``l_i[i, k] - l_j[j, k]``; may be negative."""
    return order_statistic(_mat(draw_i)[i, :] - _mat(draw_j)[j, :], r)


def compute_max_delay(s: float, e_c: float, tau: float, violations: Counter | None = None) -> float:
    """Largest delay that still lets c validators see the block before ``tau``.

    Negative values break the model's bounded-latency assumption; they are
    clamped to 0 and counted in ``violations`` under ``MAX_DELAY_CLAMPED``.
    """
    raw = tau - s - e_c
    if raw < 0:
        if violations is not None:
            violations[MAX_DELAY_CLAMPED] += 1
        return 0.0
    return raw


def honest_vote(delta: float, s: float, l_ik: float, l_jk: float) -> float:
    """Duration observed by k: from j's block reaching k to i's block reaching k."""
    return delta + s + (l_ik - l_jk)


def aggregate_votes(votes: Sequence[Optional[float]], m: int, n: int | None = None) -> float:
    """m-th smallest vote with absent votes counted as +inf.

    ``n`` pads ``votes`` with absent entries up to ``n`` validators.
    """
    vals = [math.inf if v is None else float(v) for v in votes]
    if n is not None:
        if len(vals) > n:
            raise ValueError(f"{len(vals)} votes for {n} validators")
        vals += [math.inf] * (n - len(vals))
    if not 1 <= m <= len(vals):
        raise ValueError(f"rank {m} out of range for {len(vals)} validators")
    return order_statistic(vals, m)
