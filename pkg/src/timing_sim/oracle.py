"""Exact closed forms for the timing game, with brute-force counterparts.

Formula paths and enumeration paths are kept independent: the enumerations
here sort exact rationals and never call the simulator's round code.  All
deterministic quantities are returned as :class:`fractions.Fraction`;
floats only appear at the reporting boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .protocol import ProtocolParams
from .rewards import RewardParams
from .strategies import ProposalRule, StrategyProfile, VoteRule, coalition_latency_penalty_rank

__all__ = [
    "ClusterParams",
    "LineParams",
    "AdvantageInputs",
    "FIGURE_PARAMS",
    "exact_matrix",
    "line_matrix",
    "cluster_matrix",
    "start_time_exact",
    "latency_error_exact",
    "mean_start_exact",
    "mean_error_exact",
    "line_quorum_closed_form",
    "line_mean_start",
    "line_mean_error",
    "cluster_means",
    "cluster_means_enumerated",
    "advantage_line_early",
    "advantage_line_early_limit",
    "advantage_line_early_derived",
    "advantage_line_early_enumerated",
    "advantage_cluster_early",
    "advantage_line_late",
    "advantage_cluster_late",
    "advantage_late",
    "advantage",
    "ratio_advantage",
    "profile_utility_exact",
    "honest_utility_closed_form",
    "small_coalition_prediction",
    "z_low_latency_check",
    "large_coalition_threshold",
    "large_coalition_defection_bound",
    "binary_decay_stationary",
    "line_figure_grid",
    "cluster_figure_grid",
    "fairness_line_table",
    "fairness_cluster_table",
]

Number = Union[int, float, Fraction]


def _q(x: Number) -> Fraction:
    """Exact rational value of ``x`` (floats keep their binary value)."""
    return x if isinstance(x, Fraction) else Fraction(x)


def _kth(values: Iterable[Fraction], r: int) -> Fraction:
    """r-th smallest (1-based) by full sort."""
    vals = sorted(values)
    if not 1 <= r <= len(vals):
        raise ValueError(f"rank {r} out of range for {len(vals)} values")
    return vals[r - 1]


# -- deterministic models as exact matrices -----------------------------------


@dataclass(frozen=True)
class LineParams:
    n: int

    def __post_init__(self):
        if self.n % 6:
            raise ValueError(f"line closed forms need n divisible by 6, got {self.n}")


@dataclass(frozen=True)
class ClusterParams:
    """Two clusters with intra latency ``eps`` and inter latency ``inter``; X is the larger."""

    size_x: int
    size_y: int
    eps: Number
    inter: Number

    def __post_init__(self):
        if self.size_x < self.size_y or self.size_y < 0:
            raise ValueError("need |X| >= |Y| >= 0")
        if not (self.inter > self.eps > 0):
            raise ValueError("need inter > eps > 0")

    @property
    def n(self) -> int:
        return self.size_x + self.size_y

    @property
    def xbar(self) -> Fraction:
        return Fraction(self.size_x, self.n)

    @property
    def ybar(self) -> Fraction:
        return Fraction(self.size_y, self.n)


def exact_matrix(values) -> list[list[Fraction]]:
    return [[Fraction(float(x)) for x in row] for row in np.asarray(values, dtype=np.float64)]


def line_matrix(n: int) -> list[list[Fraction]]:
    return [[Fraction(abs(i - j)) for j in range(n)] for i in range(n)]


def cluster_matrix(p: ClusterParams) -> list[list[Fraction]]:
    eps, inter = _q(p.eps), _q(p.inter)
    side = [0] * p.size_x + [1] * p.size_y
    return [[Fraction(0) if a == b else (eps if side[a] == side[b] else inter) for b in range(p.n)] for a in range(p.n)]


def start_time_exact(L, j: int, i: int, c: int) -> Fraction:
    n = len(L)
    return max(_kth((L[j][k] + L[k][i] for k in range(n)), c), L[j][i])


def latency_error_exact(L, i: int, j: int, r: int) -> Fraction:
    n = len(L)
    return _kth((L[i][k] - L[j][k] for k in range(n)), r)


def mean_start_exact(L, i: int, c: int) -> Fraction:
    """Average over every previous leader j (including i) of the start time of i."""
    n = len(L)
    return sum((start_time_exact(L, j, i, c) for j in range(n)), Fraction(0)) / n


def mean_error_exact(L, i: int, r: int) -> Fraction:
    n = len(L)
    return sum((latency_error_exact(L, i, j, r) for j in range(n)), Fraction(0)) / n


# -- line model ---------------------------------------------------------------


def _two_thirds(n: int) -> int:
    if n % 3:
        raise ValueError(f"n={n} is not divisible by 3")
    return 2 * n // 3


def line_quorum_closed_form(n: int, i: int, j: int) -> Fraction:
    """Quorum time on the unit line for ``i <= j`` with ``c = 2n/3``."""
    c = _two_thirds(n)
    if not 0 <= i <= j < n:
        raise ValueError("need 0 <= i <= j < n")
    span = j - i + 1
    w = min(n - j - 1, i)
    parity = 1 if (c - span) % 2 == 1 else 0
    if span >= c:
        return Fraction(j - i)
    if span + 2 * w >= c:
        return Fraction(c - 1 + parity)
    return Fraction(2 * c - 2 * w - j + i - 2)


def _line_which(n: int, which: str) -> None:
    if n % 6:
        raise ValueError(f"line closed forms need n divisible by 6, got {n}")
    if which not in ("endpoint", "center"):
        raise ValueError("which must be 'endpoint' or 'center'")


def line_mean_start(n: int, which: str) -> Fraction:
    """Mean start time of the endpoint validator 0 or the center validator n/2."""
    _line_which(n, which)
    if which == "endpoint":
        return Fraction(17 * n, 18) - Fraction(7, 6)
    return Fraction(25 * n, 36) - Fraction(2, 3)


def line_mean_error(n: int, which: str) -> Fraction:
    """Mean m-th latency error (m = 2n/3) of the endpoint or center validator."""
    _line_which(n, which)
    if which == "endpoint":
        return Fraction(7 * n - 15, 18)
    return Fraction(n, 36) - Fraction(2, 3)


def line_position(n: int, which: str) -> int:
    return 0 if which == "endpoint" else n // 2


# -- cluster model ------------------------------------------------------------


def cluster_means(p: ClusterParams, c: int, m: int) -> dict[str, Fraction]:
    """Mean start times and mean m-th latency errors for a validator in X and in Y."""
    eps, l = _q(p.eps), _q(p.inter)
    X, Y = p.xbar, p.ybar
    s_x = 2 * X * eps + Y * (eps + l) if p.size_x >= c else 2 * X * l + Y * (eps + l)
    s_y = X * (eps + l) + 2 * Y * l
    e_x = Y * (eps - l) if p.size_x >= m else Y * (l - eps)
    e_y = X * (l - eps)
    return {"start_x": s_x, "start_y": s_y, "error_x": e_x, "error_y": e_y}


def cluster_means_enumerated(p: ClusterParams, c: int, m: int) -> dict[str, Fraction]:
    L = cluster_matrix(p)
    x, y = 0, p.size_x
    out = {"start_x": mean_start_exact(L, x, c), "error_x": mean_error_exact(L, x, m)}
    if p.size_y:
        out.update(start_y=mean_start_exact(L, y, c), error_y=mean_error_exact(L, y, m))
    return out


# -- advantage closed forms ---------------------------------------------------


def ratio_advantage(num: Fraction, den: Fraction) -> Fraction:
    if den <= 0 or num <= 0:
        raise ValueError(f"invalid parameter regime: utility proxy {num if num <= 0 else den} is not positive")
    return num / den - 1


def advantage_line_early(n: int, kappa: Number, d: Number, mu: Number, mu0: Number) -> Fraction:
    """Early-proposal advantage on the line (center over endpoint), timeout ``d * n``."""
    if n % 6:
        raise ValueError(f"line closed forms need n divisible by 6, got {n}")
    k, d, mu, mu0 = _q(kappa), _q(d), _q(mu), _q(mu0)
    if not k > 1:
        raise ValueError("early advantage needs kappa > 1 (time-decreasing rewards)")
    base = d + mu0 / (k * n * mu)
    w = (k - 1) / k
    num = base - w * (Fraction(25, 36) - Fraction(2, 3 * n)) - Fraction(1, 36) - Fraction(2, 3 * n)
    den = base - w * (Fraction(17, 18) - Fraction(7, 6 * n)) - Fraction(7, 18) - Fraction(5, 6 * n)
    return ratio_advantage(num, den)


def advantage_line_early_derived(n: int, kappa: Number, d: Number, mu: Number, mu0: Number) -> Fraction:
    """Same ratio rebuilt from the mean start time and mean error closed forms.

    Differs from :func:`advantage_line_early` in the sign of the ``1/n``
    error terms; this form equals exact enumeration (see
    :func:`advantage_line_early_enumerated`).  Both share the large-n limit.
    """
    k, d, mu, mu0 = _q(kappa), _q(d), _q(mu), _q(mu0)
    if not k > 1:
        raise ValueError("early advantage needs kappa > 1 (time-decreasing rewards)")
    base = d + mu0 / (k * n * mu)
    w = (k - 1) / k

    def proxy(which):
        return base - w * line_mean_start(n, which) / n - line_mean_error(n, which) / n

    return ratio_advantage(proxy("center"), proxy("endpoint"))


def advantage_line_early_enumerated(n: int, kappa: Number, d: Number, mu: Number, mu0: Number) -> Fraction:
    """Center-over-endpoint utility ratio by enumerating every leader pair (timeout ``d * n``)."""
    k, d, mu, mu0 = _q(kappa), _q(d), _q(mu), _q(mu0)
    tau = d * n
    rw = RewardParams(mu=mu, mu0=mu0, b=k * mu, b0=k * mu * tau, tau=tau)
    u = honest_utility_closed_form(ProtocolParams.two_thirds(n, tau), rw, line_matrix(n))
    return u[n // 2] / u[0] - 1


def advantage_line_early_limit(kappa: Number, d: Number) -> Fraction:
    """Large-n limit of :func:`advantage_line_early`."""
    k, d = _q(kappa), _q(d)
    w = (k - 1) / k
    return ratio_advantage(d - Fraction(25, 36) * w - Fraction(1, 36), d - Fraction(17, 18) * w - Fraction(7, 18))


def _cluster_regime_check(p: ClusterParams, c: Optional[int]) -> None:
    c = _two_thirds(p.n) if c is None else c
    if not p.size_x > c:
        raise ValueError(f"cluster advantage needs |X| > c = m (|X|={p.size_x}, c={c})")


def advantage_cluster_early(p: ClusterParams, kappa: Number, d: Number, mu: Number, mu0: Number, c: Optional[int] = None) -> Fraction:
    """Early-proposal advantage in the cluster model (X over Y), timeout ``2 d l``."""
    _cluster_regime_check(p, c)
    k, d, mu, mu0 = _q(kappa), _q(d), _q(mu), _q(mu0)
    if not k > 1:
        raise ValueError("early advantage needs kappa > 1 (time-decreasing rewards)")
    eps, l, X, Y = _q(p.eps), _q(p.inter), p.xbar, p.ybar
    base = 2 * d * l + mu0 / (k * mu)
    w = (k - 1) / k
    num = base - w * (2 * X * eps + Y * (eps + l)) - Y * (eps - l)
    den = base - w * (X * (eps + l) + 2 * Y * l) - X * (l - eps)
    return ratio_advantage(num, den)


def advantage_line_late(n: int, b0: Number, mu0: Number, d: Number, mu: Number) -> Fraction:
    """Late-proposal advantage on the line under static rewards, timeout ``d * n``."""
    if n % 6:
        raise ValueError(f"line closed forms need n divisible by 6, got {n}")
    b0, mu0, d, mu = _q(b0), _q(mu0), _q(d), _q(mu)
    base = (b0 + mu0) / (mu * n) + d
    num = base - (Fraction(1, 36) - Fraction(2, 3 * n))
    den = base - (Fraction(7, 18) - Fraction(5, 6 * n))
    return ratio_advantage(num, den)


def advantage_cluster_late(p: ClusterParams, b0: Number, mu0: Number, d: Number, mu: Number, c: Optional[int] = None) -> Fraction:
    """Late-proposal advantage in the cluster model under static rewards, timeout ``2 d l``."""
    _cluster_regime_check(p, c)
    b0, mu0, d, mu = _q(b0), _q(mu0), _q(d), _q(mu)
    eps, l, X, Y = _q(p.eps), _q(p.inter), p.xbar, p.ybar
    base = (b0 + mu0) + 2 * d * l * mu
    return ratio_advantage(base - mu * Y * (eps - l), base - mu * X * (l - eps))


@dataclass(frozen=True)
class AdvantageInputs:
    """Model, reward parameters and regime (``"early"`` dynamic or ``"late"`` static)."""

    model: Union[LineParams, ClusterParams]
    kappa: Number
    d: Number
    mu: Number
    mu0: Number
    b0: Number = 0
    regime: str = "early"

    def __post_init__(self):
        if self.regime not in ("early", "late"):
            raise ValueError("regime must be 'early' or 'late'")


def advantage_late(inputs: AdvantageInputs) -> Fraction:
    if inputs.regime != "late":
        raise ValueError("advantage_late needs the late (static reward) regime")
    m = inputs.model
    if isinstance(m, LineParams):
        return advantage_line_late(m.n, inputs.b0, inputs.mu0, inputs.d, inputs.mu)
    return advantage_cluster_late(m, inputs.b0, inputs.mu0, inputs.d, inputs.mu)


def advantage(inputs: AdvantageInputs) -> Fraction:
    if inputs.regime == "late":
        return advantage_late(inputs)
    m = inputs.model
    if isinstance(m, LineParams):
        return advantage_line_early(m.n, inputs.kappa, inputs.d, inputs.mu, inputs.mu0)
    return advantage_cluster_early(m, inputs.kappa, inputs.d, inputs.mu, inputs.mu0)


# -- exact utilities by enumeration ------------------------------------------


def _block_reward_exact(rw: RewardParams, v) -> Fraction:
    if v is None or v == math.inf:
        return Fraction(0)
    b, b0, tau = _q(rw.b), _q(rw.b0), _q(rw.tau)
    if rw.static:
        return b0
    if v >= tau:
        return Fraction(0)
    if rw.target is not None:
        t = _q(rw.target)
        return b * (tau - t) * v / t if v <= t else b * (tau - v)
    return b0 - b * v


def _round_exact(L, j: Optional[int], i: int, proto: ProtocolParams, rw: RewardParams, profile: StrategyProfile):
    """Exact (reward, duration) of one round led by i after j."""
    n, c, m, tau = proto.n, proto.c, proto.m, _q(proto.tau)
    prev = [Fraction(0)] * n if j is None else L[j]
    s = Fraction(0) if j is None else start_time_exact(L, j, i, c)
    diff = [L[i][k] - prev[k] for k in range(n)]
    dstar = max(tau - s - _kth(diff, c), Fraction(0))
    rule = profile.proposal[i]
    if rule is ProposalRule.EARLY:
        delta = Fraction(0)
    elif rule is ProposalRule.LATE:
        delta = dstar
    else:
        delta = min(_q(profile.fixed_delay[i]), dstar)
    members = profile.coalition.members if profile.coalition else frozenset()
    votes = []
    for k in range(n):
        vr = profile.votes[k]
        honest = delta + s + diff[k]
        if vr is VoteRule.HONEST:
            votes.append(honest)
        elif vr is VoteRule.ALWAYS_TIMEOUT:
            votes.append(math.inf)
        elif k in members and i in members:
            votes.append(Fraction(0))
        else:
            votes.append(math.inf if vr is VoteRule.ZERO_FOR_COALITION_GRIEF else honest)
    v = sorted(votes, key=lambda x: (x == math.inf, x if x != math.inf else 0))[m - 1]
    duration = s + delta
    reward = _q(rw.mu) * duration + _q(rw.mu0) + _block_reward_exact(rw, v)
    return reward, duration


def profile_utility_exact(proto: ProtocolParams, rw: RewardParams, matrix, profile: StrategyProfile) -> list:
    """Long-run utility of every validator under uniform election on a fixed latency matrix.

    Leaders are i.i.d. uniform, so (previous, current) leader pairs are
    uniform over all n^2 ordered pairs.  Returns Fractions, or ``inf`` with
    a warning when every round has zero duration.
    """
    L = matrix if isinstance(matrix, list) else exact_matrix(matrix)
    n = proto.n
    members = profile.colocated()
    if members:
        L = [[Fraction(0) if (a in members and b in members) else L[a][b] for b in range(n)] for a in range(n)]
    rewards = [Fraction(0)] * n
    total = Fraction(0)
    for j in range(n):
        for i in range(n):
            r, dur = _round_exact(L, j, i, proto, rw, profile)
            rewards[i] += r
            total += dur
    if total == 0:
        warnings.warn("every round has zero duration; utilities are unbounded", stacklevel=2)
        return [math.inf] * n
    return [r / total for r in rewards]


def honest_utility_closed_form(proto: ProtocolParams, rw: RewardParams, matrix) -> list:
    """Utilities under early proposal with honest votes, summed over leader pairs.

    For each leader i the numerator sums the MEV of its start time plus the
    block reward of start time plus the m-th latency error over every
    previous leader j; the denominator sums every start time.
    """
    L = matrix if isinstance(matrix, list) else exact_matrix(matrix)
    n, c, m = proto.n, proto.c, proto.m
    S = [[start_time_exact(L, j, i, c) for i in range(n)] for j in range(n)]
    total = sum((S[j][k] for j in range(n) for k in range(n)), Fraction(0))
    if total == 0:
        warnings.warn("zero-latency model: total time is 0 and utilities are unbounded", stacklevel=2)
        return [math.inf] * n
    mu, mu0 = _q(rw.mu), _q(rw.mu0)
    out = []
    for i in range(n):
        num = Fraction(0)
        for j in range(n):
            v = S[j][i] + latency_error_exact(L, i, j, m)
            num += mu * S[j][i] + mu0 + _block_reward_exact(rw, v)
        out.append(num / total)
    return out


def small_coalition_prediction(proto: ProtocolParams, rw: RewardParams, matrix, members: Sequence[int]) -> list:
    """Utilities when a small coalition votes 0 for its own leaders, others early and honest.

    A member leader's aggregate becomes its start time plus the
    ``(m - |C|)``-th smallest latency difference over non-members; durations
    and outsiders' rewards are unchanged.
    """
    L = matrix if isinstance(matrix, list) else exact_matrix(matrix)
    n, c = proto.n, proto.c
    members = sorted(set(members))
    rank = coalition_latency_penalty_rank(members, proto.m, proto.k_small)
    outsiders = [k for k in range(n) if k not in members]
    base = honest_utility_closed_form(proto, rw, L)
    S = [[start_time_exact(L, j, i, c) for i in range(n)] for j in range(n)]
    total = sum((S[j][k] for j in range(n) for k in range(n)), Fraction(0))
    mu, mu0 = _q(rw.mu), _q(rw.mu0)
    out = list(base)
    for i in members:
        num = Fraction(0)
        for j in range(n):
            penalty = _kth((L[i][k] - L[j][k] for k in outsiders), rank)
            num += mu * S[j][i] + mu0 + _block_reward_exact(rw, S[j][i] + penalty)
        out[i] = num / total
    return out


# -- coalition conditions -----------------------------------------------------


@dataclass(frozen=True)
class ZLowLatency:
    satisfied: bool
    offenders: int
    mean_durations: tuple


def z_low_latency_check(matrix, proto: ProtocolParams, z: Number) -> ZLowLatency:
    """Count validators whose mean reported duration exceeds ``z * tau``."""
    z = _q(z)
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    L = matrix if isinstance(matrix, list) else exact_matrix(matrix)
    r = min(proto.c, proto.m)
    means = tuple(mean_start_exact(L, i, proto.c) + mean_error_exact(L, i, r) for i in range(proto.n))
    offenders = sum(1 for x in means if x > z * _q(proto.tau))
    return ZLowLatency(offenders <= proto.k_small, offenders, means)


def large_coalition_threshold(proto: ProtocolParams, size: int) -> Fraction:
    """Largest z for which a 0-voting coalition of ``size >= m`` prefers to defect."""
    if size < proto.m:
        raise ValueError(f"coalition of {size} is not large (m={proto.m})")
    k = proto.k_small
    return Fraction(size - k, 2 * proto.n + size - k)


def large_coalition_defection_bound(proto: ProtocolParams, z: Number, size: int) -> bool:
    return _q(z) <= large_coalition_threshold(proto, size)


# -- leader decay -------------------------------------------------------------


def binary_decay_stationary(p: Number, rho: Number) -> tuple:
    """Long-run fractions (at weight 1 - rho, at weight 1) for late-vote probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    exact = all(isinstance(x, (int, Fraction)) for x in (p, rho))
    low = _q(p) / (1 - _q(rho) * (1 - _q(p)))
    if not exact:
        low = float(low)
    return low, 1 - low


# -- figure tables ------------------------------------------------------------

FIGURE_PARAMS = dict(mu0=0.005, b0=0.038, d=5, mu=6e-6, kappa=1.5, eps=0.1, xbar=0.67)

# |X| = 201, |Y| = 99 gives X/n = 0.67 with c = 200 < |X|
FIGURE_CLUSTER_SIZES = (201, 99)


def line_figure_grid(points: int = 100, n_max: int = 100_000) -> list[int]:
    """Log-spaced multiples of 6 from 6 up to ``n_max``."""
    raw = np.geomspace(1, n_max / 6, points)
    return sorted({6 * max(1, int(x)) for x in raw})


def cluster_figure_grid(points: int = 100, l_min: float = 0.2, l_max: float = 10_000.0) -> list[float]:
    return [float(x) for x in np.geomspace(l_min, l_max, points)]


def fairness_line_table(ns: Sequence[int] | None = None, params: dict | None = None) -> list[tuple[int, float, float]]:
    """(n, early advantage, late advantage) rows for the line model."""
    p = {**FIGURE_PARAMS, **(params or {})}
    ns = line_figure_grid() if ns is None else ns
    return [
        (
            n,
            float(advantage_line_early(n, p["kappa"], p["d"], p["mu"], p["mu0"])),
            float(advantage_line_late(n, p["b0"], p["mu0"], p["d"], p["mu"])),
        )
        for n in ns
    ]


def fairness_cluster_table(ls: Sequence[float] | None = None, params: dict | None = None, sizes: tuple[int, int] = FIGURE_CLUSTER_SIZES) -> list[tuple[float, float, float]]:
    """(l, early advantage, late advantage) rows for the cluster model."""
    p = {**FIGURE_PARAMS, **(params or {})}
    ls = cluster_figure_grid() if ls is None else ls
    rows = []
    for l in ls:
        cp = ClusterParams(sizes[0], sizes[1], p["eps"], l)
        rows.append(
            (
                float(l),
                float(advantage_cluster_early(cp, p["kappa"], p["d"], p["mu"], p["mu0"])),
                float(advantage_cluster_late(cp, p["b0"], p["mu0"], p["d"], p["mu"])),
            )
        )
    return rows
