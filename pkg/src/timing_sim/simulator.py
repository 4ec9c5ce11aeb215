"""Monte Carlo engine: repeated rounds, leader election and utility estimation.

Utilities are long-run reward per unit time, estimated per replication as
(total reward of i) / (total elapsed time) and averaged across replications.
The inner round loop lives in a compiled kernel (see ``_backend``); the
single-round helpers here use the same protocol operations and are what the
kernel is tested against.
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _backend
from .latency import DRAW_BLOCK, LatencyModel, colocate, sample_draw, sample_draws
from .protocol import (
    MAX_DELAY_CLAMPED,
    ProtocolParams,
    RoundOutcome,
    aggregate_votes,
    compute_max_delay,
    latency_error,
    start_time,
)
from .rewards import REWARD_OUT_OF_DOMAIN, RewardParams
from .strategies import ProposalRule, StrategyProfile, decide_delay, decide_vote

__all__ = [
    "Uniform",
    "BinaryDecay",
    "SimConfig",
    "WeightState",
    "SimState",
    "UtilityReport",
    "ReplicationResult",
    "WeightFrequencies",
    "play_round",
    "run_round",
    "elect_leader",
    "leader_from_uniform",
    "update_weight",
    "run_replication",
    "run_experiment",
    "empirical_weight_distribution",
    "VIOLATION_KEYS",
]

# order matches the kernel's violation counter array
VIOLATION_KEYS = (MAX_DELAY_CLAMPED, REWARD_OUT_OF_DOMAIN, "aggregate_absent", "aggregate_negative")

_TRACE_COLUMNS = ("leader", "previous", "start_time", "max_delay", "delay", "aggregated_vote", "reward", "cth_observed")
_CHUNK_CELLS = 1 << 22  # float64 cells of latency draws held per chunk


@dataclass(frozen=True)
class Uniform:
    """Every validator is equally likely to lead."""


@dataclass(frozen=True)
class BinaryDecay:
    """Weights step by ``rho`` in ``{1 - rho, 1}`` around the vote threshold."""

    rho: float
    threshold: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.threshold > 0:
            raise ValueError("decay threshold must be positive")


Election = Union[Uniform, BinaryDecay]


@dataclass(frozen=True)
class SimConfig:
    protocol: ProtocolParams
    rewards: RewardParams
    latency: LatencyModel
    profile: StrategyProfile
    rounds: int = 100_000
    replications: int = 4
    seed: int = 0
    election: Election = field(default_factory=Uniform)
    burn_in: float = 0.01  # fraction of each replication's rounds left out of the sums

    def __post_init__(self):
        n = self.protocol.n
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.latency.n != n or self.profile.n != n:
            raise ValueError(f"latency model ({self.latency.n}) and profile ({self.profile.n}) must cover n={n} validators")
        if not math.isclose(self.protocol.tau, self.rewards.tau):
            raise ValueError("protocol and reward timeouts differ")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in must lie in [0, 1)")
        if isinstance(self.election, BinaryDecay) and not self.election.threshold < self.protocol.tau:
            raise ValueError("decay threshold must lie in (0, tau)")

    @property
    def n(self) -> int:
        return self.protocol.n

    @property
    def burn_rounds(self) -> int:
        return int(self.burn_in * self.rounds)

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class WeightState:
    """Leader-election weights; each is either ``1 - rho`` or 1."""

    weights: np.ndarray

    @classmethod
    def initial(cls, n: int) -> "WeightState":
        return cls(np.ones(n))

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()


@dataclass
class SimState:
    """Mutable state carried between rounds by :func:`run_round`."""

    weights: WeightState
    previous: Optional[int] = None
    previous_draw: Optional[np.ndarray] = None
    round: int = 0
    elapsed: float = 0.0
    rewards: Optional[np.ndarray] = None
    violations: Counter = field(default_factory=Counter)

    @classmethod
    def initial(cls, n: int) -> "SimState":
        return cls(WeightState.initial(n), rewards=np.zeros(n))


def leader_from_uniform(u: float, weights: np.ndarray, election: Election) -> int:
    """Map one uniform in [0, 1) to a leader by inverse CDF."""
    n = len(weights)
    if isinstance(election, Uniform):
        return min(int(u * n), n - 1)
    total = 0.0
    for w in weights:
        total += float(w)
    u = u * total
    acc = 0.0
    for k in range(n):
        acc += float(weights[k])
        if u < acc:
            return k
    return n - 1


def elect_leader(weights: WeightState, mode: Election, rng: np.random.Generator) -> int:
    if (weights.weights <= 0).any():
        raise ValueError("election weights must be positive")
    return leader_from_uniform(float(rng.random()), weights.weights, mode)


def update_weight(w: float, vote: float, rho: float, threshold: float) -> float:
    """One ``rho`` step up (vote at or before the threshold) or down, kept in [1 - rho, 1]."""
    if vote <= threshold:
        return min(w + rho, 1.0)
    return max(w - rho, 1.0 - rho)


def play_round(
    prev: Optional[np.ndarray],
    cur: np.ndarray,
    j: Optional[int],
    i: int,
    protocol: ProtocolParams,
    rewards: RewardParams,
    profile: StrategyProfile,
    violations: Counter | None = None,
) -> RoundOutcome:
    """Round led by ``i`` after ``j`` proposed; ``prev`` carried j's block, ``cur`` carries i's.

    With ``j`` None this is the first round: start time 0 and j's latencies 0.
    """
    n, c, m, tau = protocol.n, protocol.c, protocol.m, protocol.tau
    if j is None:
        s = 0.0
        prev_row = np.zeros(n)
    else:
        s = start_time(prev, prev, j, i, c)
        prev_row = prev[j, :]
    e_c = latency_error(cur, prev_row[None, :], i, 0, c)
    dstar = compute_max_delay(s, e_c, tau, violations)
    delta = decide_delay(profile, i, dstar)
    diff = cur[i, :] - prev_row
    votes = tuple(decide_vote(profile, k, i, delta + s + float(diff[k])) for k in range(n))
    v = aggregate_votes(votes, m)
    if violations is not None and v == math.inf:
        violations["aggregate_absent"] += 1
    elif violations is not None and v < 0:
        violations["aggregate_negative"] += 1
    reward = rewards.mev(delta + s) + rewards.block_reward(v, violations)
    return RoundOutcome(i, j, s, delta, dstar, votes, v, reward)


def run_round(state: SimState, config: SimConfig, rng: np.random.Generator, leader: Optional[int] = None) -> RoundOutcome:
    """Elect a leader (unless given), play one round and advance ``state``."""
    if leader is None:
        leader = elect_leader(state.weights, config.election, rng)
    draw = sample_draw(config.latency, [config.seed, 0, 2], state.round).latency
    members = config.profile.colocated()
    if members:
        draw = colocate(draw, members)
    out = play_round(state.previous_draw, draw, state.previous, leader, config.protocol, config.rewards, config.profile, state.violations)
    state.rewards[leader] += out.reward
    state.elapsed += out.round_duration
    if isinstance(config.election, BinaryDecay):
        w = state.weights.weights
        w[leader] = update_weight(w[leader], out.aggregated_vote, config.election.rho, config.election.threshold)
    state.previous, state.previous_draw = leader, draw
    state.round += 1
    return out


# -- batch simulation ---------------------------------------------------------


@dataclass
class ReplicationResult:
    rewards: np.ndarray  # per-validator reward after burn-in
    lead_time: np.ndarray  # duration of rounds each validator led, after burn-in
    leaderships: np.ndarray  # all rounds
    total_time: float
    low_steps: np.ndarray  # chain steps spent at weight 1 - rho
    total_steps: float
    elections: np.ndarray  # after burn-in
    exceed: np.ndarray  # elections with aggregated vote above the decay threshold
    violations: dict
    final_weights: np.ndarray
    trace: Optional[dict] = None

    @property
    def utility(self) -> np.ndarray:
        if self.total_time <= 0:
            return np.full(len(self.rewards), math.inf)
        return self.rewards / self.total_time


def _kernel_args(config: SimConfig):
    p, rw, prof = config.protocol, config.rewards, config.profile
    mode = 1 if rw.static else (2 if rw.target is not None else 0)
    if isinstance(config.election, BinaryDecay):
        election, rho, thr = 1, config.election.rho, config.election.threshold
    else:
        election, rho, thr = 0, 0.0, math.inf
    rules = dict(
        c=p.c,
        m=p.m,
        tau=float(p.tau),
        mu=float(rw.mu),
        mu0=float(rw.mu0),
        b=float(rw.b),
        b0=float(rw.b0),
        reward_mode=mode,
        target=float(rw.target or 0.0),
        proposal=np.array([int(x) for x in prof.proposal], dtype=np.int32),
        fixed_delay=np.array(prof.fixed_delay, dtype=np.float64),
        vote_rule=np.array([int(x) for x in prof.votes], dtype=np.int32),
        coal=np.array(prof.coalition_ids(), dtype=np.int32),
        election=election,
        rho=float(rho),
        threshold=float(thr),
    )
    return rules


def run_replication(config: SimConfig, rep: int, rounds: Optional[int] = None, trace: bool = False, run_chunk=None) -> ReplicationResult:
    """Simulate one replication; streams depend only on ``(seed, rep)``."""
    run_chunk = run_chunk or _backend.run_chunk
    n = config.n
    rounds = config.rounds if rounds is None else rounds
    burn = int(config.burn_in * rounds)
    model = config.latency
    members = sorted(config.profile.colocated())
    idx = np.asarray(members, dtype=np.intp)
    args = _kernel_args(config)

    elect_rng = np.random.default_rng(np.random.SeedSequence([config.seed, rep, 1]))
    latency_seed = [config.seed, rep, 2]

    weights = np.ones(n)
    state = np.array([-1], dtype=np.int64)
    facc = np.zeros((4, n))
    iacc = np.zeros((3, n), dtype=np.int64)
    scal = np.zeros(2)
    viol = np.zeros(len(VIOLATION_KEYS), dtype=np.int64)
    tr = np.empty((rounds, len(_TRACE_COLUMNS))) if trace else None

    if model.deterministic:
        mat = np.array(model.matrix(), dtype=np.float64)
        if idx.size:
            mat[np.ix_(idx, idx)] = 0.0
        static_draws = np.ascontiguousarray(mat[None, :, :])
        chunk = rounds
    else:
        chunk = max(1, _CHUNK_CELLS // (n * n * DRAW_BLOCK)) * DRAW_BLOCK
        carry = np.zeros((n, n))

    start = 0
    while start < rounds:
        count = min(chunk, rounds - start)
        uniforms = elect_rng.random(count)
        if model.deterministic:
            draws, static = static_draws, True
        else:
            draws = np.empty((count + 1, n, n))
            draws[0] = carry
            draws[1:] = sample_draws(model, latency_seed, start, count)
            if idx.size:
                draws[1:, idx[:, None], idx[None, :]] = 0.0
            carry = draws[-1].copy()
            static = False
        run_chunk(
            draws,
            static,
            uniforms,
            start,
            burn,
            weights=weights,
            state=state,
            facc=facc,
            iacc=iacc,
            scal=scal,
            viol=viol,
            trace=None if tr is None else tr[start : start + count],
            **args,
        )
        start += count

    trace_out = None
    if tr is not None:
        trace_out = {name: tr[:, col].copy() for col, name in enumerate(_TRACE_COLUMNS)}
        for name in ("leader", "previous"):
            trace_out[name] = trace_out[name].astype(np.int64)
    return ReplicationResult(
        rewards=facc[0].copy(),
        lead_time=facc[1].copy(),
        leaderships=iacc[0].copy(),
        total_time=float(scal[0]),
        low_steps=facc[2].copy(),
        total_steps=float(scal[1]),
        elections=iacc[1].copy(),
        exceed=iacc[2].copy(),
        violations=dict(zip(VIOLATION_KEYS, (int(x) for x in viol))),
        final_weights=weights,
        trace=trace_out,
    )


def _run_all(config: SimConfig, rounds: Optional[int], workers: Optional[int]) -> list[ReplicationResult]:
    reps = range(config.replications)
    workers = workers or min(config.replications, os.cpu_count() or 1)
    if workers <= 1 or config.replications == 1:
        return [run_replication(config, r, rounds) for r in reps]
    # the compiled loop releases the GIL, so threads run replications concurrently
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: run_replication(config, r, rounds), reps))


def _mean_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return mean, np.full(mean.shape, math.nan)
    with np.errstate(invalid="ignore"):
        return mean, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def advantage(utilities) -> float:
    """Highest utility over lowest utility, minus one."""
    u = np.asarray(utilities, dtype=np.float64)
    lo, hi = float(u.min()), float(u.max())
    if lo == hi:
        return 0.0  # includes the all-unbounded zero-latency case
    if lo <= 0 or not math.isfinite(hi):
        return math.inf
    return hi / lo - 1.0


@dataclass
class UtilityReport:
    """Per-validator results summed (rewards, times, counts) or averaged (utilities) over replications."""

    tags: list[str]
    rewards: np.ndarray
    total_time: float
    leaderships: np.ndarray
    time_share: np.ndarray
    utility: np.ndarray
    utility_se: np.ndarray
    replication_utility: np.ndarray  # (replications, n)
    advantage: float
    violations: dict
    rounds: int
    replications: int

    @property
    def n(self) -> int:
        return len(self.utility)

    def csv_rows(self) -> list[list]:
        header = ["validator", "tag", "leaderships", "reward", "time_share", "utility", "stderr"]
        rows = [header]
        for k in range(self.n):
            rows.append(
                [
                    k,
                    self.tags[k],
                    int(self.leaderships[k]),
                    repr(float(self.rewards[k])),
                    repr(float(self.time_share[k])),
                    repr(float(self.utility[k])),
                    repr(float(self.utility_se[k])),
                ]
            )
        return rows

    def summary(self) -> dict:
        out = {
            "rounds": self.rounds,
            "replications": self.replications,
            "total_time": repr(self.total_time),
            "advantage": repr(self.advantage),
            "utility_min": repr(float(self.utility.min())),
            "utility_max": repr(float(self.utility.max())),
        }
        out.update({f"violations.{k}": v for k, v in self.violations.items()})
        return out


def run_experiment(config: SimConfig, workers: Optional[int] = None) -> UtilityReport:
    """Run all replications and merge them into a :class:`UtilityReport`."""
    results = _run_all(config, None, workers)
    util = np.array([r.utility for r in results])
    mean, se = _mean_se(util)
    rewards = np.sum([r.rewards for r in results], axis=0)
    lead_time = np.sum([r.lead_time for r in results], axis=0)
    total = float(sum(r.total_time for r in results))
    violations = Counter()
    for r in results:
        violations.update(r.violations)
    share = lead_time / total if total > 0 else np.full(config.n, math.nan)
    return UtilityReport(
        tags=config.latency.tags(),
        rewards=rewards,
        total_time=total,
        leaderships=np.sum([r.leaderships for r in results], axis=0),
        time_share=share,
        utility=mean,
        utility_se=se,
        replication_utility=util,
        advantage=advantage(mean),
        violations={k: violations.get(k, 0) for k in VIOLATION_KEYS},
        rounds=config.rounds,
        replications=config.replications,
    )


@dataclass
class WeightFrequencies:
    """Long-run time fractions at each weight, measured in election attempts.

    ``low`` is the fraction at ``1 - rho`` and ``high`` at 1; ``exceed_rate``
    is the fraction of i's elections whose aggregated vote passed the
    threshold.  Per-replication arrays have shape (replications, n).
    """

    rho: float
    low: np.ndarray
    low_se: np.ndarray
    exceed_rate: np.ndarray
    exceed_se: np.ndarray
    elections: np.ndarray
    replication_low: np.ndarray
    replication_exceed: np.ndarray

    @property
    def high(self) -> np.ndarray:
        return 1.0 - self.low


def empirical_weight_distribution(config: SimConfig, horizon: Optional[int] = None, workers: Optional[int] = None) -> WeightFrequencies:
    """State frequencies of the binary-weight chain for every validator.

    ``horizon`` is the number of rounds per replication (default
    ``config.rounds``).
    """
    if not isinstance(config.election, BinaryDecay):
        raise ValueError("weight frequencies need BinaryDecay election")
    if any(p is not ProposalRule.EARLY for p in config.profile.proposal):
        warnings.warn("weight frequencies are meant for the early honest profile", stacklevel=2)
    results = _run_all(config, horizon, workers)
    low = np.array([r.low_steps / r.total_steps for r in results])
    elections = np.array([r.elections for r in results])
    with np.errstate(invalid="ignore", divide="ignore"):
        exceed = np.array([r.exceed / np.maximum(r.elections, 1) for r in results])
    if elections.sum(axis=0).min() < 1000:
        warnings.warn(
            f"only {int(elections.sum(axis=0).min())} elections for some validator; frequencies are unreliable below 1000",
            stacklevel=2,
        )
    low_m, low_se = _mean_se(low)
    ex_m, ex_se = _mean_se(exceed)
    return WeightFrequencies(
        rho=config.election.rho,
        low=low_m,
        low_se=low_se,
        exceed_rate=ex_m,
        exceed_se=ex_se,
        elections=elections.sum(axis=0),
        replication_low=low,
        replication_exceed=exceed,
    )
