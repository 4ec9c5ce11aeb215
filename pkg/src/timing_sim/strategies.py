"""Proposal and voting strategies, and coalition bookkeeping."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .protocol import ProtocolParams

__all__ = [
    "ProposalRule",
    "VoteRule",
    "CoalitionKind",
    "SizeClass",
    "CoalitionSpec",
    "StrategyProfile",
    "decide_delay",
    "decide_vote",
    "classify_coalition",
    "coalition_latency_penalty_rank",
]


class ProposalRule(enum.IntEnum):
    EARLY = 0  # propose as soon as possible
    LATE = 1  # delay by the full max delay
    FIXED = 2  # delay by a fixed amount, truncated at the max delay


class VoteRule(enum.IntEnum):
    HONEST = 0
    ZERO_FOR_COALITION = 1  # 0 for coalition leaders, honest otherwise
    ALWAYS_TIMEOUT = 2  # never report
    ZERO_FOR_COALITION_GRIEF = 3  # 0 for coalition leaders, absent otherwise


class CoalitionKind(enum.Enum):
    WHALE = "whale"
    RATIONAL = "rational"
    ZERO_VOTING_LARGE = "zero_voting_large"


class SizeClass(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


def classify_coalition(members: Iterable[int], params: ProtocolParams) -> SizeClass:
    """Small below ``k_small``, medium in ``[k_small, m)``, large from ``m`` up."""
    size = len(set(members))
    if size == 0:
        raise ValueError("empty coalition")
    if size < params.k_small:
        return SizeClass.SMALL
    if size < params.m:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


def coalition_latency_penalty_rank(members: Iterable[int], m: int, k_small: int | None = None) -> int:
    """Rank, among non-members, of the difference that sets a member's vote.

    When members vote 0 for each other, the member leader's aggregate is the
    ``(m - |C|)``-th smallest honest vote.  Only established for coalitions
    of at most ``k_small`` members.
    """
    size = len(set(members))
    if k_small is not None and size > k_small:
        raise ValueError(f"coalition of {size} exceeds k_small={k_small}; rank formula only holds for small coalitions")
    if size >= m:
        raise ValueError(f"coalition of {size} leaves no honest rank below m={m}")
    return m - size


@dataclass(frozen=True)
class CoalitionSpec:
    members: frozenset[int]
    kind: CoalitionKind = CoalitionKind.RATIONAL

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(x) for x in self.members))
        if not self.members:
            raise ValueError("empty coalition")

    def size_class(self, params: ProtocolParams) -> SizeClass:
        return classify_coalition(self.members, params)


@dataclass(frozen=True)
class StrategyProfile:
    """Per-validator proposal and vote rules plus at most one coalition."""

    proposal: tuple[ProposalRule, ...]
    votes: tuple[VoteRule, ...]
    fixed_delay: tuple[float, ...] = ()
    coalition: Optional[CoalitionSpec] = None

    def __post_init__(self):
        n = len(self.proposal)
        object.__setattr__(self, "proposal", tuple(ProposalRule(p) for p in self.proposal))
        object.__setattr__(self, "votes", tuple(VoteRule(v) for v in self.votes))
        fd = tuple(float(x) for x in self.fixed_delay) or (0.0,) * n
        object.__setattr__(self, "fixed_delay", fd)
        if len(self.votes) != n or len(fd) != n:
            raise ValueError("proposal, vote and delay rules must cover every validator")
        if any(x < 0 for x in fd):
            raise ValueError("fixed delays must be nonnegative")
        if self.coalition is not None and max(self.coalition.members) >= n:
            raise ValueError("coalition member outside the validator set")

    @property
    def n(self) -> int:
        return len(self.proposal)

    @classmethod
    def honest(cls, n: int) -> "StrategyProfile":
        """Everyone proposes early and votes honestly."""
        return cls((ProposalRule.EARLY,) * n, (VoteRule.HONEST,) * n)

    @classmethod
    def late(cls, n: int) -> "StrategyProfile":
        """Everyone delays to the max delay and votes honestly."""
        return cls((ProposalRule.LATE,) * n, (VoteRule.HONEST,) * n)

    def with_fixed_delay(self, i: int, delay: float) -> "StrategyProfile":
        prop, fd = list(self.proposal), list(self.fixed_delay)
        prop[i], fd[i] = ProposalRule.FIXED, delay
        return StrategyProfile(tuple(prop), self.votes, tuple(fd), self.coalition)

    @classmethod
    def with_coalition(
        cls,
        n: int,
        members: Sequence[int],
        kind: CoalitionKind = CoalitionKind.RATIONAL,
        leaders_late: bool = False,
        grief: bool = False,
    ) -> "StrategyProfile":
        """Honest outsiders; members vote 0 for each other.

        ``leaders_late`` makes members delay maximally (the large-coalition
        deviation); ``grief`` makes members withhold votes for outsiders.
        """
        spec = CoalitionSpec(frozenset(members), kind)
        member_vote = VoteRule.ZERO_FOR_COALITION_GRIEF if grief else VoteRule.ZERO_FOR_COALITION
        prop = [ProposalRule.LATE if (leaders_late and k in spec.members) else ProposalRule.EARLY for k in range(n)]
        votes = [member_vote if k in spec.members else VoteRule.HONEST for k in range(n)]
        return cls(tuple(prop), tuple(votes), (), spec)

    @classmethod
    def whale(cls, n: int, members: Sequence[int]) -> "StrategyProfile":
        """An honest, co-located whale; its internal latencies are zero."""
        spec = CoalitionSpec(frozenset(members), CoalitionKind.WHALE)
        return cls((ProposalRule.EARLY,) * n, (VoteRule.HONEST,) * n, (), spec)

    def coalition_ids(self) -> list[int]:
        """0 for coalition members, -1 for everyone else."""
        members = self.coalition.members if self.coalition else frozenset()
        return [0 if k in members else -1 for k in range(self.n)]

    def colocated(self) -> frozenset[int]:
        if self.coalition is not None and self.coalition.kind is CoalitionKind.WHALE:
            return self.coalition.members
        return frozenset()


def decide_delay(profile: StrategyProfile, leader: int, max_delay: float) -> float:
    rule = profile.proposal[leader]
    if rule is ProposalRule.EARLY:
        return 0.0
    if rule is ProposalRule.LATE:
        return max_delay
    return min(profile.fixed_delay[leader], max_delay)


def decide_vote(profile: StrategyProfile, voter: int, leader: int, observed: float) -> Optional[float]:
    """The vote ``voter`` reports on ``leader``'s block; ``None`` means absent."""
    rule = profile.votes[voter]
    if rule is VoteRule.HONEST:
        return observed
    if rule is VoteRule.ALWAYS_TIMEOUT:
        return None
    same = profile.coalition is not None and voter in profile.coalition.members and leader in profile.coalition.members
    if same:
        return 0.0
    return None if rule is VoteRule.ZERO_FOR_COALITION_GRIEF else observed
