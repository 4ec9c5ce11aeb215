"""MEV and block reward curves.

MEV is linear in the proposal duration, ``mu * x + mu0``.  The dynamic block
reward falls linearly from ``b0`` at 0 to zero at the timeout ``tau``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

__all__ = ["RewardParams", "is_time_decreasing", "REWARD_OUT_OF_DOMAIN"]

REWARD_OUT_OF_DOMAIN = "reward_out_of_domain"

# b0 == b * tau is checked to this relative tolerance
_REL_TOL = 1e-9
# votes within this many ms of [0, tau] are not flagged
_DOMAIN_EPS = 1e-9


@dataclass(frozen=True)
class RewardParams:
    """Reward curve parameters.

    Attributes:
        mu, mu0: MEV slope (reward/ms) and intercept.
        b, b0: block reward slope and intercept; ``b0 = b * tau``.
        tau: timeout (ms) at which the block reward reaches zero.
        static: pay ``b0`` regardless of the timeliness vote.
        target: optional target duration; the reward then rises from 0 up
            to the target and falls to 0 at ``tau``.
        slack: timeout slack ``d`` the timeout was derived from, if any.
    """

    mu: float
    mu0: float
    b: float
    b0: float
    tau: float
    static: bool = False
    target: Optional[float] = None
    slack: Optional[float] = None

    def __post_init__(self):
        for name in ("mu", "mu0", "b", "b0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.static and not math.isclose(self.b0, self.b * self.tau, rel_tol=_REL_TOL, abs_tol=1e-15):
            raise ValueError(f"b0 != b * tau ({self.b0} vs {self.b * self.tau}); the reward must reach 0 at the timeout")
        if self.target is not None and not (0 < self.target < self.tau):
            raise ValueError(f"target duration must lie in (0, tau), got {self.target}")

    @classmethod
    def linear(cls, mu: float, mu0: float, kappa: float, tau: float, **kw) -> "RewardParams":
        """Block reward slope ``b = kappa * mu`` with ``b0 = b * tau``."""
        b = kappa * mu
        return cls(mu=mu, mu0=mu0, b=b, b0=b * tau, tau=tau, **kw)

    @property
    def kappa(self) -> float:
        return self.b / self.mu if self.mu else math.inf

    def mev(self, x: float) -> float:
        return self.mu * x + self.mu0

    def in_domain(self, v: float) -> bool:
        return -_DOMAIN_EPS <= v <= self.tau + _DOMAIN_EPS

    def block_reward(self, v: float, violations: Counter | None = None) -> float:
        """Reward for an aggregated vote ``v`` (``inf`` when fewer than m votes arrived).

        Votes above ``tau`` pay 0.  Negative votes are evaluated on the line
        as written.  Both cases are counted in ``violations``.
        """
        if v == math.inf:
            return 0.0
        if violations is not None and not self.in_domain(v):
            violations[REWARD_OUT_OF_DOMAIN] += 1
        if self.static:
            return self.b0
        if self.target is not None:
            return self.target_block_reward(v, self.target)
        if v >= self.tau:
            return 0.0
        return self.b0 - self.b * v

    def target_block_reward(self, v: float, target: float) -> float:
        """Rises linearly from 0 to ``b * (tau - target)`` at ``target``, then falls with slope ``b``."""
        if not 0 < target < self.tau:
            raise ValueError(f"target duration must lie in (0, tau), got {target}")
        peak = self.b * (self.tau - target)
        if v >= self.tau:
            return 0.0
        if v <= target:
            return peak * v / target
        return self.b * (self.tau - v)

    def total(self, x: float, v: float | None = None) -> float:
        """MEV for duration ``x`` plus block reward for vote ``v`` (defaults to ``x``)."""
        return self.mev(x) + self.block_reward(x if v is None else v)

    def is_time_decreasing(self) -> bool:
        return is_time_decreasing(self)


def is_time_decreasing(params: RewardParams, tau: float | None = None) -> bool:
    """Whether MEV plus block reward strictly falls with duration.

    For linear curves this is ``b > mu``, equivalently ``b0 > mu * tau``.
    """
    if params.static:
        return False
    if tau is None:
        return params.b > params.mu
    return params.b0 > params.mu * tau
