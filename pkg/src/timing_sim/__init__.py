"""Timing games in optimistically responsive BFT consensus: simulator and closed-form oracle."""

from .latency import (
    DeterministicCluster,
    DeterministicLine,
    ExplicitMatrix,
    LatencyDraw,
    LatencyModel,
    LognormalWorld,
    load_ping_table,
    normalize_weights,
    order_statistic,
    sample_draw,
    world_model_from_table,
)
from .protocol import ProtocolParams, RoundOutcome
from .rewards import RewardParams, is_time_decreasing
from .simulator import BinaryDecay, SimConfig, Uniform, UtilityReport, run_experiment
from .strategies import CoalitionKind, ProposalRule, StrategyProfile, VoteRule

__version__ = "0.1.0"

__all__ = [
    "DeterministicCluster",
    "DeterministicLine",
    "ExplicitMatrix",
    "LatencyDraw",
    "LatencyModel",
    "LognormalWorld",
    "load_ping_table",
    "normalize_weights",
    "order_statistic",
    "sample_draw",
    "world_model_from_table",
    "ProtocolParams",
    "RoundOutcome",
    "RewardParams",
    "is_time_decreasing",
    "BinaryDecay",
    "SimConfig",
    "Uniform",
    "UtilityReport",
    "run_experiment",
    "CoalitionKind",
    "ProposalRule",
    "StrategyProfile",
    "VoteRule",
]
