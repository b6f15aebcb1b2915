"""Multi-objective reward: three normalized components under evolving weights.

Per user and slot the scalar reward is

    r = alpha * r_th - beta * r_blk - gamma * r_sw

with r_th the achieved rate clipped to [0, 1] after normalization and r_blk,
r_sw binary blocking/switch indicators.  In adaptive mode the weights track
operating targets between episodes: beta and gamma move multiplicatively with
the observed blocking and handover rates, and alpha absorbs whatever is left
of the weight budget, floored so throughput never drops out of the reward
entirely.  Static mode keeps fixed weights for ablations against the
scalarized network objective T - lambda1*B - lambda2*C.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .environment import EpisodeMetrics, EpisodeTrace, StepOutcome
from .errors import ConfigurationError


class WeightMode(enum.Enum):
    STATIC = "static"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class AdaptiveWeights:
    """Non-negative reward weights; adaptive mode keeps them on a fixed
    simplex (sum equal to `weight_budget`)."""

    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    mode: WeightMode = WeightMode.ADAPTIVE
    weight_budget: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise ConfigurationError(
                f"weights must be non-negative, got "
                f"({self.alpha}, {self.beta}, {self.gamma})"
            )
        if self.mode is WeightMode.ADAPTIVE:
            total = self.alpha + self.beta + self.gamma
            if abs(total - self.weight_budget) > 1e-9:
                raise ConfigurationError(
                    f"adaptive weights must sum to {self.weight_budget}, got {total}"
                )


@dataclass(frozen=True)
class AdaptationTargets:
    """Operating points the weight controller steers toward, both expressed
    per user-slot, plus the floor on the throughput weight."""

    blocking: float = 0.05
    handover: float = 0.05
    alpha_min: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.blocking <= 1.0 or not 0.0 <= self.handover <= 1.0:
            raise ConfigurationError("targets must be fractions in [0, 1]")
        if self.alpha_min < 0.0:
            raise ConfigurationError(f"alpha_min must be non-negative, got {self.alpha_min}")


@dataclass(frozen=True)
class StaticObjectiveParams:
    """Fixed trade-off coefficients of the scalarized network objective."""

    lambda1: float = 1.0
    lambda2: float = 0.5

    def __post_init__(self):
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ConfigurationError("lambda coefficients must be non-negative")


@dataclass(frozen=True)
class RewardBreakdown:
    r_th: float
    r_blk: float
    r_sw: float
    scalar: float


def compute_reward(rate_bps: float, blocked: bool, handover: bool,
                   weights: AdaptiveWeights, rate_norm_bps: float) -> RewardBreakdown:
    """Reward of one user's slot outcome."""
    if rate_norm_bps <= 0:
        raise ConfigurationError(f"rate_norm_bps must be positive, got {rate_norm_bps}")
    r_th = min(max(rate_bps / rate_norm_bps, 0.0), 1.0)
    r_blk = 1.0 if blocked else 0.0
    r_sw = 1.0 if handover else 0.0
    return RewardBreakdown(
        r_th=r_th, r_blk=r_blk, r_sw=r_sw,
        scalar=weights.alpha * r_th - weights.beta * r_blk - weights.gamma * r_sw,
    )


def step_rewards(outcome: StepOutcome, weights: AdaptiveWeights,
                 rate_norm_bps: float) -> np.ndarray:
    """Vector of per-user rewards for one environment step."""
    if rate_norm_bps <= 0:
        raise ConfigurationError(f"rate_norm_bps must be positive, got {rate_norm_bps}")
    r_th = np.clip(outcome.rate_bps / rate_norm_bps, 0.0, 1.0)
    return (weights.alpha * r_th
            - weights.beta * outcome.blocked
            - weights.gamma * outcome.handover)


def trace_reward_sum(trace: EpisodeTrace, weights: AdaptiveWeights,
                     rate_norm_bps: float) -> float:
    """Episode total of the scalar reward over all users and slots."""
    r_th = np.clip(trace.rate_bps / rate_norm_bps, 0.0, 1.0)
    total = (weights.alpha * r_th
             - weights.beta * trace.blocked
             - weights.gamma * trace.handover)
    return float(total.sum())


def adapt_weights(weights: AdaptiveWeights, recent_blocking_rate: float,
                  recent_handover_rate: float, targets: AdaptationTargets,
                  eta: float) -> AdaptiveWeights:
    """Move the penalty weights toward their targets and rebalance.

    beta and gamma are scaled by exp(eta * (observed - target)); alpha takes
    the remaining budget.  When that would push alpha below its floor, beta
    and gamma are shrunk proportionally so the floor holds exactly.
    """
    if weights.mode is not WeightMode.ADAPTIVE:
        raise ConfigurationError("weight adaptation requires adaptive mode")
    if not 0.0 <= recent_blocking_rate <= 1.0 or not 0.0 <= recent_handover_rate <= 1.0:
        raise ConfigurationError("observed rates must be fractions in [0, 1]")
    if targets.alpha_min > weights.weight_budget:
        raise ConfigurationError(
            f"alpha floor {targets.alpha_min} exceeds weight budget {weights.weight_budget}"
        )
    beta = weights.beta * math.exp(eta * (recent_blocking_rate - targets.blocking))
    gamma = weights.gamma * math.exp(eta * (recent_handover_rate - targets.handover))
    alpha = weights.weight_budget - beta - gamma
    if alpha < targets.alpha_min:
        scale = (weights.weight_budget - targets.alpha_min) / (beta + gamma)
        beta *= scale
        gamma *= scale
        alpha = targets.alpha_min
    return replace(weights, alpha=alpha, beta=beta, gamma=gamma)


def scalarized_objective(metrics: EpisodeMetrics, params: StaticObjectiveParams,
                         rate_norm_bps: float = 1.0) -> float:
    """Network objective T - lambda1*B - lambda2*C, with throughput expressed
    in units of `rate_norm_bps`."""
    if rate_norm_bps <= 0:
        raise ConfigurationError(f"rate_norm_bps must be positive, got {rate_norm_bps}")
    return (metrics.throughput_bps / rate_norm_bps
            - params.lambda1 * metrics.blocking_rate
            - params.lambda2 * metrics.handover_rate)
