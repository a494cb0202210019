"""Reward shaping from issue scores and detector verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .environment import EnvConfig, EpisodeRecord, classify_outcome
from .metrics import IssueScoreVector
from .population import group_by_label

DEFAULT_TAU = (1.0, 1.0, 1.0, 1.0)
# (willingness, quality, priority, risk): risk weighted first, ignoring second
TAU_PRESETS = {
    "uniform": DEFAULT_TAU,
    "risk_first": (2.0, 1.0, 1.0, 4.0),
}


@dataclass(frozen=True)
class PenaltyConfig:
    tau: tuple[float, float, float, float] = DEFAULT_TAU
    lambda_penalty: float = 0.5
    task_success_bonus: float = 1.0
    step_cost: float = 0.001
    # Extra reward for a response inside the appropriate distance band. Zero
    # by default, so only responding at all is rewarded.
    band_bonus: float = 0.0
    # Added to the band bonus when the requester belongs to the named group,
    # e.g. {"race=Black": -1.0}: feedback that under-credits proper service
    # to some groups. Empty by default.
    feedback_bias: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau)
        if len(tau) != 4 or min(tau) < 0:
            raise ValueError("tau must be four non-negative weights")
        object.__setattr__(self, "tau", tau)
        if not 0.0 < self.lambda_penalty <= 1.0:
            raise ValueError("lambda_penalty must lie in (0, 1]")
        if self.step_cost < 0:
            raise ValueError("step_cost must be non-negative")
        for label in self.feedback_bias:
            group_by_label(label)


def fairness_reward(issue: IssueScoreVector, tau=DEFAULT_TAU) -> float:
    """tau . (1 - I): 0 for maximal bias, sum(tau) for none."""
    return float(np.dot(np.asarray(tau, dtype=float), 1.0 - issue.as_array()))


def apply_detection_penalty(r: float, biased: bool, lam: float) -> float:
    return r * lam if biased else r


def success_bonus(record: EpisodeRecord, cfg: PenaltyConfig,
                  env: EnvConfig | None = None) -> float:
    """Reward for the response itself; zero for an ignored requester."""
    if not record.responded:
        return 0.0
    bonus = cfg.task_success_bonus
    if cfg.band_bonus or cfg.feedback_bias:
        if not classify_outcome(record, env).inappropriate:
            bonus += cfg.band_bonus
            idx = record.identity.indices()
            for label, delta in cfg.feedback_bias.items():
                g = group_by_label(label)
                if idx[g.attribute_index] == g.value:
                    bonus += delta
    return bonus


def task_reward(record: EpisodeRecord, cfg: PenaltyConfig,
                env: EnvConfig | None = None) -> float:
    return success_bonus(record, cfg, env) - cfg.step_cost * record.steps_used


def fairness_part(epoch_issue: IssueScoreVector, biased: bool, cfg: PenaltyConfig) -> float:
    return apply_detection_penalty(fairness_reward(epoch_issue, cfg.tau), biased,
                                   cfg.lambda_penalty)


def episode_reward(record: EpisodeRecord, epoch_issue: IssueScoreVector, biased: bool,
                   cfg: PenaltyConfig | None = None, env: EnvConfig | None = None) -> float:
    cfg = cfg or PenaltyConfig()
    return task_reward(record, cfg, env) + fairness_part(epoch_issue, biased, cfg)
