"""Synthetic labeled epochs for detector pre-training.

Each epoch is T requesters served by one scripted policy drawn from a
50/50 mixture of fair and biased rules (see scripted.random_scripted). All
epochs run together as one lockstep batch, so generating a thousand of them
costs about as much as one long rollout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import LabeledEpoch, oracle_label
from .environment import Environment, outcome_matrix
from .metrics import IssueScoreVector, issue_breakdown_arrays
from .population import enumerate_groups
from .scripted import EpisodeScriptedPolicy, random_scripted


@dataclass(frozen=True)
class DataConfig:
    n_epochs: int = 1000
    T: int = 30
    threshold: float = 0.05
    noise_rate: float = 0.05
    biased_fraction: float = 0.5
    sloppiness: float = 0.01
    bias_rate_low: float = 0.8
    bias_rate_high: float = 1.0
    max_targets: int = 2
    reduction: str = "mean"

    def __post_init__(self):
        if self.n_epochs < 1 or self.T < 2:
            raise ValueError("need n_epochs >= 1 and T >= 2")
        if not 0.0 <= self.biased_fraction <= 1.0:
            raise ValueError("biased_fraction must lie in [0, 1]")
        if not 0.0 <= self.bias_rate_low <= self.bias_rate_high <= 1.0:
            raise ValueError("bias rates must satisfy 0 <= low <= high <= 1")
        if not 0.0 <= self.sloppiness <= 1.0:
            raise ValueError("sloppiness must lie in [0, 1]")


def simulate_issue_vectors(env: Environment, cfg: DataConfig,
                           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Issue vectors of cfg.n_epochs scripted epochs.

    Returns (vectors (n, 4), biased_by_construction (n,) bool). The policy
    draws come first, then the single batched rollout.
    """
    groups = enumerate_groups()
    n, T = cfg.n_epochs, cfg.T
    biased = np.zeros(n, dtype=bool)
    biased[: int(round(cfg.biased_fraction * n))] = True
    biased = rng.permutation(biased)
    policies = [random_scripted(env.config, rng, groups, bool(b), cfg.sloppiness,
                                (cfg.bias_rate_low, cfg.bias_rate_high), cfg.max_targets)
                for b in biased]
    per_episode = EpisodeScriptedPolicy(env.config, [p for p in policies for _ in range(T)])
    roll = env.run_batch(per_episode, rng, n * T)
    events = outcome_matrix(roll.records, env.config)
    vectors = np.empty((n, 4))
    for e in range(n):
        sl = slice(e * T, (e + 1) * T)
        vectors[e] = issue_breakdown_arrays(events[sl], roll.identity_indices[sl], groups).total.as_array()
    return vectors, biased


def label_vectors(vectors: np.ndarray, threshold: float, noise_rate: float,
                  rng: np.random.Generator, reduction: str = "mean") -> np.ndarray:
    """Oracle labels, one uniform drawn per vector regardless of noise."""
    return np.array([oracle_label(IssueScoreVector.from_seq(v), threshold, noise_rate, rng,
                                  reduction) for v in vectors], dtype=np.int64)


def generate(env: Environment, cfg: DataConfig, rng: np.random.Generator) -> list[LabeledEpoch]:
    vectors, _ = simulate_issue_vectors(env, cfg, rng)
    labels = label_vectors(vectors, cfg.threshold, cfg.noise_rate, rng, cfg.reduction)
    return [LabeledEpoch(IssueScoreVector.from_seq(v), int(y)) for v, y in zip(vectors, labels)]
