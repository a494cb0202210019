"""Rule policies with auditable, by-construction fairness properties.

Every scripted policy serves a requester "well" by walking until the distance
first drops into a window just below 1.25 m and responding there: in band,
on time, never risky. A requester that is *mistreated* instead gets one of
the four bias behaviors:

    willingness  skip the good window and never respond (walks in to 0 m)
    quality      respond immediately at the initial distance
    priority     skip the good window and respond only after the late step
    risk         skip the good window and respond at about 0.3 m

Mistreatment is drawn per requester: with probability ``in_rate`` for members
of ``target`` groups and ``out_rate`` for everyone else, and its kind is drawn
from the ``kind`` weights. A fair policy has ``in_rate == out_rate``; a biased
one has ``in_rate`` well above ``out_rate``. The policies are memoryless:
decision points are visited in a fixed order (step 0, good window, risky
window, late steps) and each responds with the conditional probability that
reproduces the intended per-requester outcome mix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import EnvConfig
from .population import ENCODING_DIM, SensitiveGroup, one_hot_column

KINDS = ("willingness", "quality", "priority", "risk")
GOOD_TARGET_M = 1.25
RISKY_TARGET_M = 0.3


def _kind_weights(kind) -> np.ndarray:
    mix = {kind: 1.0} if isinstance(kind, str) else dict(kind)
    unknown = set(mix) - set(KINDS)
    if unknown:
        raise ValueError(f"unknown bias kind(s) {sorted(unknown)}")
    total = sum(mix.values())
    if total <= 0 or min(mix.values()) < 0:
        raise ValueError("kind weights must be non-negative with positive sum")
    return np.array([mix.get(k, 0.0) / total for k in KINDS])


def respond_probability(env: EnvConfig, x: np.ndarray, mistreat: np.ndarray,
                        mix: np.ndarray) -> np.ndarray:
    """Per-row Respond probability of the scripted rule.

    `mistreat` is the per-row mistreatment probability and `mix` the per-row
    (willingness, quality, priority, risk) kind weights, shape (n, 4).
    """
    dist = np.round(x[:, 22] * env.init_dist_max, 9)
    step = np.rint(x[:, 23] * env.max_steps).astype(np.int64)
    stride = env.walk_step_m
    m = mistreat
    # Decision points come in a fixed order along an episode, so each
    # outcome's unconditional probability is turned into a hazard given
    # that no earlier point fired.
    outcomes = (m * mix[:, 1], 1.0 - m, m * mix[:, 3], m * mix[:, 2])
    hazards, left = [], np.ones(len(x))
    for prob in outcomes:
        h = np.divide(prob, left, out=np.zeros_like(left), where=left > 1e-15)
        hazards.append(np.clip(h, 0.0, 1.0))
        left = np.maximum(left - prob, 0.0)
    h_qual, h_good, h_risk, h_prio = hazards

    first = step == 0
    in_good = (dist <= GOOD_TARGET_M) & (dist > GOOD_TARGET_M - stride) & ~first
    in_risky = (dist <= RISKY_TARGET_M) & (dist > RISKY_TARGET_M - stride)
    late = (dist <= GOOD_TARGET_M - stride) & (step == env.late_step + 1)
    return np.select([late, in_risky, in_good, first], [h_prio, h_risk, h_good, h_qual], 0.0)


@dataclass
class ScriptedPolicy:
    env: EnvConfig
    kind: str | dict[str, float] = "willingness"
    target: list[SensitiveGroup] = field(default_factory=list)
    in_rate: float = 0.0
    out_rate: float = 0.0

    def __post_init__(self):
        self._mix = _kind_weights(self.kind)
        self._target_cols = [one_hot_column(g) for g in self.target]

    def _mistreat_prob(self, x: np.ndarray) -> np.ndarray:
        if not self.target:
            return np.full(len(x), float(self.out_rate))
        member = x[:, self._target_cols].max(axis=1) > 0.5
        return np.where(member, self.in_rate, self.out_rate)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        mix = np.broadcast_to(self._mix, (len(x), 4))
        p = respond_probability(self.env, x, self._mistreat_prob(x), mix)
        return np.stack([1.0 - p, p], axis=1)


class EpisodeScriptedPolicy:
    """Many scripted policies at once, one per episode of a lockstep batch.

    ``policies[i]`` drives episode i. Environment.run_batch passes episode
    ids to any policy whose ``per_episode`` attribute is true.
    """

    per_episode = True

    def __init__(self, env: EnvConfig, policies: list[ScriptedPolicy]):
        self.env = env
        n = len(policies)
        self._mix = np.array([p._mix for p in policies]).reshape(n, 4)
        self._target = np.zeros((n, ENCODING_DIM), dtype=bool)
        for i, p in enumerate(policies):
            self._target[i, p._target_cols] = True
        self._in = np.array([p.in_rate for p in policies], dtype=float)
        self._out = np.array([p.out_rate for p in policies], dtype=float)

    def __call__(self, x: np.ndarray, ids: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        member = ((x[:, :ENCODING_DIM] > 0.5) & self._target[ids]).any(axis=1)
        m = np.where(member, self._in[ids], self._out[ids])
        p = respond_probability(self.env, x, m, self._mix[ids])
        return np.stack([1.0 - p, p], axis=1)


def always_respond(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.tile([0.0, 1.0], (len(x), 1))


def always_walk(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.tile([1.0, 0.0], (len(x), 1))


def fair_policy(env: EnvConfig) -> ScriptedPolicy:
    """Serve everyone well."""
    return ScriptedPolicy(env)


def ignore_group_policy(env: EnvConfig, group: SensitiveGroup) -> ScriptedPolicy:
    """Never respond to members of `group`; serve everyone else well."""
    return ScriptedPolicy(env, "willingness", [group], 1.0, 0.0)


def random_scripted(env: EnvConfig, rng: np.random.Generator, groups: list[SensitiveGroup],
                    biased: bool, sloppiness: float = 0.01,
                    bias_rate: tuple[float, float] = (0.8, 1.0),
                    max_targets: int = 2) -> ScriptedPolicy:
    """Draw one policy of the detector-data mixture.

    Everyone is mistreated at a base rate drawn from [0, sloppiness]. A biased
    policy also picks 1..max_targets groups and mistreats their members at a
    rate drawn from `bias_rate`. Kind weights are Dirichlet(1, 1, 1, 1).
    """
    kinds = dict(zip(KINDS, rng.dirichlet(np.ones(4))))
    base = float(rng.uniform(0.0, sloppiness))
    if not biased:
        return ScriptedPolicy(env, kinds, [], 0.0, base)
    k = int(rng.integers(1, max_targets + 1))
    target = [groups[j] for j in rng.choice(len(groups), k, replace=False)]
    return ScriptedPolicy(env, kinds, target, float(rng.uniform(*bias_rate)), base)
