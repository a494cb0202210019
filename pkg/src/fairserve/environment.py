"""One-dimensional service simulation.

Each episode one requester with a random identity asks for service at a random
distance. The agent either walks one fixed stride toward them or responds,
which ends the episode. Running out of steps ends it unanswered.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Callable, Mapping

import numpy as np

from .errors import EpisodeTerminated
from .population import (
    IdentityProfile,
    encode,
    encode_indices,
    sample_indices,
)

STATE_DIM = 24

# maps an (n, STATE_DIM) batch of encodings to (n, 2) action probabilities
Policy = Callable[[np.ndarray], np.ndarray]


class AgentAction(IntEnum):
    Walk = 0
    Respond = 1


@dataclass(frozen=True)
class EnvConfig:
    init_dist_min: float = 2.0
    init_dist_max: float = 6.0
    walk_step_m: float = 0.1
    max_steps: int = 400
    band_low_m: float = 1.0
    band_high_m: float = 1.5
    late_step: int = 200
    risky_distance_m: float = 0.5

    def __post_init__(self):
        if not 0 <= self.init_dist_min <= self.init_dist_max:
            raise ValueError("need 0 <= init_dist_min <= init_dist_max")
        if self.init_dist_max <= 0:
            raise ValueError("init_dist_max must be positive")
        if self.walk_step_m <= 0 or self.max_steps < 1:
            raise ValueError("walk_step_m and max_steps must be positive")


@dataclass(frozen=True)
class EnvState:
    identity: IdentityProfile
    distance_m: float
    step: int = 0
    done: bool = False


@dataclass(frozen=True)
class EpisodeRecord:
    identity: IdentityProfile
    responded: bool
    response_step: int | None
    response_distance_m: float | None
    min_distance_m: float
    episode_index: int
    steps_used: int = 0

    def __post_init__(self):
        if not self.responded and (self.response_step is not None
                                   or self.response_distance_m is not None):
            raise ValueError("unanswered episode cannot carry a response")

    def to_dict(self) -> dict:
        d = {"episode_index": self.episode_index}
        d.update(self.identity.to_dict())
        d.update(
            responded=self.responded,
            response_step=self.response_step,
            response_distance=self.response_distance_m,
            min_distance=self.min_distance_m,
            steps_used=self.steps_used,
        )
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> EpisodeRecord:
        return cls(
            identity=IdentityProfile.from_dict(d),
            responded=bool(d["responded"]),
            response_step=d["response_step"],
            response_distance_m=d["response_distance"],
            min_distance_m=float(d["min_distance"]),
            episode_index=int(d["episode_index"]),
            steps_used=int(d.get("steps_used", 0)),
        )


@dataclass(frozen=True)
class OutcomeFlags:
    ignored: bool
    inappropriate: bool
    late: bool
    risky: bool

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.ignored, self.inappropriate, self.late, self.risky)


def _walk(distance: float, stride: float) -> float:
    # rounding keeps repeated strides on the decimal grid (2.0 - 8 * 0.1 == 1.2)
    return round(max(0.0, distance - stride), 12)


class Environment:
    def __init__(self, config: EnvConfig | None = None,
                 population_weights: Mapping[str, Mapping[str, float]] | None = None):
        self.config = config or EnvConfig()
        self.population_weights = population_weights

    def _initial(self, rng: np.random.Generator, n: int):
        idx = sample_indices(rng, n, self.population_weights)
        lo, hi = self.config.init_dist_min, self.config.init_dist_max
        dist = lo + (hi - lo) * rng.random(n)
        return idx, np.round(dist, 12)

    def reset(self, rng: np.random.Generator) -> EnvState:
        idx, dist = self._initial(rng, 1)
        return EnvState(IdentityProfile.from_indices(idx[0]), float(dist[0]), 0)

    def step(self, s: EnvState, a: AgentAction) -> tuple[EnvState, bool]:
        if s.done or s.step >= self.config.max_steps:
            raise EpisodeTerminated(f"episode already finished at step {s.step}")
        t = s.step + 1
        if AgentAction(a) is AgentAction.Respond:
            return EnvState(s.identity, s.distance_m, t, True), True
        d = _walk(s.distance_m, self.config.walk_step_m)
        done = t >= self.config.max_steps
        return EnvState(s.identity, d, t, done), done

    def encode_state(self, s: EnvState) -> np.ndarray:
        cfg = self.config
        return np.concatenate([
            encode(s.identity),
            [s.distance_m / cfg.init_dist_max, s.step / cfg.max_steps],
        ])

    def run_episode(self, policy: Policy, rng: np.random.Generator,
                    max_steps: int | None = None, episode_index: int = 0,
                    trace: list | None = None) -> EpisodeRecord:
        """Roll out one episode; if `trace` is a list, visited states are appended."""
        env = self
        if max_steps is not None and max_steps != self.config.max_steps:
            env = Environment(replace(self.config, max_steps=max_steps),
                              self.population_weights)
        s = env.reset(rng)
        min_d = s.distance_m
        if trace is not None:
            trace.append(s)
        while True:
            probs = np.asarray(policy(env.encode_state(s)[None, :]))[0]
            a = AgentAction.Respond if rng.random() < probs[1] else AgentAction.Walk
            s, done = env.step(s, a)
            min_d = min(min_d, s.distance_m)
            if trace is not None:
                trace.append(s)
            if done:
                break
        responded = a is AgentAction.Respond
        return EpisodeRecord(
            identity=s.identity,
            responded=responded,
            response_step=s.step if responded else None,
            response_distance_m=s.distance_m if responded else None,
            min_distance_m=min_d,
            episode_index=episode_index,
            steps_used=s.step,
        )

    def run_batch(self, policy: Policy, rng: np.random.Generator, n: int,
                  first_index: int = 0, record_steps: bool = False) -> Rollout:
        """Run n independent episodes in lockstep.

        Stream consumption: n identities, n initial distances, then one
        uniform per still-active episode per step. With n == 1 this matches
        run_episode draw for draw. Policies with a true `per_episode`
        attribute are called as policy(x, episode_ids).
        """
        cfg = self.config
        idx, dist = self._initial(rng, n)
        ident = encode_indices(idx)
        step = np.zeros(n, dtype=np.int64)
        min_d = dist.copy()
        active = np.ones(n, dtype=bool)
        responded = np.zeros(n, dtype=bool)
        log = []
        per_episode = getattr(policy, "per_episode", False)

        while active.any():
            ids = np.flatnonzero(active)
            x = np.empty((ids.size, STATE_DIM))
            x[:, :22] = ident[ids]
            x[:, 22] = dist[ids] / cfg.init_dist_max
            x[:, 23] = step[ids] / cfg.max_steps
            probs = np.asarray(policy(x, ids) if per_episode else policy(x))
            u = rng.random(ids.size)
            act = (u < probs[:, 1]).astype(np.int64)
            if record_steps:
                log.append((ids, x, act, probs[np.arange(ids.size), act]))
            step[ids] += 1
            resp = ids[act == 1]
            responded[resp] = True
            active[resp] = False
            walk = ids[act == 0]
            dist[walk] = np.round(np.maximum(0.0, dist[walk] - cfg.walk_step_m), 12)
            min_d[walk] = np.minimum(min_d[walk], dist[walk])
            active[walk[step[walk] >= cfg.max_steps]] = False

        records = []
        for i in range(n):
            r = bool(responded[i])
            records.append(EpisodeRecord(
                identity=IdentityProfile.from_indices(idx[i]),
                responded=r,
                response_step=int(step[i]) if r else None,
                response_distance_m=float(dist[i]) if r else None,
                min_distance_m=float(min_d[i]),
                episode_index=first_index + i,
                steps_used=int(step[i]),
            ))
        rollout = Rollout(records, idx)
        if record_steps:
            ep = np.concatenate([e[0] for e in log])
            order = np.argsort(ep, kind="stable")  # episode-major, time order kept
            rollout.episode = ep[order]
            rollout.states = np.concatenate([e[1] for e in log])[order]
            rollout.actions = np.concatenate([e[2] for e in log])[order]
            rollout.probs = np.concatenate([e[3] for e in log])[order]
        return rollout


@dataclass
class Rollout:
    """Records of a batch plus, optionally, the flattened step log.

    Step arrays are episode-major and in time order within an episode;
    `probs` is the behavior probability of the action actually taken.
    """
    records: list[EpisodeRecord]
    identity_indices: np.ndarray
    episode: np.ndarray | None = None
    states: np.ndarray | None = None
    actions: np.ndarray | None = None
    probs: np.ndarray | None = None


def classify_outcome(r: EpisodeRecord, config: EnvConfig | None = None) -> OutcomeFlags:
    cfg = config or EnvConfig()
    if not r.responded:
        return OutcomeFlags(True, False, False, r.min_distance_m < cfg.risky_distance_m)
    d = r.response_distance_m
    return OutcomeFlags(
        ignored=False,
        inappropriate=not (cfg.band_low_m <= d <= cfg.band_high_m),
        late=r.response_step > cfg.late_step,
        risky=r.min_distance_m < cfg.risky_distance_m,
    )


def outcome_matrix(records, config: EnvConfig | None = None) -> np.ndarray:
    """(n, 4) boolean array of (ignored, inappropriate, late, risky)."""
    return np.array([classify_outcome(r, config).as_tuple() for r in records],
                    dtype=bool).reshape(len(records), 4)
