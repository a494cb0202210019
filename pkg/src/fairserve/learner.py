"""Policy-gradient training with fairness-shaped rewards.

An epoch serves T requesters with a frozen snapshot of the policy, scores the
epoch's group-averaged issue vector, optionally asks the pre-trained detector
whether the epoch looks biased, turns everything into per-step rewards and
applies one REINFORCE or PPO update.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import approximator as ax
from .environment import EnvConfig, Environment, EpisodeRecord, outcome_matrix
from .errors import ConfigError, FairServeError
from .metrics import IssueScoreVector, issue_breakdown_arrays, total_issue_scalar
from .shaping import PenaltyConfig, fairness_part, success_bonus

log = logging.getLogger(__name__)

EPOCH_LOG_FORMAT = "fairserve-epochlog"
EPOCH_LOG_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "ppo"
    guidance: bool = False
    T: int = 30
    gamma: float = 0.99
    epsilon: float = 0.2
    ppo_inner_epochs: int = 4
    lr: float = 3e-3
    momentum: float = 0.0
    total_epochs: int = 300
    seed: int = 0
    hidden: int = 32
    value_coef: float = 0.5
    normalize_advantages: bool = True
    checkpoint_every: int = 0
    scalar_reduction: str = "mean"

    def __post_init__(self):
        if self.algorithm not in ("reinforce", "ppo"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.epsilon <= 0 or self.T < 1:
            raise ValueError("need epsilon > 0 and T >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.lr <= 0 or self.total_epochs < 0:
            raise ValueError("need lr > 0 and total_epochs >= 0")


@dataclass
class Trajectory:
    """One episode's steps under the behavior snapshot."""
    states: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray
    epoch: int = 0
    bootstrap_value: float = 0.0  # C(S_T); zero when the episode truly ended


@dataclass
class EpochBatch:
    states: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray


def policy_of(params: ax.Params):
    return lambda x: ax.actor_forward(params, x)


def collect_epoch(params: ax.Params, env: Environment, T: int, rng: np.random.Generator,
                  epoch: int = 0, policy=None):
    """Serve T requesters with a frozen snapshot; rewards are left at zero."""
    if T < 1:
        raise ValueError("T must be >= 1")
    pol = policy if policy is not None else policy_of(params)
    ro = env.run_batch(pol, rng, T, first_index=epoch * T, record_steps=True)
    bounds = np.searchsorted(ro.episode, np.arange(T + 1))
    trajs = []
    for i in range(T):
        sl = slice(bounds[i], bounds[i + 1])
        trajs.append(Trajectory(
            states=ro.states[sl],
            actions=ro.actions[sl],
            logp_old=np.log(ro.probs[sl]),
            rewards=np.zeros(bounds[i + 1] - bounds[i]),
            epoch=epoch,
        ))
    return trajs, ro.records, ro.identity_indices


def assign_rewards(trajs: list[Trajectory], records: list[EpisodeRecord],
                   fairness: float, cfg: PenaltyConfig, env: EnvConfig | None = None) -> None:
    """Every step pays the step cost; the last one also pays the episode outcome."""
    for tr, rec in zip(trajs, records):
        tr.rewards[:] = -cfg.step_cost
        tr.rewards[-1] += success_bonus(rec, cfg, env) + fairness


def discounted_returns(rewards: np.ndarray, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    g = lfilter([1.0], [1.0, -gamma], r[::-1])[::-1]
    if bootstrap:
        g = g + bootstrap * gamma ** np.arange(len(r), 0, -1)
    return g


def advantage(traj: Trajectory, params: ax.Params | None, gamma: float) -> np.ndarray:
    """Discounted reward-to-go plus discounted bootstrap, minus C(S_t)."""
    g = discounted_returns(traj.rewards, gamma, traj.bootstrap_value)
    if params is None:
        return g
    return g - ax.critic_forward(params, traj.states)


def probability_ratio(params: ax.Params, states, actions, logp_old) -> np.ndarray:
    logp = ax.log_softmax(ax.actor_logits(params, states))
    logp = logp[np.arange(len(logp)), np.asarray(actions)]
    return np.exp(logp - logp_old)


def clipped_terms(ratios, advantages, epsilon: float):
    """Per-step (unclipped, clipped, min) surrogate terms."""
    r = np.asarray(ratios, dtype=float)
    a = np.asarray(advantages, dtype=float)
    unclipped = r * a
    clipped = np.clip(r, 1.0 - epsilon, 1.0 + epsilon) * a
    return unclipped, clipped, np.minimum(unclipped, clipped)


def ppo_loss(ratios, advantages, epsilon: float) -> float:
    """Negated clipped surrogate objective, averaged over steps."""
    return -float(np.mean(clipped_terms(ratios, advantages, epsilon)[2]))


def _flatten(trajs: list[Trajectory], params: ax.Params, gamma: float,
             use_critic: bool) -> EpochBatch:
    rets = [discounted_returns(t.rewards, gamma, t.bootstrap_value) for t in trajs]
    states = np.concatenate([t.states for t in trajs])
    returns = np.concatenate(rets)
    adv = returns - ax.critic_forward(params, states) if use_critic else returns.copy()
    return EpochBatch(
        states=states,
        actions=np.concatenate([t.actions for t in trajs]),
        logp_old=np.concatenate([t.logp_old for t in trajs]),
        returns=returns,
        advantages=adv,
    )


def _normalize(adv: np.ndarray) -> np.ndarray:
    sd = adv.std()
    return (adv - adv.mean()) / sd if sd > 1e-12 else adv - adv.mean()


def reinforce_update(params: ax.Params, trajs: list[Trajectory], gamma: float,
                     lr: float, optimizer=None) -> ax.Params:
    """Ascend mean_t log pi(a_t|s_t) * G_t; the critic is left untouched."""
    if not trajs:
        raise ValueError("no trajectories")
    b = _flatten(trajs, params, gamma, use_critic=False)
    cache: dict = {}
    probs = ax.actor_forward(params, b.states, cache)
    g_logits = -ax.logprob_grad_logits(probs, b.actions) * b.returns[:, None] / len(b.returns)
    grads = ax.actor_backward(params, cache, g_logits)
    if optimizer is not None:
        return optimizer.step(params, grads)
    return ax.sgd_step(params, grads, lr)


def ppo_gradients(params: ax.Params, b: EpochBatch, epsilon: float,
                  value_coef: float) -> ax.Params:
    n = len(b.actions)
    cache: dict = {}
    probs = ax.actor_forward(params, b.states, cache)
    logp = np.log(probs[np.arange(n), b.actions])
    ratio = np.exp(logp - b.logp_old)
    unclipped, clipped, _ = clipped_terms(ratio, b.advantages, epsilon)
    # the min follows the unclipped branch wherever it is the smaller term
    active = unclipped <= clipped
    coef = np.where(active, ratio * b.advantages, 0.0)
    g_logits = -ax.logprob_grad_logits(probs, b.actions) * coef[:, None] / n
    grads = ax.actor_backward(params, cache, g_logits)

    vcache: dict = {}
    values = ax.critic_forward(params, b.states, vcache)
    grads.update(ax.critic_backward(params, vcache, value_coef * 2.0 * (values - b.returns) / n))
    return grads


def ppo_update(params: ax.Params, trajs: list[Trajectory], cfg: TrainConfig,
               optimizer=None) -> ax.Params:
    """Several full-batch passes on the clipped surrogate plus critic regression.

    Ratios are recomputed each pass against the stored behavior log-probs.
    """
    b = _flatten(trajs, params, cfg.gamma, use_critic=True)
    if cfg.normalize_advantages:
        b.advantages = _normalize(b.advantages)
    opt = optimizer or ax.Momentum(cfg.lr, 0.0)
    for _ in range(cfg.ppo_inner_epochs):
        params = opt.step(params, ppo_gradients(params, b, cfg.epsilon, cfg.value_coef))
    return params


@dataclass
class TrainResult:
    params: ax.Params
    epochs: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def _epoch_record(epoch, issue, excluded, verdict, prob, rewards, events, reduction):
    counts = events.sum(axis=0)
    return {
        "epoch": epoch,
        "issue_vector": issue.as_list(),
        "scalar": total_issue_scalar(issue, reduction),
        "detector_verdict": verdict,
        "detector_probability": prob,
        "mean_reward": float(np.mean(rewards)),
        "episodes_ignored": int(counts[0]),
        "episodes_inappropriate": int(counts[1]),
        "episodes_late": int(counts[2]),
        "episodes_risky": int(counts[3]),
        "excluded_groups": excluded,
    }


def epoch_log_header(cfg: TrainConfig) -> dict:
    return {"format": EPOCH_LOG_FORMAT, "version": EPOCH_LOG_VERSION,
            "algorithm": cfg.algorithm, "guidance": cfg.guidance, "seed": cfg.seed}


def train(cfg: TrainConfig, detector=None, env: Environment | None = None,
          penalty: PenaltyConfig | None = None, out_dir=None) -> TrainResult:
    """Run cfg.total_epochs epochs; with out_dir, stream the epoch log and checkpoints."""
    env = env or Environment()
    penalty = penalty or PenaltyConfig()
    if cfg.guidance and detector is None:
        raise ConfigError("guidance requires a pre-fitted detector")
    init_seq, roll_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    params = ax.init_params(np.random.default_rng(init_seq), cfg.hidden)
    rng = np.random.default_rng(roll_seq)
    opt = ax.Momentum(cfg.lr, cfg.momentum)
    result = TrainResult(params)

    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "epochs.jsonl", "w")
        log_file.write(json.dumps(epoch_log_header(cfg)) + "\n")

    try:
        for epoch in range(cfg.total_epochs):
            try:
                params = _train_epoch(cfg, epoch, params, env, rng, detector, penalty, opt,
                                      result)
            except FairServeError as e:
                e.args = (f"epoch {epoch}: {e}",) + e.args[1:]
                raise
            if log_file is not None:
                log_file.write(json.dumps(result.epochs[-1]) + "\n")
                last = epoch == cfg.total_epochs - 1
                every = cfg.checkpoint_every
                if last or (every and (epoch + 1) % every == 0):
                    path = out_dir / "checkpoints" / f"policy_{epoch + 1:05d}.txt"
                    ax.save_params(params, path)
                    result.checkpoints.append(path)
    finally:
        if log_file is not None:
            log_file.close()
    result.params = params
    return result


def _train_epoch(cfg, epoch, params, env, rng, detector, penalty, opt, result):
    trajs, records, idx = collect_epoch(ax.snapshot(params), env, cfg.T, rng, epoch)
    events = outcome_matrix(records, env.config)
    breakdown = issue_breakdown_arrays(events, idx)
    issue: IssueScoreVector = breakdown.total
    verdict, prob = None, None
    if cfg.guidance:
        prob, verdict = detector.predict(issue)
        verdict = bool(verdict)
    fair = fairness_part(issue, bool(verdict), penalty)
    assign_rewards(trajs, records, fair, penalty, env.config)
    ep_rewards = [float(t.rewards.sum()) for t in trajs]

    if cfg.algorithm == "reinforce":
        params = reinforce_update(params, trajs, cfg.gamma, cfg.lr, opt)
    else:
        params = ppo_update(params, trajs, cfg, opt)
    result.epochs.append(_epoch_record(epoch, issue, breakdown.excluded, verdict, prob,
                                       ep_rewards, events, cfg.scalar_reduction))
    return params


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
