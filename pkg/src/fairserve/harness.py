"""Experiment orchestration behind the command-line interface.

Every file written here starts with a format tag and version. JSON-lines
files carry them in a header object on the first line; CSV files in a
leading ``# <format> v<version>`` comment; readers refuse anything else.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import approximator as ax
from .config import RunConfig
from .detector import (
    Detector,
    LabeledEpoch,
    fit_detector,
    load_detector,
    predict_batch,
    save_detector,
)
from .detector_data import generate
from .environment import Environment, outcome_matrix
from .errors import ConfigError, DataError, FormatVersionError
from .learner import EPOCH_LOG_FORMAT, TrainResult, policy_of, train
from .metrics import IssueScoreVector, issue_breakdown_arrays, total_issue_scalar
from .population import enumerate_groups, group_by_label, membership_matrix
from .scripted import fair_policy, ignore_group_policy

DATASET_FORMAT = "fairserve-dataset"
EPISODE_LOG_FORMAT = "fairserve-episodes"
REPORT_FORMAT = "fairserve-report"
GROUPS_CSV_FORMAT = "fairserve-groups"
EPISODES_CSV_FORMAT = "fairserve-episode-series"
COMPARE_FORMAT = "fairserve-compare"
FORMAT_VERSION = 1


# ---------------------------------------------------------------- file formats

def write_jsonl(path, fmt: str, records, **meta) -> None:
    header = {"format": fmt, "version": FORMAT_VERSION, **meta}
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for r in records:
            f.write(json.dumps(r) + "\n")


def read_jsonl(path, fmt: str) -> tuple[dict, list[dict]]:
    """(header, records) of a versioned JSON-lines file."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    try:
        header = json.loads(lines[0]) if lines else {}
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed JSON line ({e})") from None
    if header.get("format") != fmt or header.get("version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: expected {fmt} v{FORMAT_VERSION}, found "
            f"{header.get('format')!r} v{header.get('version')!r}")
    return header, records


def write_csv(path, fmt: str, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# {fmt} v{FORMAT_VERSION}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def read_csv(path, fmt: str) -> list[dict]:
    with open(path, newline="") as f:
        head = f.readline().strip()
        if head != f"# {fmt} v{FORMAT_VERSION}":
            raise FormatVersionError(f"{path}: expected '# {fmt} v{FORMAT_VERSION}', "
                                     f"found {head!r}")
        return list(csv.DictReader(f))


def save_dataset(path, epochs: list[LabeledEpoch], **meta) -> None:
    records = ({"issue_vector": e.issue_vector.as_list(), "label": e.label} for e in epochs)
    write_jsonl(path, DATASET_FORMAT, records, **meta)


def load_dataset(path) -> tuple[dict, list[LabeledEpoch]]:
    header, records = read_jsonl(path, DATASET_FORMAT)
    try:
        epochs = [LabeledEpoch(IssueScoreVector.from_seq(r["issue_vector"]), int(r["label"]))
                  for r in records]
    except (KeyError, ValueError, TypeError) as e:
        raise DataError(f"{path}: bad dataset record ({e})") from None
    return header, epochs


def read_epoch_log(run_dir) -> tuple[dict, list[dict]]:
    return read_jsonl(Path(run_dir) / "epochs.jsonl", EPOCH_LOG_FORMAT)


def make_env(cfg: RunConfig) -> Environment:
    return Environment(cfg.env, cfg.population or None)


# offset keeps harness streams apart from the two children train() spawns
_STREAM_BASE = 100


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(seed, spawn_key=(_STREAM_BASE + stream,))
    return np.random.default_rng(seq)


def _prepare(out_dir, cfg: RunConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


# ---------------------------------------------------------------- commands

def gen_detector_data(cfg: RunConfig, out_dir) -> Path:
    """Scripted epochs labelled by the oracle, written as dataset.jsonl."""
    out = _prepare(out_dir, cfg)
    epochs = generate(make_env(cfg), cfg.data, _rng(cfg.seed))
    path = out / "dataset.jsonl"
    save_dataset(path, epochs, threshold=cfg.data.threshold, noise_rate=cfg.data.noise_rate,
                 reduction=cfg.data.reduction, seed=cfg.seed)
    return path


@dataclass(frozen=True)
class DetectorFit:
    detector: Detector
    heldout_accuracy: float
    heldout_rule_accuracy: float  # against the noise-free threshold rule
    n_train: int
    n_heldout: int


def fit_from_epochs(epochs: list[LabeledEpoch], cfg: RunConfig, threshold: float,
                    reduction: str = "mean") -> DetectorFit:
    """Fit on a seeded split and score the held-out part.

    The held-out set is scored both against its stored (possibly noisy)
    labels and against the exact threshold rule.
    """
    if len(epochs) < 10:
        raise DataError(f"need at least 10 labeled epochs, got {len(epochs)}")
    x = np.array([e.issue_vector.as_array() for e in epochs])
    y = np.array([e.label for e in epochs])
    perm = _rng(cfg.seed, 1).permutation(len(x))
    n_hold = max(1, int(round(cfg.detector.holdout * len(x))))
    test, fit_idx = perm[:n_hold], perm[n_hold:]
    det = fit_detector(x[fit_idx], y[fit_idx], cfg.detector.lr, cfg.detector.iters,
                       cfg.detector.threshold)
    pred = predict_batch(det.pca, det.model, x[test]) > det.model.threshold
    rule = np.array([total_issue_scalar(e.issue_vector, reduction) > threshold
                     for e in (epochs[i] for i in test)])
    return DetectorFit(det, float(np.mean(pred == y[test])), float(np.mean(pred == rule)),
                       len(fit_idx), len(test))


def train_detector(dataset_path, cfg: RunConfig, out_dir) -> DetectorFit:
    header, epochs = load_dataset(dataset_path)
    out = _prepare(out_dir, cfg)
    fit = fit_from_epochs(epochs, cfg, float(header.get("threshold", cfg.data.threshold)),
                          header.get("reduction", cfg.data.reduction))
    save_detector(fit.detector, out / "detector.txt")
    summary = {"format": "fairserve-detector-metrics", "version": FORMAT_VERSION,
               "dataset": str(dataset_path), "n_train": fit.n_train,
               "n_heldout": fit.n_heldout, "heldout_accuracy": fit.heldout_accuracy,
               "heldout_rule_accuracy": fit.heldout_rule_accuracy}
    (out / "detector_metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    return fit


def train_run(cfg: RunConfig, out_dir, detector_path=None) -> TrainResult:
    tcfg = cfg.train_config
    if tcfg.guidance and detector_path is None:
        raise ConfigError("guidance is on but no detector checkpoint was given (--detector)")
    detector = load_detector(detector_path) if detector_path is not None else None
    out = _prepare(out_dir, cfg)
    return train(tcfg, detector, make_env(cfg), cfg.shaping, out)


def resolve_policy(policy_spec: str, env: Environment):
    """A checkpoint path, 'scripted:fair' or 'scripted:ignore:<group>'."""
    if policy_spec == "scripted:fair":
        return fair_policy(env.config)
    if policy_spec.startswith("scripted:ignore:"):
        try:
            group = group_by_label(policy_spec.split(":", 2)[2])
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return ignore_group_policy(env.config, group)
    if policy_spec.startswith("scripted:"):
        raise ConfigError(f"unknown scripted policy {policy_spec!r}")
    return policy_of(ax.load_params(policy_spec))


def _mean_or_none(values) -> float | None:
    return math.fsum(values) / len(values) if values else None


def evaluate(cfg: RunConfig, policy_spec: str, out_dir, detector_path=None,
             n_episodes: int | None = None) -> dict:
    """Roll out a frozen policy and write report.json plus CSV series."""
    n = n_episodes if n_episodes is not None else cfg.evaluate.n_episodes
    if n < 30:
        raise ConfigError("evaluation needs at least 30 episodes")
    env = make_env(cfg)
    policy = resolve_policy(policy_spec, env)
    detector = load_detector(detector_path) if detector_path is not None else None
    out = _prepare(out_dir, cfg)

    roll = env.run_batch(policy, _rng(cfg.seed, 2), n)
    records = roll.records
    events = outcome_matrix(records, env.config)
    groups = enumerate_groups()
    breakdown = issue_breakdown_arrays(events, roll.identity_indices, groups)
    issue = breakdown.total
    served = [r for r in records if r.responded]
    report = {
        "format": REPORT_FORMAT, "version": FORMAT_VERSION,
        "policy": policy_spec, "seed": cfg.seed, "n_episodes": n,
        "issue_vector": issue.as_list(),
        "scalar": total_issue_scalar(issue, cfg.train.scalar_reduction),
        "mean_response_distance": _mean_or_none([r.response_distance_m for r in served]),
        "mean_response_time": _mean_or_none([float(r.response_step) for r in served]),
        "ignore_rate": float(events[:, 0].mean()),
        "event_rates": dict(zip(("ignored", "inappropriate", "late", "risky"),
                                events.mean(axis=0).tolist())),
        "excluded_groups": breakdown.excluded,
        "per_group": {k: v.as_list() for k, v in breakdown.per_group.items()},
    }
    if detector is not None:
        prob, verdict = detector.predict(issue)
        report.update(detector_probability=prob, detector_verdict=bool(verdict))
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")

    members = membership_matrix(roll.identity_indices, groups).sum(axis=0)
    write_csv(out / "per_group.csv", GROUPS_CSV_FORMAT,
              ["group", "members", "willingness", "quality", "priority", "risk"],
              [[g.label, int(m), *breakdown.per_group[g.label].as_list()]
               for g, m in zip(groups, members) if g.label in breakdown.per_group])
    write_csv(out / "episodes.csv", EPISODES_CSV_FORMAT,
              ["episode_index", "responded", "response_step", "response_distance",
               "min_distance", "ignored", "inappropriate", "late", "risky"],
              [[r.episode_index, int(r.responded),
                "" if r.response_step is None else r.response_step,
                "" if r.response_distance_m is None else repr(r.response_distance_m),
                repr(r.min_distance_m), *(int(b) for b in ev)]
               for r, ev in zip(records, events)])
    write_jsonl(out / "episodes.jsonl", EPISODE_LOG_FORMAT, (r.to_dict() for r in records))
    return report


def _flags(log: list[dict], detector: Detector | None) -> list[bool | None]:
    if detector is not None:
        p = predict_batch(detector.pca, detector.model,
                          np.array([e["issue_vector"] for e in log]))
        return (p > detector.model.threshold).tolist()
    return [e.get("detector_verdict") for e in log]


def compare_logs(log_a: list[dict], log_b: list[dict],
                 detector: Detector | None = None) -> tuple[dict, list[list]]:
    """Summary and per-epoch rows for two runs of equal length.

    Without a detector the logged verdicts are used; a run trained without
    guidance has none, and its flagged count is reported as null.
    """
    if len(log_a) != len(log_b):
        raise DataError(f"epoch counts differ: {len(log_a)} vs {len(log_b)}")
    if not log_a:
        raise DataError("empty epoch logs")
    sa = [e["scalar"] for e in log_a]
    sb = [e["scalar"] for e in log_b]
    fa, fb = _flags(log_a, detector), _flags(log_b, detector)
    mean_a, mean_b = math.fsum(sa) / len(sa), math.fsum(sb) / len(sb)
    diff = mean_a - mean_b

    def count(flags):
        return None if any(f is None for f in flags) else int(sum(flags))

    summary = {
        "format": COMPARE_FORMAT, "version": FORMAT_VERSION,
        "epochs": len(sa),
        "flagged_a": count(fa), "flagged_b": count(fb),
        "mean_scalar_a": mean_a, "mean_scalar_b": mean_b,
        "mean_scalar_difference": diff,
        "percent_difference": diff / mean_b * 100.0 if mean_b != 0 else None,
    }
    rows = [[e["epoch"], a, b, a - b, "" if x is None else int(x), "" if y is None else int(y)]
            for e, a, b, x, y in zip(log_a, sa, sb, fa, fb)]
    return summary, rows


def compare(run_a, run_b, out_dir, detector_path=None) -> dict:
    _, log_a = read_epoch_log(run_a)
    _, log_b = read_epoch_log(run_b)
    detector = load_detector(detector_path) if detector_path is not None else None
    summary, rows = compare_logs(log_a, log_b, detector)
    summary.update(run_a=str(run_a), run_b=str(run_b))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_csv(out / "comparison.csv", COMPARE_FORMAT,
              ["epoch", "scalar_a", "scalar_b", "difference", "flagged_a", "flagged_b"], rows)
    return summary


# ---------------------------------------------------------------- paired experiment

@dataclass(frozen=True)
class PairOutcome:
    seed: int
    unguided_tail: float  # mean scalar over the final `tail` epochs
    guided_tail: float
    unguided_flagged: int
    guided_flagged: int


def paired_runs(cfg: RunConfig, detector: Detector, seeds, tail: int = 100,
                out_dir=None) -> list[PairOutcome]:
    """Train guided and unguided runs per seed and score both with `detector`.

    Flagged counts apply the detector to every epoch of both runs, so the
    unguided run is judged by the same yardstick.
    """
    env = make_env(cfg)
    outcomes = []
    for seed in seeds:
        logs = []
        for guided in (False, True):
            tcfg = replace(cfg.train, seed=seed, guidance=guided)
            run_dir = None
            if out_dir is not None:
                run_dir = Path(out_dir) / f"seed{seed}_{'guided' if guided else 'unguided'}"
                _prepare(run_dir, replace(cfg, seed=seed, train=tcfg))
            res = train(tcfg, detector if guided else None, env, cfg.shaping, run_dir)
            logs.append(res.epochs)
        tails = [float(np.mean([e["scalar"] for e in log[-tail:]])) for log in logs]
        flags = [int(sum(_flags(log, detector))) for log in logs]
        outcomes.append(PairOutcome(seed, tails[0], tails[1], flags[0], flags[1]))
    return outcomes


def summarize_pairs(outcomes: list[PairOutcome]) -> dict:
    ung = math.fsum(o.unguided_tail for o in outcomes)
    gui = math.fsum(o.guided_tail for o in outcomes)
    return {
        "pairs": len(outcomes),
        "guided_lower": sum(o.guided_tail < o.unguided_tail for o in outcomes),
        "guided_fewer_flagged": sum(o.guided_flagged < o.unguided_flagged for o in outcomes),
        "pooled_reduction": (ung - gui) / ung if ung > 0 else 0.0,
    }
