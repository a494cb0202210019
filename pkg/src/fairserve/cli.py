"""Command-line entry point: ``fairserve <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .config import RunConfig, load_config, with_overrides
from .detector import load_detector
from .errors import FairServeError

log = logging.getLogger("fairserve")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairserve", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", type=Path, help="flat key = value config file")
        sp.add_argument("--seed", type=_seed, help="overrides the config seed")
        sp.add_argument("--out", type=Path, default=Path(out_default), help="output directory")

    sp = sub.add_parser("gen-detector-data", help="simulate labeled epochs for the detector")
    common(sp, "runs/data")

    sp = sub.add_parser("train-detector", help="fit PCA + logistic detector on a dataset")
    common(sp, "runs/detector")
    sp.add_argument("dataset", type=Path, help="dataset.jsonl from gen-detector-data")

    sp = sub.add_parser("train", help="train a policy, optionally with detector guidance")
    common(sp, "runs/train")
    sp.add_argument("--detector", type=Path, help="detector checkpoint (needed for guidance)")
    sp.add_argument("--guidance", type=_bool)
    sp.add_argument("--algorithm", choices=("reinforce", "ppo"))
    sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("evaluate", help="roll out a frozen policy and write a report")
    common(sp, "runs/eval")
    sp.add_argument("--policy", required=True,
                    help="policy checkpoint, 'scripted:fair' or 'scripted:ignore:<group>'")
    sp.add_argument("--detector", type=Path)
    sp.add_argument("--episodes", type=int, help="defaults to evaluate.n_episodes")

    sp = sub.add_parser("compare", help="paired comparison of two training runs")
    sp.add_argument("run_a", type=Path)
    sp.add_argument("run_b", type=Path)
    sp.add_argument("--detector", type=Path, help="re-score both logs with this detector")
    sp.add_argument("--out", type=Path, default=Path("runs/compare"))

    sp = sub.add_parser("experiment",
                        help="detector data, detector fit and seed-paired guided/unguided runs")
    common(sp, "runs/experiment")
    sp.add_argument("--seeds", type=int, default=5, help="number of seed pairs")
    sp.add_argument("--epochs", type=int)
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return with_overrides(cfg, seed=args.seed, guidance=getattr(args, "guidance", None),
                          algorithm=getattr(args, "algorithm", None),
                          epochs=getattr(args, "epochs", None))


def run(args) -> None:
    if args.command == "compare":
        summary = harness.compare(args.run_a, args.run_b, args.out, args.detector)
        print(json.dumps(summary, indent=2))
        return
    cfg = _config(args)
    if args.command == "gen-detector-data":
        path = harness.gen_detector_data(cfg, args.out)
        print(f"wrote {cfg.data.n_epochs} labeled epochs to {path}")
    elif args.command == "train-detector":
        fit = harness.train_detector(args.dataset, cfg, args.out)
        print(f"held-out accuracy {fit.heldout_accuracy:.4f} "
              f"(threshold rule {fit.heldout_rule_accuracy:.4f}) on {fit.n_heldout} epochs")
        print(f"wrote {args.out / 'detector.txt'}")
    elif args.command == "train":
        result = harness.train_run(cfg, args.out, args.detector)
        last = result.epochs[-1] if result.epochs else None
        print(f"trained {len(result.epochs)} epochs into {args.out}"
              + (f"; final scalar {last['scalar']:.4f}" if last else ""))
    elif args.command == "evaluate":
        report = harness.evaluate(cfg, args.policy, args.out, args.detector, args.episodes)
        print(f"issue vector {report['issue_vector']} scalar {report['scalar']:.4f}; "
              f"report in {args.out / 'report.json'}")
    elif args.command == "experiment":
        data = harness.gen_detector_data(cfg, args.out / "data")
        fit = harness.train_detector(data, cfg, args.out / "detector")
        print(f"detector held-out accuracy {fit.heldout_accuracy:.4f}")
        det = load_detector(args.out / "detector" / "detector.txt")
        seeds = [cfg.seed + i for i in range(args.seeds)]
        outcomes = harness.paired_runs(cfg, det, seeds, out_dir=args.out / "runs")
        for o in outcomes:
            print(f"seed {o.seed}: unguided {o.unguided_tail:.4f} ({o.unguided_flagged} flagged)"
                  f"  guided {o.guided_tail:.4f} ({o.guided_flagged} flagged)")
        summary = harness.summarize_pairs(outcomes)
        (args.out / "summary.json").write_text(json.dumps(
            {"format": "fairserve-experiment", "version": harness.FORMAT_VERSION, **summary,
             "pairs_detail": [o.__dict__ for o in outcomes]}, indent=2) + "\n")
        print(json.dumps(summary))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except FairServeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0
