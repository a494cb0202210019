import json

import numpy as np
import pytest

from fairserve import harness
from fairserve.cli import main
from fairserve.config import parse_config
from fairserve.errors import DataError, FormatVersionError

SMALL = """
seed = 3
data.n_epochs = 120
detector.iters = 3000
train.total_epochs = 3
train.T = 10
evaluate.n_episodes = 60
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    conf = root / "small.conf"
    conf.write_text(SMALL)
    assert main(["gen-detector-data", "--config", str(conf), "--out", str(root / "data")]) == 0
    assert main(["train-detector", str(root / "data/dataset.jsonl"), "--config", str(conf),
                 "--out", str(root / "det")]) == 0
    for name, guided in (("a", "true"), ("b", "false")):
        assert main(["train", "--config", str(conf), "--out", str(root / name),
                     "--guidance", guided, "--detector", str(root / "det/detector.txt")]) == 0
    return root, conf


def test_artifacts_written(workspace):
    root, _ = workspace
    header, epochs = harness.load_dataset(root / "data/dataset.jsonl")
    assert header["format"] == "fairserve-dataset" and len(epochs) == 120
    metrics = json.loads((root / "det/detector_metrics.json").read_text())
    assert 0.0 <= metrics["heldout_accuracy"] <= 1.0
    _, log = harness.read_epoch_log(root / "a")
    assert len(log) == 3 and all(e["detector_verdict"] is not None for e in log)
    assert (root / "a/config.txt").exists()
    assert list((root / "a/checkpoints").iterdir())


def test_dataset_generation_byte_identical(workspace, tmp_path):
    root, conf = workspace
    assert main(["gen-detector-data", "--config", str(conf), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "dataset.jsonl").read_bytes() == \
        (root / "data/dataset.jsonl").read_bytes()


def test_evaluate_policy_checkpoint(workspace):
    root, conf = workspace
    ckpt = sorted((root / "a/checkpoints").iterdir())[-1]
    out = root / "eval"
    assert main(["evaluate", "--config", str(conf), "--policy", str(ckpt), "--out", str(out),
                 "--detector", str(root / "det/detector.txt")]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["issue_vector"]) == 4
    assert len(harness.read_csv(out / "episodes.csv", "fairserve-episode-series")) == 60


def test_evaluate_scripted_fair(tmp_path):
    cfg = parse_config(SMALL)
    report = harness.evaluate(cfg, "scripted:fair", tmp_path)
    assert report["scalar"] == 0.0 and report["ignore_rate"] == 0.0


def test_evaluate_ignore_group_sets_willingness(tmp_path):
    cfg = parse_config(SMALL)
    report = harness.evaluate(cfg, "scripted:ignore:race=Black", tmp_path, n_episodes=400)
    rows = {r["group"]: r for r in harness.read_csv(tmp_path / "per_group.csv",
                                                     "fairserve-groups")}
    assert float(rows["race=Black"]["willingness"]) == 1.0
    assert report["issue_vector"][0] > 0


def test_compare_percent_oracle():
    log_a = [{"epoch": i, "scalar": s, "issue_vector": [s] * 4, "detector_verdict": False}
             for i, s in enumerate([0.1, 0.2, 0.3])]
    log_b = [{"epoch": i, "scalar": s, "issue_vector": [s] * 4, "detector_verdict": v}
             for i, (s, v) in enumerate([(0.4, True), (0.4, False), (0.4, True)])]
    summary, rows = harness.compare_logs(log_a, log_b)
    # (0.2 - 0.4) / 0.4 = -50 %
    assert summary["percent_difference"] == pytest.approx(-50.0)
    assert summary["flagged_a"] == 0 and summary["flagged_b"] == 2
    assert len(rows) == 3


def test_compare_self_is_zero(workspace, tmp_path):
    root, _ = workspace
    s = harness.compare(root / "a", root / "a", tmp_path)
    assert s["mean_scalar_difference"] == 0.0
    assert (tmp_path / "comparison.csv").exists()


def test_compare_length_mismatch():
    with pytest.raises(DataError):
        harness.compare_logs([{"epoch": 0, "scalar": 0.1}], [])


def test_jsonl_version_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text(json.dumps({"format": "fairserve-dataset", "version": 2}) + "\n")
    with pytest.raises(FormatVersionError):
        harness.load_dataset(p)


def test_csv_version_rejected(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("# fairserve-groups v3\ngroup\n")
    with pytest.raises(FormatVersionError):
        harness.read_csv(p, "fairserve-groups")


def test_summarize_pairs():
    outs = [harness.PairOutcome(0, 0.2, 0.1, 5, 2), harness.PairOutcome(1, 0.2, 0.3, 1, 1)]
    s = harness.summarize_pairs(outs)
    assert s["guided_lower"] == 1 and s["guided_fewer_flagged"] == 1
    assert s["pooled_reduction"] == pytest.approx(0.0)


def test_paired_runs_smoke(workspace):
    root, _ = workspace
    from fairserve.detector import load_detector
    cfg = parse_config(SMALL)
    outs = harness.paired_runs(cfg, load_detector(root / "det/detector.txt"), [0, 1], tail=2)
    assert [o.seed for o in outs] == [0, 1]
    assert all(np.isfinite(o.guided_tail) for o in outs)


@pytest.mark.parametrize("argv,code", [
    (["train", "--guidance", "true", "--epochs", "1"], 2),
    (["evaluate", "--policy", "scripted:unknown"], 2),
    (["evaluate", "--policy", "/no/such/checkpoint.txt"], 3),
])
def test_cli_exit_codes(argv, code, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == code


def test_cli_unknown_config_key(tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("train.gama = 0.9\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_compare_mismatch(workspace, tmp_path):
    root, conf = workspace
    assert main(["train", "--config", str(conf), "--epochs", "2",
                 "--out", str(tmp_path / "short")]) == 0
    assert main(["compare", str(root / "a"), str(tmp_path / "short"),
                 "--out", str(tmp_path / "cmp")]) == 3
