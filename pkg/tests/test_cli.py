import os

import pytest
import yaml

from clens.cli import main

TINY_CONFIG = {
    "synth": {"sizes": {"train": 80, "id": 100, "ood_shift": 90}},
    "trainer": {"epochs": 6, "arch_seeds": [0, 1], "archs": ["6"], "batch_size": 32},
}


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with open("config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(TINY_CONFIG, fh)
    return tmp_path


def run_cli(*argv):
    return main(list(argv))


def test_gen_train_score_chain(workdir, capsys):
    assert run_cli("gen", "--preset", "mixture", "--seed", "5", "--out", "data",
                   "--config", "config.yaml") == 0
    assert os.path.isdir("data/train") and os.path.isdir("data/ood_shift")
    assert run_cli("train", "--data", "data", "--out", "runs",
                   "--config", "config.yaml") == 0
    assert os.path.isfile("runs/manifest.yaml")
    assert run_cli("score", "--manifest", "runs/manifest.yaml", "--out", "analysis",
                   "--tail-start", "3", "--epoch", "1") == 0
    out = capsys.readouterr().out
    assert "mean_confusion" in out
    assert os.path.isfile("analysis/scores_id.csv")
    header = [ln for ln in open("analysis/scores_id.csv") if not ln.startswith("#")][0]
    assert header.strip() == "sample_index,confusion,entropy_std,s_1"


def test_colored2_preset_writes_three_bundles(workdir):
    cfg = {"synth": {"sizes": {"train": 60, "ood_all_green": 40, "ood_all_red": 40}}}
    with open("c2.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh)
    assert run_cli("gen", "--preset", "colored2", "--seed", "7", "--out", "d",
                   "--config", "c2.yaml") == 0
    assert sorted(os.listdir("d")) == [
        "datasets.yaml", "ood_all_green", "ood_all_red", "train",
    ]


def test_unknown_flag_exits_4(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("score", "--nonsense")
    assert exc.value.code == 4
    assert "usage" in capsys.readouterr().err


def test_unknown_preset_exits_4(workdir):
    assert run_cli("gen", "--preset", "nope", "--out", "x") == 4


def test_missing_manifest_exits_3(workdir):
    assert run_cli("score", "--manifest", "ghost.yaml", "--out", "x") == 3


def test_validation_failure_exits_2(workdir):
    run_cli("gen", "--out", "data", "--config", "config.yaml")
    run_cli("train", "--data", "data", "--out", "runs", "--config", "config.yaml")
    code = run_cli("score", "--manifest", "runs/manifest.yaml", "--out", "x",
                   "--window", "2:99")
    assert code == 2


def test_rerun_is_byte_identical(workdir):
    run_cli("gen", "--out", "data", "--config", "config.yaml")
    run_cli("train", "--data", "data", "--out", "runs", "--config", "config.yaml")
    args = ("partition", "--manifest", "runs/manifest.yaml", "--out", "analysis",
            "--bins", "11")
    assert run_cli(*args) == 0
    first = open("analysis/ratios.csv").read()
    assert run_cli(*args) == 0
    assert open("analysis/ratios.csv").read() == first


def test_full_chain_report(workdir, capsys):
    run_cli("gen", "--out", "data", "--config", "config.yaml")
    run_cli("train", "--data", "data", "--out", "runs", "--config", "config.yaml")
    run_cli("score", "--manifest", "runs/manifest.yaml", "--out", "analysis",
            "--tail-start", "3")
    run_cli("partition", "--manifest", "runs/manifest.yaml", "--out", "analysis")
    run_cli("predict", "--manifest", "runs/manifest.yaml", "--out", "analysis")
    run_cli("phases", "--manifest", "runs/manifest.yaml", "--out", "analysis")
    assert run_cli("report", "--out", "analysis") == 0
    out = capsys.readouterr().out
    assert "report.yaml" in out
    doc = yaml.safe_load(open("analysis/report.yaml"))
    assert "scores" in doc["sections"]
    assert "predictions" in doc["sections"]

    assert run_cli("report", "--out", "analysis", "--format", "csv") == 0
    assert os.path.isfile("analysis/report.csv")


def test_lock_file_blocks_concurrent_use(workdir):
    run_cli("gen", "--out", "data", "--config", "config.yaml")
    os.makedirs("locked", exist_ok=True)
    open("locked/.clens.lock", "w").close()
    code = run_cli("gen", "--out", "locked", "--config", "config.yaml")
    assert code == 4
