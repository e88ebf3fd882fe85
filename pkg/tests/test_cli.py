import json
from dataclasses import replace

import pytest

from daeconf import cli
from daeconf.config import (ConfigError, ExperimentConfig, OUTPUT_ENV, emit, load, parse,
                            with_overrides)

FAST = {
    "rings": ["--hidden", "8,8", "--steps", "40"],
    "fool": ["--hidden", "16", "--epochs", "1", "--max-train", "200", "--fool-trials", "1",
             "--fool-updates", "15", "--fool-eta", "0.001"],
    "openset": ["--hidden", "8", "--epochs", "1", "--max-train", "100", "--known-counts", "1,2",
                "--repetitions", "2", "--variant", "plain"],
    "oneclass": ["--hidden", "8", "--epochs", "1", "--max-train", "100", "--classes", "0,1",
                 "--variant", "cool"],
    "train": ["--hidden", "8", "--epochs", "1", "--max-train", "100"],
}


def run_cli(task, tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main([task, "--output-dir", str(out), *FAST.get(task, []), *extra])
    return code, out


def csvs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_config_round_trip():
    cfg = ExperimentConfig(task="openset", hidden=(30, 20), alpha=2.5, known_counts=(1, 3),
                           use_gate=False, data_dir="/tmp/x", lambda_l2=0.1)
    assert parse(emit(cfg)) == cfg
    assert parse(emit(ExperimentConfig())) == ExperimentConfig()
    resolved = cfg.resolved()
    assert parse(emit(resolved)) == resolved


def test_config_defaults_by_task():
    assert ExperimentConfig(task="rings").resolved().alpha == 40.0
    assert ExperimentConfig(task="openset").resolved().threshold == 0.99
    assert ExperimentConfig(task="oneclass", variant="dae").resolved().sigma == 0.3
    assert ExperimentConfig(task="fool", alpha=7.0).resolved().alpha == 7.0


def test_config_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="alpah: unknown key"):
        parse("alpah = 3\n")
    with pytest.raises(ConfigError, match="given twice"):
        parse("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse("seed = 1\nnonsense\n")


@pytest.mark.parametrize("text,field", [("alpha = -1", "alpha"), ("variant = svm", "variant"),
                                        ("threshold = 1.5", "threshold"),
                                        ("seed = abc", "seed"), ("hidden = 0", "hidden"),
                                        ("known_counts = 11", "known_counts"),
                                        ("seed = none", "seed")])
def test_config_field_errors(text, field):
    with pytest.raises(ConfigError) as info:
        parse(text)
    assert info.value.field == field


def test_config_comments_and_overrides(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\ntask = fool  # trailing\nseed = 4\nalpha = none\n")
    cfg = load(p)
    assert cfg.seed == 4 and cfg.alpha is None
    assert with_overrides(cfg, {"seed": "9"}).seed == 9
    args_cfg = cli.config_from_args(["openset", "--config", str(p), "--seed", "11",
                                     "--lambda-l2", "0.5"])
    assert (args_cfg.task, args_cfg.seed, args_cfg.lambda_l2) == ("openset", 11, 0.5)


def test_digest_ignores_output_location():
    a = ExperimentConfig(output_dir="a", workers=1)
    b = ExperimentConfig(output_dir="b", workers=4)
    assert a.digest() == b.digest() != replace(a, seed=1).digest()


def test_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = ExperimentConfig(task="rings")
    assert cfg.output_path().parent == tmp_path
    assert cfg.output_path().name.startswith("rings-dae-")


def test_invalid_config_exit_code(tmp_path, capsys):
    assert cli.main(["fool", "--alpha", "-2", "--output-dir", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err


def test_missing_dataset_exit_code(tmp_path, capsys):
    code, _ = run_cli("train", tmp_path, "t", "--data-dir", str(tmp_path / "absent"))
    assert code == 3
    assert str(tmp_path / "absent") in capsys.readouterr().err


def test_eval_without_checkpoint(tmp_path):
    assert cli.main(["eval", "--output-dir", str(tmp_path)]) == 2


def test_rings_outputs_and_manifest(tmp_path):
    code, out = run_cli("rings", tmp_path, "a")
    assert code == 0
    for name in ("rings_summary.csv", "loss.csv", "map.csv", "model.ckpt", "map_score.svg",
                 "map_gate.svg", "map_distance.svg", "map_label.svg", "config.txt"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("task", "seed", "config_sha256", "versions", "wall_time_s", "artifacts"):
        assert key in manifest
    cfg = parse((out / "config.txt").read_text())
    assert manifest["config_sha256"] == cfg.digest()
    code, out2 = run_cli("confmap", tmp_path, "b", "--checkpoint", str(out / "model.ckpt"))
    assert code == 0
    assert (out2 / "map.csv").read_bytes() == (out / "map.csv").read_bytes()


@pytest.mark.parametrize("task", ["rings", "fool", "openset", "oneclass"])
def test_outputs_identical_across_workers_and_reruns(task, tmp_path):
    _, a = run_cli(task, tmp_path, "a", "--workers", "1")
    _, b = run_cli(task, tmp_path, "b", "--workers", "2")
    _, c = run_cli(task, tmp_path, "c", "--workers", "1")
    assert csvs(a) and csvs(a) == csvs(b) == csvs(c)


def test_train_then_eval(tmp_path):
    code, out = run_cli("train", tmp_path, "t")
    assert code == 0
    code, ev = run_cli("eval", tmp_path, "e", "--checkpoint", str(out / "model.ckpt"))
    assert code == 0
    assert (ev / "accuracy.csv").read_bytes() == (out / "accuracy.csv").read_bytes()
    lines = (ev / "accuracy.csv").read_text().splitlines()
    assert lines[0] == "variant,threshold,accuracy" and len(lines) == 5


def test_gradcheck_task(tmp_path, capsys):
    code = cli.main(["gradcheck", "--gradcheck-instances", "1", "--output-dir", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "gradcheck.csv").read_text().splitlines()
    assert len(rows) == 1 + 7 + 5
    assert "max_rel_error" in capsys.readouterr().out
