import csv
import json

import numpy as np
import pytest

from jmsc import config
from jmsc.cli import run
from jmsc.pipeline import ABLATION_HEADER, ablation_cells

from conftest import tiny_config


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(tiny_config().to_json())
    return path


def test_generate_exit_zero(tmp_path, cfg_file):
    assert run(["generate", "--config", str(cfg_file), "--out", str(tmp_path / "data")]) == 0
    m = json.loads((tmp_path / "data" / "manifest.json").read_text())
    cfg = tiny_config()
    assert m["n_windows"] == cfg.scenario.n_sequences * (cfg.scenario.seq_len - cfg.scenario.T + 1)


def test_evaluate_without_checkpoint(tmp_path, cfg_file, capsys):
    assert run(["evaluate", "--config", str(cfg_file), "--data", str(tmp_path)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_missing_checkpoint_file(tmp_path, cfg_file, capsys):
    assert run(["evaluate", "--config", str(cfg_file), "--checkpoint", str(tmp_path / "nope.jmsc")]) == 2
    assert "nope.jmsc" in capsys.readouterr().err


def test_missing_dataset(tmp_path, cfg_file):
    assert run(["pretrain", "--config", str(cfg_file), "--data", str(tmp_path / "empty"), "--out", str(tmp_path)]) == 2


def test_invalid_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": {"T": 12}}))
    assert run(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("{not json")
    assert run(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert run(["generate", "--config", str(tmp_path / "absent.json")]) == 2


def test_shipped_configs():
    default = config.load("configs/default.json")
    assert default == config.RunConfig()
    assert json.loads(open("configs/schema.json").read()) == config.json_schema()
    config.load("configs/desk.json")


def test_full_pipeline(tmp_path, cfg_file, tiny_data):
    base = ["--config", str(cfg_file), "--data", str(tiny_data), "--deterministic"]
    run_dir = tmp_path / "run"
    assert run(["pretrain", *base, "--out", str(run_dir)]) == 0
    curve = read_csv(run_dir / "pretrain_loss.csv")
    assert curve[0] == ["epoch", "mean_loss", "lr", "beta"] and len(curve) == 1 + tiny_config().pretrain.epochs
    assert (run_dir / "pretrain_loss.png").stat().st_size > 0
    assert (run_dir / "pretrain_loss.csv").read_text().startswith("# config_hash=")
    ckpt = run_dir / "backbone.jmsc"
    assert run(["train-heads", *base, "--checkpoint", str(ckpt), "--out", str(run_dir)]) == 0
    for name in ("localization", "beam", "rssi"):
        assert (run_dir / f"head_{name}.jmsc").exists()
    assert run(["evaluate", *base, "--checkpoint", str(ckpt), "--out", str(run_dir / "eval")]) == 0
    report = json.loads((run_dir / "eval" / "report.json").read_text())
    assert report["rmse"] >= report["mae"] and report["acc1"] <= report["acc3"]
    assert report["config_hash"] == tiny_config().hash() and "build" in report and "seeds" in report
    horizon = read_csv(run_dir / "eval" / "horizon.csv")
    assert horizon[0] == "step,mean_d_loc,acc1,acc3,mean_l1_rsrp_diff,rmse,mae".split(",")
    assert len(horizon) == 1 + tiny_config().scenario.t_pred
    for png in ("horizon.png", "ade_cdf.png", "mismatch_hist.png"):
        assert (run_dir / "eval" / png).exists()
    cdf = np.array(read_csv(run_dir / "eval" / "ade_cdf.csv")[1:], dtype=float)
    assert np.all(np.diff(cdf[:, 0]) >= 0) and cdf[-1, 1] == 1.0


def test_untrained_flag(tmp_path, cfg_file, tiny_data):
    out = tmp_path / "untrained"
    assert run(["train-heads", "--config", str(cfg_file), "--data", str(tiny_data), "--untrained", "--out", str(out)]) == 0
    ckpt = out / "backbone_untrained.jmsc"
    assert run(["evaluate", "--config", str(cfg_file), "--data", str(tiny_data), "--checkpoint", str(ckpt),
                "--out", str(out / "eval")]) == 0
    assert json.loads((out / "eval" / "report.json").read_text())["flags"]["untrained_backbone"]


def test_ablation_cells_reuse_base_ratio():
    cells = ablation_cells(config.RunConfig())
    assert len(cells) == 5
    assert [c.pretrain.mask_pattern for _, c, _ in cells] == ["temporal-block", "random", "checkerboard",
                                                                "temporal-block", "temporal-block"]
    assert [c.pretrain.mask_ratio for _, c, _ in cells] == [0.5, 0.5, 0.5, 0.25, 0.75]


def test_ablate_leaves_shared_checkpoint_untouched(tmp_path, tiny_data):
    cfg = tiny_config(ablation__mask_ratios=[0.5], ablation__mask_patterns=["temporal-block"],
                      ablation__drop_sets=[["radar", "lidar"]], ablation__loc_aux_off=True)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    base = tmp_path / "base"
    assert run(["pretrain", "--config", str(path), "--data", str(tiny_data), "--out", str(base)]) == 0
    before = (base / "backbone.jmsc").read_bytes()
    out = tmp_path / "abl"
    assert run(["ablate", "--config", str(path), "--data", str(tiny_data), "--checkpoint", str(base / "backbone.jmsc"),
                "--out", str(out)]) == 0
    assert (base / "backbone.jmsc").read_bytes() == before
    rows = read_csv(out / "ablation.csv")
    assert rows[0] == ABLATION_HEADER.split(",")
    assert [r[0] for r in rows[1:]] == ["mask=temporal-block rho=0.5", "w/o radar+lidar", "w/o loc aux"]
    assert all(np.isfinite(float(x)) for r in rows[1:] for x in r[1:])


@pytest.mark.slow
def test_ablate_mask_matrix(tmp_path, tiny_data):
    path = tmp_path / "cfg.json"
    path.write_text(tiny_config(pretrain__epochs=1, heads__epochs=1).to_json())
    out = tmp_path / "abl"
    assert run(["ablate", "--config", str(path), "--data", str(tiny_data), "--out", str(out)]) == 0
    rows = read_csv(out / "ablation.csv")
    assert rows[0] == "setting,r_rankme,r_lda,ade,fde,acc1,acc3,l1diff,rmse,mae".split(",")
    assert len(rows) == 6


def test_grad_check_command(tmp_path, capsys):
    assert run(["grad-check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS jepa_backbone" in out
    assert (tmp_path / "grad_check.txt").exists()
