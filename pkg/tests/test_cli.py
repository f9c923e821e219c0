import json
import os

import numpy as np
import pytest

from bamforge import load_idx, load_model
from bamforge.cli import main


def _write_config(path, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    return str(path)


def _train_config(out_dir, **train_overrides):
    train = {"strategy": "SRA", "epochs": 30, "seed": 1}
    train.update(train_overrides)
    return {
        "data": {"source": "synthetic", "count": 5, "dim_a": 16,
                 "dim_b": 16, "seed": 0},
        "train": train,
        "eval": {"output_dir": str(out_dir)},
    }


def test_gen_data_writes_idx_and_manifest(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["gen-data", "--out", str(out), "--count", "6",
                 "--rows", "4", "--cols", "4", "--seed", "2"]) == 0
    a = load_idx(str(out / "side_a.idx"))
    b = load_idx(str(out / "side_b.idx"))
    assert a.shape == (16, 6) and b.shape == (16, 6)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 2
    assert "wrote 6" in capsys.readouterr().out


def test_train_happy_path(tmp_path):
    out = tmp_path / "run"
    cfg_path = _write_config(tmp_path / "cfg.json", _train_config(out))
    assert main(["train", "--config", cfg_path]) == 0
    model = load_model(str(out / "model.bamw"))
    assert model.layer_dims[0] == 16
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,gap_b,gap_a"
    assert len(history) >= 2
    assert (out / "manifest.json").exists()


def test_train_bad_strategy_exit_2(tmp_path, capsys):
    cfg = _train_config(tmp_path / "run", strategy="MAGIC")
    cfg_path = _write_config(tmp_path / "cfg.json", cfg)
    assert main(["train", "--config", cfg_path]) == 2
    assert "strategy" in capsys.readouterr().err


def test_train_missing_field_exit_2(tmp_path, capsys):
    cfg = _train_config(tmp_path / "run")
    del cfg["data"]["count"]
    cfg_path = _write_config(tmp_path / "cfg.json", cfg)
    assert main(["train", "--config", cfg_path]) == 2
    assert "count" in capsys.readouterr().err


def test_train_numeric_failure_exit_3(tmp_path, capsys):
    cfg = _train_config(tmp_path / "run", strategy="BP", lr=1e200, epochs=5)
    cfg_path = _write_config(tmp_path / "cfg.json", cfg)
    with np.errstate(all="ignore"):
        assert main(["train", "--config", cfg_path]) == 3
    assert "non-finite" in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()


def test_retrieve_round_trip(tmp_path):
    out = tmp_path / "run"
    cfg_path = _write_config(tmp_path / "cfg.json", _train_config(out))
    assert main(["train", "--config", cfg_path]) == 0
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--count", "5",
                 "--rows", "4", "--cols", "4", "--seed", "0"]) == 0
    ret = tmp_path / "retrieved"
    assert main(["retrieve", "--model", str(out / "model.bamw"),
                 "--input", str(data / "side_a.idx"),
                 "--out", str(ret)]) == 0
    got = load_idx(str(ret / "retrieved.idx"))
    want = load_idx(str(data / "side_b.idx"))
    assert np.array_equal(got, want)
    assert (ret / "retrieved.pgm").read_bytes().startswith(b"P5")


def test_attack_report(tmp_path):
    cfg = _train_config(tmp_path / "run")
    cfg["attacks"] = [{"kind": "GN", "variance": 0.5},
                      {"kind": "FGSM", "epsilon": 1.1, "direction": "BtoA"}]
    cfg_path = _write_config(tmp_path / "cfg.json", cfg)
    assert main(["attack", "--config", cfg_path]) == 0
    lines = (tmp_path / "run" / "attack.csv").read_text().splitlines()
    assert lines[0] == "attack,direction,input_mse,output_mse,ber"
    assert lines[1].startswith("GN,AtoB,") and lines[2].startswith("FGSM,BtoA,")
    fgsm_input_mse = float(lines[2].split(",")[2])
    assert fgsm_input_mse == pytest.approx(1.21, rel=1e-4)


def test_sweep_deterministic_csv(tmp_path):
    cfg = _train_config(tmp_path / "s1")
    del cfg["train"]
    cfg["strategies"] = [{"strategy": "SRA", "epochs": 20, "seed": 1},
                         {"strategy": "BP", "lr": 1e-2, "epochs": 20, "seed": 1}]
    cfg["attacks"] = [{"kind": "FGSM", "epsilon": 0.5}]
    cfg["eval"] = {"trials": 2, "output_dir": str(tmp_path / "s1")}
    cfg_path = _write_config(tmp_path / "cfg.json", cfg)
    assert main(["sweep", "--config", cfg_path]) == 0
    first = (tmp_path / "s1" / "sweep.csv").read_bytes()
    cfg["eval"]["output_dir"] = str(tmp_path / "s2")
    cfg_path = _write_config(tmp_path / "cfg2.json", cfg)
    assert main(["sweep", "--config", cfg_path]) == 0
    assert (tmp_path / "s2" / "sweep.csv").read_bytes() == first
    header = first.decode().splitlines()[0]
    assert header.startswith("attack,strategy,direction,")


def test_thread_cap_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BAMFORGE_THREADS", "1")
    import importlib

    import bamforge.cli as cli_mod
    importlib.reload(cli_mod)
    assert os.environ["OMP_NUM_THREADS"] == "1"
