import json
import os
import shutil
import subprocess
import sys

import pytest

from conftest import CONFIGS
from fpk.cli import main
from fpk.config import RunConfig, load_config, save_config
from fpk.errors import ConfigError


def small_ou(tmp_path, **extra):
    raw = json.loads((CONFIGS / "ou_solve.json").read_text())
    raw.update({"n_traj": 2000, "steps": 10, "out_dir": str(tmp_path / "out")})
    raw.update(extra)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json") if p.name != "bad_domain.json"))
def test_shipped_configs_round_trip(name, tmp_path):
    cfg = load_config(CONFIGS / name)
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg


def test_unknown_keys_rejected():
    raw = json.loads((CONFIGS / "ou_solve.json").read_text())
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({**raw, "n_trajs": 3})
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({**raw, "xi": {"norigins": 3}})


def test_domain_outside_omega_exits_2(capsys):
    assert main(["solve", "--config", str(CONFIGS / "bad_domain.json")]) == 2
    assert "domain D must be contained in omega" in capsys.readouterr().err


def test_missing_field_is_config_error(tmp_path, capsys):
    path = small_ou(tmp_path, n_traj=None)
    assert main(["solve", "--config", str(path)]) == 2


def test_solve_writes_csv_and_summary(tmp_path, capsys):
    path = small_ou(tmp_path)
    assert main(["solve", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "max |p_hat - p_exact| / stderr" in out
    csv = tmp_path / "out" / "solve.csv"
    assert csv.exists() and (tmp_path / "out" / "solve.csv.json").exists()


def test_out_priority(tmp_path, monkeypatch):
    path = small_ou(tmp_path)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "solve.csv").exists()
    monkeypatch.setenv("FPK_OUT", str(tmp_path / "env"))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "flag2")]) == 0
    assert (tmp_path / "env" / "solve.csv").exists()
    assert not (tmp_path / "flag2").exists()


def test_thread_count_does_not_change_output(tmp_path):
    path = small_ou(tmp_path)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "b"), "--threads", "8"]) == 0
    assert (tmp_path / "a" / "solve.csv").read_bytes() == (tmp_path / "b" / "solve.csv").read_bytes()


def test_dump_and_rescore(tmp_path):
    shutil.copy(CONFIGS / "ou_traj.json", tmp_path / "t.json")
    assert main(["dump-traj", "--config", str(tmp_path / "t.json"), "--out", str(tmp_path)]) == 0
    assert main(["rescore", "--config", str(tmp_path / "t.json"), "--out", str(tmp_path)]) == 0


def test_pinn_demo_and_growth(tmp_path, capsys):
    assert main(["pinn-demo", "--config", str(CONFIGS / "ou_pinn.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "pinn.csv").exists() or any(tmp_path.glob("*.csv"))
    assert main(["check-growth", "--config", str(CONFIGS / "lorenz63_growth.json"), "--out", str(tmp_path)]) == 0


def test_console_entry_point(tmp_path):
    exe = shutil.which("fpk")
    cmd = [exe] if exe else [sys.executable, "-m", "fpk.cli"]
    res = subprocess.run(cmd + ["solve", "--config", str(CONFIGS / "bad_domain.json")],
                         capture_output=True, text=True)
    assert res.returncode == 2
