import filecmp
import subprocess
import sys
from dataclasses import fields

import pytest
from hypothesis import given, strategies as st

from stratokeeper.cli import main
from stratokeeper.config import RunConfig
from stratokeeper.errors import ConfigError

QUICK = """\
# tiny run
horizon = 10
days = 2
budget = 4
threads = 1
sweep_launches = 2
kde_resolution = 21
grid_half_width_km = 1200
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(QUICK)
    return path


def csv_rows(path):
    return path.read_text().splitlines()[1:]


def test_unknown_key_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("horizon = 10\nwarp_factor = 9\n")
    assert main(["simulate", "--config", str(path), "--launch", "0,0,0", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "warp_factor" in err and ":2:" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", ["horizon = ten\n", "horizon = 0\n", "days = 5-1\n", "budget\n", "seed = 1\nseed = 2\n"])
def test_bad_values_exit_2(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    assert main(["synth-wind", "--config", str(path), "--out", str(tmp_path / "g.grid")]) == 2


def test_usage_errors_exit_2(tmp_path):
    assert main(["teleport"]) == 2
    assert main(["simulate", "--launch", "1,2", "--out", str(tmp_path)]) == 2
    assert main(["optimize", "--method", "cmaes", "--out", str(tmp_path)]) == 2


def test_optimize_bo_budget_4(cfg_file, tmp_path):
    out = tmp_path / "opt"
    assert main(["optimize", "--config", str(cfg_file), "--method", "bo", "--budget", "4", "--seed", "1", "--out", str(out)]) == 0
    (trace,) = out.glob("trace_*.csv")
    assert trace.name == "trace_2_bo_step_0.csv"
    assert len(csv_rows(trace)) == 4
    meta = (out / "meta.txt").read_text()
    assert "seed = 1" in meta and "file = trace_2_bo_step_0.csv" in meta


def dirs_identical(a, b):
    names = sorted(p.name for p in a.iterdir())
    if names != sorted(p.name for p in b.iterdir()):
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


@pytest.mark.parametrize("argv", [
    ["optimize", "--method", "pso", "--budget", "13"],
    ["simulate", "--launch", "50,-20,3"],
    ["experiment"],
])
def test_same_flags_same_bytes(cfg_file, tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(argv + ["--config", str(cfg_file), "--out", str(out)]) == 0
    assert dirs_identical(a, b)


def test_experiment_outputs_listed(cfg_file, tmp_path):
    out = tmp_path / "exp"
    assert main(["experiment", "--config", str(cfg_file), "--out", str(out)]) == 0
    listed = {l.split("=", 1)[1].strip() for l in (out / "meta.txt").read_text().splitlines() if l.startswith("file =")}
    assert listed == {p.name for p in out.iterdir()}
    assert {"trace_2_bo_step_0.csv", "trace_2_uniform_step_0.csv", "kde_step.csv", "windcone_2.csv"} <= listed


def test_synth_wind_and_windcone(cfg_file, tmp_path):
    grid = tmp_path / "day.grid"
    assert main(["synth-wind", "--config", str(cfg_file), "--out", str(grid)]) == 0
    cone = tmp_path / "cone.csv"
    other = tmp_path / "file.cfg"
    other.write_text(QUICK + f"day_files = {grid}\nperturb_amplitude = 0\n")
    assert main(["export-windcone", "--config", str(other), "--at", "10,20,1", "--out", str(cone)]) == 0
    lines = cone.read_text().splitlines()
    assert lines[0] == "level,pressure_pa,u,v" and len(lines) == 26


def test_runtime_error_exit_3(cfg_file, tmp_path, capsys):
    broken = tmp_path / "broken.grid"
    broken.write_text("not a grid\n")
    cfg = tmp_path / "r.cfg"
    cfg.write_text(QUICK + f"day_files = {broken}\n")
    assert main(["simulate", "--config", str(cfg), "--launch", "0,0,0", "--out", str(tmp_path / "o")]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_help_lists_every_key():
    out = subprocess.run([sys.executable, "-m", "stratokeeper", "--help"], capture_output=True, text=True, check=True).stdout
    for f in fields(RunConfig):
        assert f"  {f.name} = {f.default!r}" in out


def test_threads_env_override(cfg_file, monkeypatch):
    cfg = RunConfig.from_file(cfg_file).replace(threads=0)
    monkeypatch.setenv("STRATOKEEPER_THREADS", "3")
    assert cfg.experiment_spec().threads == 3
    monkeypatch.delenv("STRATOKEEPER_THREADS")
    assert cfg.replace(threads=2).experiment_spec().threads == 2


def test_config_round_trip():
    cfg = RunConfig().replace(seed=9, days="3,5-6", budget=17)
    back = RunConfig.from_text("\n".join(cfg.to_lines()))
    assert back == cfg
    assert back.day_list() == (3, 5, 6)


@given(st.sampled_from(RunConfig.keys()), st.text(alphabet="abcxyz_", min_size=1, max_size=8))
def test_unknown_keys_always_rejected(known, suffix):
    key = known + "_" + suffix
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_text(f"{key} = 1\n")
