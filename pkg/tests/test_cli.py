from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from pdeguide import data as dio
from pdeguide.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main


def run(*argv) -> int:
    return main([str(a) for a in argv])


def test_gen_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("gen", "--equation", "poisson", "--n", 3, "--grid", 16, "--seed", 1,
                   "--out", tmp_path / name) == EXIT_OK
    a = (tmp_path / "a" / "fields.bin").read_bytes()
    assert a == (tmp_path / "b" / "fields.bin").read_bytes()
    d = dio.load_dataset(tmp_path / "a")
    assert len(d) == 3 and np.abs(d.values).max() == 1.0
    meta = json.loads((tmp_path / "a" / "config.json").read_text())
    assert meta["command"] == "gen" and meta["config"]["seed"] == 1


def test_physics_only_sample_and_eval(tmp_path, capsys):
    out = tmp_path / "u.bin"
    assert run("sample", "--mode", "physics-only", "--equation", "poisson", "--coef", 1.35,
               "--grid", 24, "--sigma", 0, "--guidance-dt", 3e-4, "--iterations", 20000,
               "--out", out, "--trace", tmp_path / "trace.csv") == EXIT_OK
    side = json.loads(out.with_name("u.bin.json").read_text())
    assert side["resolved"]["mode"] == "physics_only" and side["resolved"]["iterations"] == 20000
    assert (tmp_path / "trace.csv").read_text().startswith("step,energy")
    capsys.readouterr()
    assert run("eval", "--pred", out, "--equation", "poisson", "--coef", 1.35,
               "--report", tmp_path / "rep.csv", "--plots", tmp_path / "plots") == EXIT_OK
    rel = float(capsys.readouterr().out.split()[1])
    assert rel < 1e-3
    assert (tmp_path / "plots" / "section.png").exists()


def test_ablate_split(tmp_path):
    out = tmp_path / "ablate.csv"
    assert run("ablate", "--dt-grid", "7e-5,1.5e-4,6.7e-4", "--iterations", 3000,
               "--out", out) == EXIT_OK
    side = json.loads(out.with_name("ablate.csv.json").read_text())
    assert side["max_stable_unsmoothed"] == 7e-5
    assert side["max_stable_smoothed"] == 6.7e-4
    assert len(out.read_text().splitlines()) == 7


def test_train_sample_plot_pipeline(tmp_path):
    assert run("gen", "--equation", "heat", "--n", 8, "--grid", 16, "--out", tmp_path / "d") == 0
    assert run("train", "--data", tmp_path / "d", "--epochs", 1, "--batch-size", 4,
               "--base-channels", 8, "--out", tmp_path / "m.ckpt",
               "--trace", tmp_path / "t.csv") == EXIT_OK
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "iteration,loss,rmse"
    assert run("sample", "--model", tmp_path / "m.ckpt", "--equation", "heat", "--coef", 0.03,
               "--steps", 5, "--out", tmp_path / "u.bin") == EXIT_OK
    u = dio.load_field(tmp_path / "u.bin")
    assert u.spec.shape == (16, 16)
    np.testing.assert_allclose(u.values[:, 0], np.sin(np.pi * u.spec.x()), atol=1e-6)
    assert run("plot", "--in", tmp_path / "u.bin", "--ref", tmp_path / "u.bin",
               "--out", tmp_path / "fig" / "u.png") == EXIT_OK
    assert (tmp_path / "fig" / "u_section.png").exists()


def test_bench_physics_only(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("bench", "--mode", "physics-only", "--equation", "poisson", "--coefs", "1.0,1.5",
               "--trials", 2, "--grid", 16, "--sigma", 0, "--epsilon", 1e-5,
               "--guidance-dt", 5e-4, "--iterations", 2000, "--out", out) == EXIT_OK
    assert len(out.read_text().splitlines()) == 3


def test_config_roundtrip(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"equation": "heat", "coef": 0.04, "mode": "physics_only",
                               "grid": 16, "iterations": 500, "sigma": 0}))
    assert run("sample", "--config", cfg, "--out", tmp_path / "a.bin") == EXIT_OK
    side = json.loads((tmp_path / "a.bin.json").read_text())
    assert side["config"]["coef"] == 0.04 and side["config"]["iterations"] == 500
    # the echoed config reproduces the run
    echoed = dict(side["config"], out=str(tmp_path / "b.bin"))
    (tmp_path / "echo.json").write_text(json.dumps(echoed))
    assert run("sample", "--config", tmp_path / "echo.json") == EXIT_OK
    assert ((tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes())


def test_command_line_overrides_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 5, "grid": 16}))
    assert run("gen", "--config", cfg, "--equation", "poisson", "--n", 2,
               "--out", tmp_path / "d") == EXIT_OK
    assert len(dio.load_dataset(tmp_path / "d")) == 2


@pytest.mark.parametrize("argv", [
    ["sample", "--equation", "poisson"],                      # missing --coef/--out
    ["gen", "--equation", "wave", "--out", "x"],              # bad choice
    ["sample", "--equation", "poisson", "--coef", "1", "--out", "x"],  # guided without model
    ["sample", "--equation", "poisson", "--coef", "-1", "--mode", "physics-only", "--out", "x"],
])
def test_config_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"equation": "poisson", "bogus": 1}))
    assert run("gen", "--config", cfg, "--out", tmp_path / "d") == EXIT_CONFIG
    cfg.write_text("{not json")
    assert run("gen", "--config", cfg, "--out", tmp_path / "d") == EXIT_CONFIG


def test_corrupt_data_exit_3(tmp_path):
    bad = tmp_path / "u.bin"
    bad.write_bytes(b"PGFD" + bytes(100))
    assert run("eval", "--pred", bad, "--equation", "poisson", "--coef", 1.0) == EXIT_DATA


def test_instability_exit_4(tmp_path, capsys):
    assert run("sample", "--mode", "physics-only", "--equation", "poisson", "--coef", 1.0,
               "--grid", 16, "--sigma", 0, "--guidance-dt", 0.1, "--iterations", 1000,
               "--out", tmp_path / "u.bin") == EXIT_NUMERIC
    assert "step" in capsys.readouterr().err
    assert not (tmp_path / "u.bin").exists()


def test_missing_file_exit_5(tmp_path):
    assert run("eval", "--pred", tmp_path / "nope.bin", "--equation", "poisson",
               "--coef", 1.0) == EXIT_IO


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "pdeguide", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("gen", "train", "sample", "eval", "bench", "ablate", "plot"):
        assert cmd in res.stdout
