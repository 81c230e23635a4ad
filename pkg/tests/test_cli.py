import time

import pytest

from wzlab.cli import main


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.split()
    assert {"scalar-wz", "hilbert-interpolation", "mollified-noise", "markov-driver"} <= set(out)


def test_verify_is_fast_and_green(capsys):
    start = time.perf_counter()
    assert main(["verify"]) == 0
    assert time.perf_counter() - start < 5.0
    assert capsys.readouterr().out.count("PASS") == 8


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = hilbert-interpolation\nn_grid = 4, 8, 16\nreplicates = 100\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"errors.csv", "report.json", "tensors.json"}


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario = scalar-wz\nn_grid = 32, 16\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "n_grid" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1


@pytest.mark.filterwarnings("ignore::wzlab.sde.BlowUpWarning")
def test_blow_up_exit_code(tmp_path, capsys):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text("scenario = scalar-wz\nx0 = 1e9\nreplicates = 100\nn_grid = 4, 8\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
