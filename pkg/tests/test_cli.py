import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

import modeseek as ms
from modeseek.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main


@pytest.fixture
def small_config(reference, tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps({
        "model": {"inline": reference.to_dict()},
        "algorithms": [{"name": "oracle"}, {"name": "max_shift", "values": [0.2, 0.1]}],
        "starts": {"kind": "grid", "num": 8},
        "record_timing": False,
    }))
    return path


@pytest.fixture
def mixture_file(config_dir):
    return str(config_dir / "reference_mixture.json")


class TestModes:
    def test_lists_modes(self, mixture_file, capsys):
        assert main(["modes", mixture_file]) == EXIT_OK
        out = capsys.readouterr().out
        assert "3 modes" in out
        assert out.count("f=") == 3

    def test_missing_file(self, tmp_path, capsys):
        assert main(["modes", str(tmp_path / "none.json")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err


class TestSample:
    def test_deterministic(self, mixture_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sample", mixture_file, "-n", "25", "-seed", "4", "-o", str(a)]) == EXIT_OK
        assert main(["sample", mixture_file, "-n", "25", "--seed", "4", "-o", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        assert np.loadtxt(a, delimiter=",").shape == (25, 2)

    def test_bad_size_is_runtime_error(self, mixture_file, tmp_path):
        assert main(["sample", mixture_file, "-n", "0", "-o", str(tmp_path / "x.csv")]) == EXIT_RUNTIME


class TestOracle:
    def test_csv_columns(self, small_config, tmp_path, capsys):
        out = tmp_path / "o.csv"
        assert main(["oracle", str(small_config), "-o", str(out)]) == EXIT_OK
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["x0", "x1", "basin", "end0", "end1", "arc_length", "terminal"]
        for r in rows[1:]:
            t = ms.Terminal.parse(r[-1])
            assert (r[2] == "") == (t.status is not ms.Status.CONVERGED)
        assert "resolved" in capsys.readouterr().out


class TestRunAndSweep:
    def test_run_writes_report(self, small_config, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["run", str(small_config), "-o", str(out), "--workers", "2"]) == EXIT_OK
        rep = ms.parse_report(out)
        assert [r.algorithm for r in rep.rows] == ["oracle", "max_shift", "max_shift"]

    def test_sweep_reports_trend(self, small_config, tmp_path, capsys):
        assert main(["sweep", str(small_config), "-o", str(tmp_path / "s.csv")]) == EXIT_OK
        assert "max_shift: agreement" in capsys.readouterr().out

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"model": {}, "algorithms": [{"name": "warp"}]}')
        assert main(["run", str(path)]) == EXIT_CONFIG
        assert "config.algorithms[0].name" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("modeseek") is None, reason="console script not installed")
def test_console_script(mixture_file):
    res = subprocess.run(["modeseek", "modes", mixture_file], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "kappa0" in res.stdout
