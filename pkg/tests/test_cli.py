import json
import subprocess
import sys

import numpy as np
import pytest

from stablefield.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, parse_points, read_config_file
from stablefield.field_models import FieldRealization, read_realization_csv, write_realization_csv


@pytest.fixture
def levy_obs(tmp_path):
    path = tmp_path / "obs.csv"
    write_realization_csv(FieldRealization([[1.0]], [2.0]), path)
    return str(path)


def weights_row(directory, method):
    lines = (directory / f"weights_{method}.csv").read_text().splitlines()
    return lines[1].split(",")


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestPredict:
    @pytest.mark.parametrize("method, expected, tol", [("col", 0.75, 1e-12), ("lsl", 0.9, 1e-6)])
    def test_levy_fixture(self, tmp_path, levy_obs, method, expected, tol):
        out = tmp_path / "o"
        code = main(["predict", "--model", "levy-sheet", "--alpha", "1.5", "--observations", levy_obs,
                     "--targets", "0.75", "--method", method, "--out", str(out)])
        assert code == EXIT_OK
        row = weights_row(out, method)
        assert row[0] == "0.75" and row[2] == method
        assert float(row[1]) == pytest.approx(expected, abs=tol)
        pred = read_realization_csv(out / f"predictions_{method}.csv")
        assert pred.values[0] == pytest.approx(2 * expected, abs=2 * tol)

    def test_ml_on_kernel_model(self, tmp_path, levy_obs, capsys):
        code = main(["predict", "--model", "levy-sheet", "--observations", levy_obs,
                     "--targets", "0.75", "--method", "ml", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert err_json(capsys)["type"] == "UnsupportedModelError"

    def test_numerical_failure(self, tmp_path, capsys):
        obs = tmp_path / "obs.csv"
        write_realization_csv(FieldRealization([[0.3], [0.35]], [1.0, 2.0]), obs)
        code = main(["predict", "--model", "levy-sheet", "--observations", str(obs), "--cells", "4",
                     "--targets", "0.5", "--method", "lsl", "--out", str(tmp_path / "o")])
        assert code == EXIT_NUMERIC
        info = err_json(capsys)
        assert info["error"] == "numerical" and info["method"] == "lsl" and info["target"] == [0.5]

    def test_duplicate_sites(self, tmp_path, capsys):
        obs = tmp_path / "obs.csv"
        write_realization_csv(FieldRealization([[0.3], [0.3]], [1.0, 2.0]), obs)
        code = main(["predict", "--model", "levy-sheet", "--observations", str(obs),
                     "--targets", "0.5", "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_refuses_overwrite(self, tmp_path, levy_obs):
        args = ["predict", "--model", "levy-sheet", "--observations", levy_obs, "--targets", "0.75",
                "--out", str(tmp_path / "o")]
        assert main(args) == EXIT_OK
        assert main(args) == EXIT_CONFIG


class TestSimulate:
    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            args = ["simulate", "--model", "levy-sheet", "--alpha", "1.5", "--grid", "12", "--cells", "24",
                    "--seed", "7", "--out", str(tmp_path), "--name", name]
            assert main(args) == EXIT_OK
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes()
        assert read_realization_csv(tmp_path / "a.csv").values.size == 144

    def test_subgaussian(self, tmp_path):
        assert main(["simulate", "--model", "sub-gaussian", "--sill", "7", "--range", "0.1", "--alpha", "1.5",
                     "--grid", "10", "--out", str(tmp_path), "--plot"]) == EXIT_OK
        real = read_realization_csv(tmp_path / "realization.csv")
        assert real.a is not None and real.a > 0
        assert (tmp_path / "realization_plot.gp").exists()

    def test_invalid_alpha(self, tmp_path, capsys):
        assert main(["simulate", "--alpha", "2.5", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "alpha" in err_json(capsys)["message"]


class TestBenchmark:
    def test_zero_realizations(self, tmp_path):
        assert main(["benchmark", "--realizations", "0", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_byte_identical(self, tmp_path, capsys):
        for d in ("a", "b"):
            args = ["benchmark", "--field", "sub-gaussian", "--realizations", "3", "--grid", "10",
                    "--methods", "lsl,col,ml", "--seed", "2", "--out", str(tmp_path / d)]
            assert main(args) == EXIT_OK
        a = (tmp_path / "a" / "summary.csv").read_bytes()
        assert a == (tmp_path / "b" / "summary.csv").read_bytes()
        lines = a.decode().splitlines()
        assert lines[0] == "method,q05,q25,median,mean,q75,q95,count"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["lsl", "col", "ml"]
        assert "95%-Quantile" in capsys.readouterr().out

    def test_inapplicable(self, tmp_path):
        assert main(["benchmark", "--field", "levy-sheet", "--methods", "ml", "--out", str(tmp_path)]) == EXIT_CONFIG


class TestConfig:
    def test_precedence(self, tmp_path, levy_obs):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# fixture\nmodel = levy-sheet\nmethod = lsl\nalpha = 1.2\n")
        out = tmp_path / "o"
        code = main(["predict", "--config", str(cfg), "--alpha", "1.5", "--observations", levy_obs,
                     "--targets", "0.75", "--out", str(out)])
        assert code == EXIT_OK
        assert float(weights_row(out, "lsl")[1]) == pytest.approx(0.9, abs=1e-6)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_reader(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("grid = 8  # small\nplot = yes\n\n")
        assert read_config_file(cfg, {"grid": (int, 1), "plot": (bool, False)}) == {"grid": 8, "plot": True}


def test_covariation_levy(capsys):
    assert main(["covariation", "--model", "levy-sheet", "--points", "0.75;1"]) == EXIT_OK
    rows = [[float(v) for v in ln.split(",")] for ln in capsys.readouterr().out.splitlines()]
    np.testing.assert_allclose(rows, [[0.75, 0.75], [0.75, 1.0]], atol=1e-12)


def test_parse_points():
    np.testing.assert_array_equal(parse_points("0.2,0.3;0.4,0.5"), [[0.2, 0.3], [0.4, 0.5]])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stablefield", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
