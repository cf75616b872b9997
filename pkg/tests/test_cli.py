import json

import pytest

from nce_lab import cli
from nce_lab.output import read_csv


def run(tmp_path, *args):
    return cli.main([*args, "-o", str(tmp_path)])


class TestCommands:
    def test_mse(self, tmp_path):
        assert run(tmp_path, "mse", "--model", "gauss_var", "--nu-grid", "0.5,1,2", "--loss", "js,kl",
                   "--noise", "param:2") == 0
        header, rows = read_csv(tmp_path / "mse.csv")
        assert header[:5] == ["model", "theta", "unnormalized", "loss", "nu"]
        assert len(rows) == 6
        report = json.loads((tmp_path / "run_report.json").read_text())
        assert report["config"]["command"] == "mse" and len(report["input_hash"]) == 64

    def test_data_noise_ratio(self, tmp_path):
        assert run(tmp_path, "mse", "--nu", "1") == 0
        _, rows = read_csv(tmp_path / "mse.csv")
        mse, cr = float(rows[0][7]), float(rows[0][9])
        assert mse / cr == pytest.approx(2.0, rel=1e-9)

    def test_optimize_nu(self, tmp_path):
        assert run(tmp_path, "optimize-nu", "--noise", "data") == 0
        assert json.loads((tmp_path / "nu_star.json").read_text())["nu_star"] == 1.0

    def test_optimize_noise_parametric(self, tmp_path):
        assert run(tmp_path, "optimize-noise", "--model", "gauss_mean", "--param-n", "41") == 0
        _, rows = read_csv(tmp_path / "optimal_noise.csv")
        assert abs(float(rows[0][0])) > 0.5

    def test_optimize_noise_histogram(self, tmp_path):
        assert run(tmp_path, "optimize-noise", "--mode", "histogram", "--nu", "100", "--max-iter", "5") == 0
        header, rows = read_csv(tmp_path / "histogram.csv")
        assert header == ["bin_lo", "bin_hi", "weight"] and len(rows) == 50

    def test_zbench(self, tmp_path):
        assert run(tmp_path, "zbench", "--loss", "js", "--noise", "normal:0,2", "--reps", "20", "-T", "1000") == 0
        summary = json.loads((tmp_path / "zbench.json").read_text())
        assert summary["mse_theory"] > 0

    def test_landscape_with_plots(self, tmp_path):
        assert run(tmp_path, "landscape", "--model", "gauss_var", "--param-n", "30", "--gnuplot", "--plot") == 0
        assert (tmp_path / "landscape.csv.gp").exists()
        assert (tmp_path / "landscape.png").exists()

    def test_preset(self, tmp_path):
        assert run(tmp_path, "preset", "fig6", "--param-n", "20", "--plot") == 0
        for family in ("gauss_mean", "gauss_var", "gauss_corr"):
            header, rows = read_csv(tmp_path / f"fig6_{family}.csv")
            assert header == ["noise_param", "mse"] and len(rows) == 20
            assert (tmp_path / f"fig6_{family}.png").exists()

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('command = "mse"\nmodel = "gauss_corr"\ntheta = 0.3\nnu = 2.0\n')
        assert cli.main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 0
        _, rows = read_csv(tmp_path / "out" / "mse.csv")
        assert rows[0][0] == "gauss_corr"


class TestExitCodes:
    def test_missing_command(self, tmp_path, capsys):
        cfg = tmp_path / "empty.toml"
        cfg.write_text("")
        assert cli.main(["run", str(cfg)]) == cli.EXIT_CONFIG
        assert "missing required field 'command'" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('command = "mse"\ncolour = "red"\n')
        assert cli.main(["run", str(cfg)]) == cli.EXIT_CONFIG

    def test_bad_noise(self, tmp_path):
        assert run(tmp_path, "mse", "--noise", "cauchy:1") == cli.EXIT_CONFIG

    def test_numerical_failure(self, tmp_path, capsys):
        # the reverse-KL variance diverges once the noise variance reaches twice the data variance
        assert run(tmp_path, "mse", "--loss", "revkl", "--noise", "normal:0,4") == cli.EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err


class TestReproducibility:
    def test_reruns_are_byte_identical(self, tmp_path):
        args = ["optimize-nu", "--model", "gauss_var", "--noise", "param:2", "--gnuplot", "--plot"]
        assert cli.main([*args, "-o", str(tmp_path / "a")]) == 0
        assert cli.main([*args, "-o", str(tmp_path / "b")]) == 0
        for name in ("nu_mse.csv", "nu_star.json", "nu_mse.csv.gp", "nu_mse.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        ra = json.loads((tmp_path / "a" / "run_report.json").read_text())
        rb = json.loads((tmp_path / "b" / "run_report.json").read_text())
        # only the timing and the output location may differ
        for r in (ra, rb):
            for key in ("wall_clock_seconds", "input_hash", "files"):
                r.pop(key)
            r["config"].pop("output")
        assert ra == rb

    def test_validate_deterministic(self, tmp_path):
        args = ["validate", "--reps", "100", "-T", "2000", "--noise", "normal:0,2", "--threads", "2"]
        assert cli.main([*args, "-o", str(tmp_path / "a")]) == 0
        assert cli.main([*args, "--threads", "1", "-o", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "validate.json").read_bytes() == (tmp_path / "b" / "validate.json").read_bytes()
