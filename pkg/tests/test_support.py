"""Seeding, thread map, configuration and output helpers."""
import json

import numpy as np
import pytest

from nce_lab.config import ExperimentConfig, load_file, merge, validate
from nce_lab.errors import ConfigError
from nce_lab.output import fmt, gnuplot_script, plot_csv, read_csv, write_csv, write_json
from nce_lab.parallel import THREADS_ENV, parallel_map, splitmix64, worker_count


class TestSeeding:
    def test_reference_output(self):
        # first output of the reference splitmix64 generator from state 0
        assert splitmix64(0, 0) == 0xE220A8397B1DCDAF

    def test_streams_differ(self):
        seeds = {splitmix64(42, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert all(0 <= s < 2 ** 64 for s in seeds)


class TestThreads:
    def test_order_preserved(self):
        assert parallel_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "2")
        assert worker_count(8) == 2
        assert worker_count(None) == 2
        monkeypatch.delenv(THREADS_ENV)
        assert worker_count(None) == 1
        assert worker_count(3) == 3


class TestConfig:
    def test_defaults_and_digest(self):
        a = validate({"command": "mse"})
        b = validate({"command": "mse"})
        assert a.digest() == b.digest()
        assert validate({"command": "mse", "seed": 1}).digest() != a.digest()
        assert isinstance(a, ExperimentConfig)

    @pytest.mark.parametrize("raw,msg", [
        ({}, "missing required field 'command'"),
        ({"command": "mse", "bogus": 1}, "unknown configuration key"),
        ({"command": "fit"}, "field 'command'"),
        ({"command": "preset"}, "field 'preset'"),
        ({"command": "mse", "nu": -1}, "'nu'"),
        ({"command": "mse", "nu": "many"}, "'nu'"),
        ({"command": "mse", "loss": "hinge"}, "'loss'"),
        ({"command": "mse", "T": True}, "'T'"),
        ({"command": "mse", "reps": 1.5}, "'reps'"),
        ({"command": "mse", "model": "laplace"}, "'model'"),
        ({"command": "mse", "nu_grid": []}, "'nu_grid'"),
        ({"command": "mse", "projection": "mirror"}, "'projection'"),
    ])
    def test_rejects(self, raw, msg):
        with pytest.raises(ConfigError, match=msg):
            validate(raw)

    def test_file_and_merge(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('command = "mse"\nnu = 2.0\nloss = ["js", "kl"]\n')
        raw = load_file(p)
        cfg = validate(merge(raw, {"nu": 3.0, "seed": None}))
        assert cfg.nu == 3.0 and cfg.loss == ["js", "kl"] and cfg.seed == 0
        with pytest.raises(ConfigError):
            load_file(tmp_path / "missing.toml")
        bad = tmp_path / "bad.toml"
        bad.write_text("command = \n")
        with pytest.raises(ConfigError):
            load_file(bad)


class TestOutput:
    def test_fmt_roundtrips(self):
        for v in (0.1, 1 / 3, 1e-300, 12345678.9):
            assert float(fmt(v)) == v
        assert fmt(True) == "1" and fmt(np.int64(3)) == "3"

    def test_csv_and_json(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["nu", "mse", "loss"], [(1.0, 2.5, "js"), (2.0, 2.0, "js")])
        header, rows = read_csv(path)
        assert header == ["nu", "mse", "loss"] and rows[1] == ["2", "2", "js"]
        j = write_json(tmp_path / "r.json", {"b": float("inf"), "a": np.arange(2)})
        assert json.loads(j.read_text()) == {"a": [0, 1], "b": "inf"}

    def test_gnuplot_and_png(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["nu", "mse", "loss"],
                         [(0.1, 3.0, "js"), (1.0, 2.0, "js"), (0.1, 4.0, "kl"), (1.0, 2.5, "kl")])
        gp = gnuplot_script(path)
        assert "using 1:2" in gp.read_text()
        png = plot_csv(path)
        first = png.read_bytes()
        assert first[:8] == b"\x89PNG\r\n\x1a\n"
        assert plot_csv(path).read_bytes() == first
