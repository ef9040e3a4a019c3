import math
import os

import numpy as np
import pytest

from dqpt import QuenchProtocol, critical_times, dispersion
from dqpt.cli import ConfigError, RunManifest, main, parse_number, read_config_file

K_STAR = math.acos(0.8)
T_STAR = math.pi / (2.0 * dispersion(K_STAR, 2.0))


def read_rows(path):
    lines = open(path, encoding="utf-8").read().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestParseNumber:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("pi", math.pi),
            ("PI", math.pi),
            ("-pi", -math.pi),
            ("pi/2", math.pi / 2),
            ("-pi/2", -math.pi / 2),
            ("3*pi/4", 3 * math.pi / 4),
            ("2pi", 2 * math.pi),
            ("0.5pi", 0.5 * math.pi),
            ("0.25", 0.25),
            ("-1.5e-3", -1.5e-3),
            (" 2 ", 2.0),
        ],
    )
    def test_accepted_forms(self, text, expected):
        assert parse_number(text) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("text", ["inf", "Infinite", "INFINITY", "+inf"])
    def test_infinity_tokens(self, text):
        assert math.isinf(parse_number(text))

    @pytest.mark.parametrize("text", ["abc", "pie", "2*pi*3", "", "pi/", "1/2"])
    def test_rejects_garbage(self, text):
        with pytest.raises(ConfigError):
            parse_number(text)


class TestConfigFile:
    def test_parses_comments_and_lists(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# full-line comment\n"
            "lambda_pre = 0.5\n"
            "beta_list = 10, 0.1  # inline comment\n"
            "phi = -pi/2\n"
            "\n"
            "steps = 51\n",
            encoding="utf-8",
        )
        entries = read_config_file(str(cfg))
        assert entries["lambda_pre"] == 0.5
        assert entries["beta_list"] == (10.0, 0.1)
        assert entries["phi"] == pytest.approx(-math.pi / 2)
        assert entries["steps"] == 51

    def test_unknown_key_is_config_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("lambda_prev = 0.5\n", encoding="utf-8")
        assert main(["rate", "--config", str(cfg)]) == 2

    def test_malformed_line_is_config_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just some words\n", encoding="utf-8")
        assert main(["rate", "--config", str(cfg)]) == 2

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["rate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_flags_override_file_values(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("beta = 1\nsteps = 5\nt_max = 1\n", encoding="utf-8")
        out = tmp_path / "r.csv"
        rc = main(["rate", "--config", str(cfg), "--beta", "2", "--out", str(out)])
        assert rc == 0
        manifest = RunManifest.from_text((tmp_path / "r.csv.manifest").read_text())
        entries = dict(manifest.entries)
        assert entries["config.beta"] == "2"
        assert entries["config.steps"] == "5"


class TestValidation:
    @pytest.mark.parametrize(
        "flags",
        [
            ["--steps", "1"],
            ["--t-min", "2", "--t-max", "1"],
            ["--tol", "0"],
            ["--k-resolution", "32"],
            ["--n-sites", "7"],
            ["--n-sites", "0"],
            ["--lambda-pre", "-0.5"],
            ["--beta", "0"],
            ["--jobs", "0"],
            ["--n-max", "-1"],
        ],
    )
    def test_bad_values_exit_2_without_output(self, tmp_path, flags):
        out = tmp_path / "x.csv"
        assert main(["rate", *flags, "--out", str(out)]) == 2
        assert not out.exists()

    def test_unknown_task_exits_2(self):
        assert main(["densify"]) == 2

    def test_unparseable_flag_value_exits_2(self):
        assert main(["rate", "--beta", "warm"]) == 2


class TestManifest:
    def test_round_trip_is_lossless(self):
        m = RunManifest()
        m.add("version", "0.1.0")
        m.add("config.beta", 0.1)
        m.add("config.out", "some path with spaces")
        m.add("rows", 42)
        again = RunManifest.from_text(m.to_text())
        assert again.entries == m.entries

    def test_floats_round_trip_exactly(self):
        m = RunManifest()
        m.add("x", 0.1)
        m.add("y", T_STAR)
        parsed = dict(RunManifest.from_text(m.to_text()).entries)
        assert float(parsed["x"]) == 0.1
        assert float(parsed["y"]) == T_STAR


class TestRateTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "rate.csv"
        rc = main(
            ["rate", "--t-min", "0", "--t-max", "2", "--steps", "21", "--out", str(out)]
        )
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["t", "r", "err_bound", "singular_flag"]
        assert len(rows) == 21
        assert all(row[3] == "0" for row in rows)
        assert float(rows[0][1]) == 0.0
        manifest = dict(RunManifest.from_text((tmp_path / "rate.csv.manifest").read_text()).entries)
        assert manifest["rows"] == "21"
        assert manifest["degraded"] == "0"
        assert "duration_seconds" in manifest

    def test_reruns_are_byte_identical(self, tmp_path):
        args = ["rate", "--steps", "11", "--t-max", "2"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main([*args, "--out", str(a)]) == 0
        assert main([*args, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_default_output_name(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["rate", "--steps", "5", "--t-max", "1"]) == 0
        assert (tmp_path / "rate.csv").exists()
        assert (tmp_path / "rate.csv.manifest").exists()


class TestRateFiniteTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "rf.csv"
        rc = main(
            ["rate-finite", "--n-sites", "64", "--steps", "9", "--t-max", "2", "--out", str(out)]
        )
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["t", "r", "singular_flag"]
        assert len(rows) == 9


class TestZerosTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "z.csv"
        rc = main(
            [
                "zeros",
                "--branch", "0",
                "--branch", "2",
                "--k-resolution", "64",
                "--out", str(out),
            ]
        )
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["n", "k", "re_z", "im_z", "residual"]
        assert {row[0] for row in rows} == {"0", "2"}
        assert len(rows) == 128
        assert max(float(row[4]) for row in rows) <= 1e-9


class TestCriticalModesTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "cm.csv"
        rc = main(["critical-modes", "--out", str(out)])
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["variant", "k_star", "residual", "t_star_0", "jump_sign"]
        assert len(rows) == 1
        assert rows[0][0] == "sinh"
        assert float(rows[0][1]) == pytest.approx(K_STAR, abs=1e-6)
        assert float(rows[0][3]) == pytest.approx(T_STAR, abs=1e-6)
        assert rows[0][4] == "-1"

    def test_variant_flag_selects_condition(self, tmp_path):
        out = tmp_path / "cm.csv"
        rc = main(
            ["critical-modes", "--variant", "tanh", "--beta", "1", "--phi", "-pi/2",
             "--out", str(out)]
        )
        assert rc == 0
        _, rows = read_rows(out)
        assert rows[0][0] == "tanh"


class TestWindingTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "w.csv"
        rc = main(
            ["winding", "--t-min", "1", "--t-max", "1.3", "--steps", "3", "--out", str(out)]
        )
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["t", "nu", "unwrap_refinements"]
        assert float(rows[0][1]) == pytest.approx(0.0, abs=1e-3)
        assert float(rows[2][1]) == pytest.approx(-1.0, abs=1e-3)

    def test_unresolvable_sample_skipped_and_flagged(self, tmp_path):
        out = tmp_path / "w.csv"
        rc = main(
            [
                "winding",
                "--t-min", "%.17g" % T_STAR,
                "--t-max", "%.17g" % (T_STAR + 0.1),
                "--steps", "2",
                "--out", str(out),
            ]
        )
        assert rc == 3
        _, rows = read_rows(out)
        assert len(rows) == 1  # the exactly-critical sample is dropped
        manifest = dict(RunManifest.from_text((tmp_path / "w.csv.manifest").read_text()).entries)
        assert manifest["winding.failed_samples"] == "1"
        assert "warning.0" in manifest


class TestEchoDecompositionTask:
    def test_rows_and_identity(self, tmp_path):
        out = tmp_path / "e.csv"
        rc = main(
            ["echo-decomposition", "--n-sites", "6", "--steps", "4", "--t-max", "2",
             "--out", str(out)]
        )
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["t", "k", "echo", "null_work", "interference"]
        assert len(rows) == 4 * 3
        for row in rows:
            echo, null, interference = map(float, row[2:])
            assert echo == pytest.approx(null + interference, abs=1e-12)
            assert 0.0 <= echo <= 1.0 + 1e-12


class TestVariantReportTask:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "v.csv"
        rc = main(["variant-report", "--beta", "1", "--phi", "-pi/2", "--out", str(out)])
        assert rc == 0
        header, rows = read_rows(out)
        assert header == ["variant", "k_star", "residual", "residual_other_variant",
                          "fisher_confirmed"]
        flags = {row[0]: row[4] for row in rows}
        assert flags == {"sinh": "1", "tanh": "0"}


class TestSweepTask:
    CFG = (
        "lambda_pre = 0\n"
        "lambda_post_list = 0.5\n"
        "beta_list = 10, 0.1\n"
        "phi_list = -pi/2\n"
        "steps = 41\n"
        "t_max = 8\n"
    )

    def test_cells_and_index(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(self.CFG, encoding="utf-8")
        out = tmp_path / "sweep_out"
        rc = main(["sweep", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        cold = out / "beta=10.000000_phi=-1.570796_lambda_post=0.500000"
        hot = out / "beta=0.100000_phi=-1.570796_lambda_post=0.500000"
        for cell in (cold, hot):
            assert (cell / "critical_modes.csv").exists()
            assert (cell / "rate.csv").exists()
            assert (cell / "cell.manifest").exists()
        header, rows = read_rows(out / "index.csv")
        assert header == ["cell", "beta", "phi", "lambda_post", "n_critical_modes",
                          "first_critical_time", "cusp_count"]
        by_cell = {row[0]: row for row in rows}
        assert by_cell[cold.name][4] == "0"
        assert by_cell[cold.name][5] == "nan"
        assert by_cell[hot.name][4] == "2"
        assert float(by_cell[hot.name][5]) > 0.0

    def test_parallel_run_is_byte_identical(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(self.CFG, encoding="utf-8")
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["sweep", "--config", str(cfg), "--out", str(serial)]) == 0
        assert main(["sweep", "--config", str(cfg), "--jobs", "2", "--out", str(parallel)]) == 0
        assert (serial / "index.csv").read_bytes() == (parallel / "index.csv").read_bytes()
        for cell in os.listdir(serial):
            if not cell.startswith("beta="):
                continue
            for name in ("critical_modes.csv", "rate.csv"):
                assert (serial / cell / name).read_bytes() == (
                    parallel / cell / name
                ).read_bytes()

    def test_cap_exceeded_exits_before_any_computation(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(self.CFG + "sweep_cap = 1\n", encoding="utf-8")
        out = tmp_path / "capped"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 2
        assert not (out / "index.csv").exists()

    def test_scalar_fallback_single_cell(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("beta = 0.5\nsteps = 21\n", encoding="utf-8")
        out = tmp_path / "one"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        _, rows = read_rows(out / "index.csv")
        assert len(rows) == 1

    def test_jobs_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DQPT_JOBS", "2")
        cfg = tmp_path / "s.cfg"
        cfg.write_text(self.CFG, encoding="utf-8")
        out = tmp_path / "env_out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        manifest = dict(RunManifest.from_text((out / "sweep.manifest").read_text()).entries)
        assert manifest["config.jobs"] == "2"
