"""Command-line interface: subcommands, exit codes, output determinism."""

import json

import pytest

from decoupsim.cli import main


@pytest.fixture
def ber_config(tmp_path):
    cfg = {
        "system": {"n_r": 12, "k": 3, "m_i": 2},
        "decoupler": "SD",
        "detector": "LMMSE",
        "constellation": "QPSK",
        "snr_db": [0.0, 10.0],
        "bits_per_point": 600,
        "seed": 11,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestBerCommand:
    def test_runs_and_writes_outputs(self, ber_config, tmp_path, capsys):
        out = tmp_path / "run1"
        assert main(["ber", "--config", str(ber_config), "--out", str(out)]) == 0
        assert (out / "ber.csv").exists()
        assert (out / "manifest.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "ber"
        assert manifest["config"]["system"]["k"] == 3

    def test_byte_identical_csv_across_thread_counts(self, ber_config, tmp_path):
        out1, out4 = tmp_path / "t1", tmp_path / "t4"
        assert main(["ber", "--config", str(ber_config), "--out", str(out1),
                     "--threads", "1"]) == 0
        assert main(["ber", "--config", str(ber_config), "--out", str(out4),
                     "--threads", "4"]) == 0
        assert (out1 / "ber.csv").read_bytes() == (out4 / "ber.csv").read_bytes()

    def test_override_changes_run(self, ber_config, tmp_path):
        out = tmp_path / "o"
        assert main(["ber", "--config", str(ber_config), "--out", str(out),
                     "--override", "snr_db=[5.0]"]) == 0
        body = (out / "ber.csv").read_text()
        assert ",5.0," in body and ",10.0," not in body

    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["ber", "--config", str(tmp_path / "nope.json")]) == 2

    def test_invalid_field_is_config_error(self, ber_config, tmp_path):
        assert main(["ber", "--config", str(ber_config), "--out", str(tmp_path),
                     "--override", "detector=\"ML\""]) == 2

    def test_infeasible_system_exit_code(self, ber_config, tmp_path):
        assert main(["ber", "--config", str(ber_config), "--out", str(tmp_path),
                     "--override", "system.n_r=4"]) == 3


class TestAuditCommand:
    def test_runs(self, ber_config, tmp_path):
        out = tmp_path / "a"
        assert main(["audit", "--config", str(ber_config), "--out", str(out),
                     "--trials", "5"]) == 0
        lines = (out / "audit.csv").read_text().splitlines()
        assert len(lines) == 4  # header + SD, SVD, PINV


class TestFlopsCommand:
    def test_estimates_only_sweep(self, tmp_path):
        out = tmp_path / "f"
        assert main(["flops", "--out", str(out), "--sweep", "users",
                     "--no-instrumented"]) == 0
        lines = (out / "flops_users.csv").read_text().splitlines()
        assert len(lines) == 1 + 6 * 3  # six K points x three algorithms


class TestIncludeCommand:
    def test_small_inclusion_bench(self, tmp_path):
        out = tmp_path / "i"
        assert main(["include", "--out", str(out), "--base-k", "12",
                     "--base-n-r", "34", "--p-max", "2", "--no-instrumented"]) == 0
        lines = (out / "include.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 4  # two P points x four algorithms
