"""
コマンドラインのテスト
"""
import json

import pytest

from main import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, run_cli
from services.initial_data import sine_state
from services.records import read_monitor_csv, read_summary, write_summary
from services.state_io import write_state
from utils.numerics import Signature


def write_config(directory, **sections) -> str:
    data = {
        "signature": {"m": 1, "n": 2},
        "grid": {"sizes": [8]},
        "flow": {"t_end": 0.01},
    }
    data.update(sections)
    path = directory / "run.json"
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


@pytest.fixture
def flat_run(tmp_path):
    """平面（不動点）のランの出力フォルダ"""
    outdir = tmp_path / "out"
    assert run_cli(["run", "--config", write_config(tmp_path), "--outdir", str(outdir), "--quiet"]) == EXIT_OK
    return outdir


class TestRun:
    def test_flat_fixed_point(self, flat_run):
        records = read_monitor_csv(flat_run / "monitors.csv")
        assert records[0].t == 0.0
        assert records[-1].t == pytest.approx(0.01)
        assert all(r.sup_B2 == 0.0 for r in records)
        summary = read_summary(flat_run / "summary.json")
        assert summary["termination"] == "reached-t-end"
        assert summary["violations"] == []
        assert summary["final_state"] == "final_state.json"
        assert (flat_run / "final_state.csv").exists()
        assert "weighted_sup" in summary["predicted"]

    def test_field_outputs(self, tmp_path):
        config = write_config(
            tmp_path, signature={"m": 2, "n": 1}, grid={"sizes": [8, 8]},
            initial={"generator": "sine", "amplitude": 0.1}, flow={"t_end": 0.001},
            output={"directory": str(tmp_path / "out"), "formats": ["fields", "png"]},
        )
        assert run_cli(["run", "--config", config, "--quiet"]) == EXIT_OK
        assert (tmp_path / "out" / "fields" / "initial_gauss_distance.csv").exists()
        assert (tmp_path / "out" / "images" / "initial_norm_B2_t0.png").exists()
        assert not (tmp_path / "out" / "monitors.csv").exists()

    def test_unknown_key(self, tmp_path):
        config = write_config(tmp_path, grid={"sizes": [8], "spacing": 0.1})
        assert run_cli(["run", "--config", config]) == EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert run_cli(["run", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_weighted_with_large_radius(self, tmp_path):
        config = write_config(tmp_path, ball={"radius": 0.5}, monitors={"enabled": ["sup_B2", "weighted"]},
                              output={"directory": str(tmp_path / "out")})
        assert run_cli(["run", "--config", config]) == EXIT_USAGE

    def test_steep_pseudo_graph(self, tmp_path):
        config = write_config(tmp_path, signature={"m": 1, "n": 1, "kind": "pseudo"},
                              initial={"generator": "sine", "amplitude": 1.2},
                              output={"directory": str(tmp_path / "out")})
        assert run_cli(["run", "--config", config]) == EXIT_NUMERICAL
        summary = read_summary(tmp_path / "out" / "summary.json")
        assert summary["termination"] == "not-space-like"


class TestIdentities:
    def test_pass(self, capsys):
        assert run_cli(["identities", "--samples", "50", "--seed", "3"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert [line.split()[:2] for line in lines] == [
            ["PASS", "trace_inequality"], ["PASS", "commutator_bound"], ["PASS", "H_cauchy"],
            ["PASS", "rperp_expansion"],
        ]

    def test_bad_sample_count(self):
        assert run_cli(["identities", "--samples", "0"]) == EXIT_USAGE


class TestGauss:
    def test_table(self, tmp_path, capsys):
        header = write_state(sine_state(Signature(1, 2), (8,), (6.283185307179586,), 0.2), tmp_path)
        assert run_cli(["gauss", "--state", str(header)]) == EXIT_OK
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
        assert rows[0] == ["i1", "theta1", "rho", "w"]
        assert len(rows) == 9
        assert rows[1][0] == "0"
        assert 0.0 < float(rows[1][3]) <= 1.0

    def test_missing_state(self, tmp_path):
        assert run_cli(["gauss", "--state", str(tmp_path / "none.json")]) == EXIT_USAGE


class TestReport:
    def test_consistent(self, flat_run, tmp_path):
        argv = ["report", "--input", str(flat_run / "monitors.csv"), "--outdir", str(tmp_path / "plots")]
        assert run_cli(argv) == EXIT_OK
        assert (tmp_path / "plots" / "sup_B2.dat").exists()

    def test_tampered_summary(self, flat_run, tmp_path):
        summary = read_summary(flat_run / "summary.json")
        summary["verdicts"]["sup_B2"]["holds"] = False
        write_summary(summary, flat_run / "summary.json")
        argv = ["report", "--input", str(flat_run / "monitors.csv"), "--outdir", str(tmp_path / "plots")]
        assert run_cli(argv) == EXIT_VIOLATION

    def test_missing_input(self, tmp_path):
        argv = ["report", "--input", str(tmp_path / "none.csv"), "--outdir", str(tmp_path / "plots")]
        assert run_cli(argv) == EXIT_USAGE


def test_help():
    assert run_cli(["--help"]) == EXIT_OK


def test_missing_command():
    assert run_cli([]) == EXIT_USAGE
