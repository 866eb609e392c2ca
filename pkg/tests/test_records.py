"""
モニタ記録・状態ファイルの入出力テスト
"""
import csv

import numpy as np
import pytest

from services.initial_data import circle_state, sine_state
from services.monitors import COLUMNS, CtFit, MonitorRecord, Slack, Verdict
from services.records import (
    build_summary, format_value, parse_value, read_monitor_csv, read_summary, slacks_from_summary,
    write_monitor_csv, write_summary,
)
from services.state_io import read_state, write_field_tables, write_state
from services.surface import GraphState, ParametricState
from utils.errors import InvalidInput
from utils.numerics import Signature, SignatureKind
from utils.pathsafe import sanitize_filename

TWO_PI = 2.0 * np.pi


class TestValues:
    def test_format(self):
        assert format_value(None) == ""
        assert float(format_value(0.1)) == 0.1
        assert float(format_value(1.0 / 3.0)) == 1.0 / 3.0

    def test_parse(self):
        assert parse_value("  ") is None
        assert parse_value("2.5") == 2.5


class TestMonitorCsv:
    def test_round_trip_keeps_blanks(self, tmp_path):
        records = [MonitorRecord(t=0.0, sup_B2=1.0 / 3.0, gauss_radius_sup=0.25),
                   MonitorRecord(t=0.1, sup_B2=0.3, res_g=1e-9)]
        path = write_monitor_csv(records, tmp_path / "monitors.csv")
        assert read_monitor_csv(path) == records

    def test_header(self, tmp_path):
        path = write_monitor_csv([MonitorRecord(t=0.0)], tmp_path / "monitors.csv")
        with open(path, encoding='utf-8') as f:
            assert next(csv.reader(f)) == COLUMNS

    def test_bad_header(self, tmp_path):
        path = tmp_path / "monitors.csv"
        path.write_text("t,foo\n0,1\n", encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_monitor_csv(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "monitors.csv"
        path.write_text(",".join(COLUMNS) + "\n" + "0,abc" + "," * (len(COLUMNS) - 2) + "\n", encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_monitor_csv(path)

    def test_missing_time(self, tmp_path):
        path = tmp_path / "monitors.csv"
        path.write_text(",".join(COLUMNS) + "\n" + "," * (len(COLUMNS) - 1) + "\n", encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_monitor_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInput):
            read_monitor_csv(tmp_path / "none.csv")


class TestSummary:
    def summary(self):
        verdicts = {"sup_B2": Verdict(monitor="sup_B2", predicted=True, holds=True, worst_excess=-0.1, samples=3)}
        slacks = {"sup_B2": Slack(relative=1e-6), "gauss_radius_sup": Slack(absolute=5e-3, reference="initial")}
        return build_summary("reached_t_end", "", 10, 0.5, ["sup_B2"], verdicts, slacks,
                             fit=CtFit(c=0.1, decay0=1.0, bound=2.0), extra={"t_end": 0.5})

    def test_round_trip(self, tmp_path):
        summary = self.summary()
        path = write_summary(summary, tmp_path / "summary.json")
        loaded = read_summary(path)
        assert loaded == summary
        assert loaded["ct_fit"]["holds"] is True
        assert loaded["t_end"] == 0.5
        assert loaded["violations"] == []

    def test_slacks(self, tmp_path):
        loaded = read_summary(write_summary(self.summary(), tmp_path / "summary.json"))
        slacks = slacks_from_summary(loaded)
        assert slacks["gauss_radius_sup"] == Slack(absolute=5e-3, reference="initial")

    def test_missing_key(self, tmp_path):
        path = tmp_path / "summary.json"
        path.write_text('{"predicted": []}', encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_summary(path)

    def test_broken_json(self, tmp_path):
        path = tmp_path / "summary.json"
        path.write_text('{', encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_summary(path)


class TestStateFiles:
    def test_graph(self, tmp_path):
        state = sine_state(Signature(2, 1), (5, 4), (TWO_PI, 3.0), 0.2)
        state = GraphState(state.sig, state.sizes, state.periods, state.values, np.array([[0.1, -0.2]]), 0.25)
        loaded = read_state(write_state(state, tmp_path, "final"))
        assert isinstance(loaded, GraphState)
        assert loaded.sizes == (5, 4)
        assert loaded.periods == pytest.approx((TWO_PI, 3.0))
        assert loaded.t == 0.25
        assert np.array_equal(loaded.values, state.values)
        assert np.array_equal(loaded.slope, state.slope)

    def test_parametric(self, tmp_path):
        state = circle_state(Signature(1, 2), 12, 1.5)
        loaded = read_state(write_state(state, tmp_path))
        assert isinstance(loaded, ParametricState)
        assert np.array_equal(loaded.values, state.values)
        assert np.array_equal(loaded.lattice, state.lattice)

    def test_pseudo_kind(self, tmp_path):
        sig = Signature(1, 1, SignatureKind.PSEUDO)
        loaded = read_state(write_state(sine_state(sig, (6,), (TWO_PI,), 0.3), tmp_path))
        assert loaded.sig == sig

    def test_missing_row(self, tmp_path):
        header = write_state(sine_state(Signature(1, 1), (6,), (TWO_PI,), 0.3), tmp_path)
        table = tmp_path / "state.csv"
        lines = table.read_text(encoding='utf-8').splitlines()
        table.write_text("\n".join(lines[:-1]) + "\n", encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_state(header)

    def test_negative_index(self, tmp_path):
        header = write_state(sine_state(Signature(1, 1), (6,), (TWO_PI,), 0.3), tmp_path)
        table = tmp_path / "state.csv"
        lines = table.read_text(encoding='utf-8').splitlines()
        # 最後の行の 5 を -1 にすると折り返して同じ格子点を指す
        lines[-1] = "-1" + lines[-1][lines[-1].index(","):]
        table.write_text("\n".join(lines) + "\n", encoding='utf-8')
        with pytest.raises(InvalidInput, match="負の"):
            read_state(header)

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "state.json"
        path.write_text('{"format": "other"}', encoding='utf-8')
        with pytest.raises(InvalidInput):
            read_state(path)

    def test_field_tables(self, tmp_path):
        fields = {"norm_B2": np.arange(6.0).reshape(3, 2)}
        written = write_field_tables(fields, (3, 2), (3.0, 1.0), tmp_path / "fields", prefix="t0")
        assert [p.name for p in written] == ["t0_norm_B2.csv"]
        with open(written[0], encoding='utf-8') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["i1", "i2", "x1", "x2", "norm_B2"]
        assert rows[1 + 2 * 1 + 1] == ["1", "1", "1", "0.5", "3"]


@pytest.mark.parametrize("name,expected", [
    ("final state", "final_state"),
    ("a/b:c", "a_b_c"),
    ("..", "unnamed"),
])
def test_sanitize_filename(name, expected):
    assert sanitize_filename(name) == expected
