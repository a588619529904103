"""Tests for src/reporting.py."""

import json

import pytest

from src.errors import ReportIOError
from src.harness import REPORT_FIELDS, ReportRow
from src.reporting import aggregate, emit_report, read_report


@pytest.fixture
def rows():
    return [
        ReportRow("loss_ratio", "gauss", "supervised", r, -1, 10, 50, "train_all",
                  0.1 + r / 3, 0.2, 1.0, True, 0.0)
        for r in range(3)
    ] + [
        ReportRow("loss_ratio", "gauss", "projection", r, -1, 10, 50, "train_all",
                  0.1 + r / 7, 0.15, 0.9 + r / 10, r != 1, 1.25)
        for r in range(3)
    ]


class TestEmitReport:
    def test_csv_header_and_rows(self, rows, tmp_path):
        path = emit_report(rows, "csv", tmp_path / "out" / "report.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(REPORT_FIELDS)
        assert len(lines) == len(rows) + 1

    def test_csv_round_trip(self, rows, tmp_path):
        path = emit_report(rows, "csv", tmp_path / "report.csv")
        assert read_report(path) == rows

    def test_json_round_trip(self, rows, tmp_path):
        path = emit_report(rows, "json", tmp_path / "report.json")
        assert read_report(path) == rows
        assert len(json.loads(path.read_text(encoding="utf-8"))) == len(rows)

    def test_byte_identical_for_equal_rows(self, rows, tmp_path):
        a = emit_report(rows, "csv", tmp_path / "a.csv")
        b = emit_report(list(rows), "csv", tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            emit_report([], "csv", tmp_path / "x.csv")

    def test_unknown_format(self, rows, tmp_path):
        with pytest.raises(ValueError, match="format"):
            emit_report(rows, "xlsx", tmp_path / "x.xlsx")

    def test_unwritable_path(self, rows, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("", encoding="utf-8")
        with pytest.raises(ReportIOError):
            emit_report(rows, "csv", blocker / "report.csv")


class TestReadReport:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportIOError):
            read_report(tmp_path / "nope.csv")

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(ValueError):
            read_report(tmp_path / "report.txt")


class TestAggregate:
    def test_groups_and_means(self, rows):
        summary = aggregate(rows).set_index("estimator")
        assert summary.loc["supervised", "n"] == 3
        assert summary.loc["supervised", "ratio_mean"] == pytest.approx(1.0)
        assert summary.loc["projection", "ratio_max"] == pytest.approx(1.1)
        assert summary.loc["projection", "frac_worse"] == pytest.approx(1 / 3)
        assert summary.loc["supervised", "frac_worse"] == 0.0

    def test_standard_error(self, rows):
        summary = aggregate(rows).set_index("estimator")
        # losses 0.1, 0.1 + 1/3, 0.1 + 2/3: sample std 1/3
        assert summary.loc["supervised", "loss_se"] == pytest.approx((1 / 3) / 3**0.5)
