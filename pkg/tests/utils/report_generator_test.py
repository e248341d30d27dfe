"""
Tests for HTML and JSON metric reports.
"""
import json

import pytest

from core.evaluator import MetricsReport
from utils.report_generator import ReportManager, render_html_report


@pytest.fixture
def report():
    metrics = {
        "primary": {"accuracy": 0.875, "macro_f1": 0.8},
        "average": {"accuracy": 0.75, "macro_f1": 0.7},
    }
    return MetricsReport(
        n_examples=8,
        coarse=metrics,
        fine=metrics,
        thresholded={
            "0.50": {"coarse": {"primary": 0.75, "average": 0.625}, "fine": {"primary": 0.5, "average": 0.5}}
        },
        confusion={"coarse": {"<alarm>": {"<alarm>": 7, "reminder": 1}}, "fine": {}},
    )


@pytest.mark.unit
class TestReports:
    """Report rendering."""

    def test_html_contains_metrics(self, report, tmp_path):
        path = tmp_path / "report.html"
        render_html_report(report, path, title="Toy run")
        html = path.read_text(encoding="utf-8")
        assert "<title>Toy run</title>" in html
        assert "87.5%" in html
        assert "0.6250" in html

    def test_html_escapes_labels(self, report, tmp_path):
        path = tmp_path / "report.html"
        render_html_report(report, path)
        html = path.read_text(encoding="utf-8")
        assert "&lt;alarm&gt;" in html
        assert "<alarm>" not in html

    def test_manager_writes_each_format(self, report, tmp_path):
        manager = ReportManager()
        paths = manager.generate_reports(
            report, {"json": tmp_path / "m.json", "html": tmp_path / "m.html", "pdf": tmp_path / "m.pdf"}
        )
        assert sorted(paths) == ["html", "json"]
        assert json.loads((tmp_path / "m.json").read_text(encoding="utf-8")) == report.to_dict()
        assert not (tmp_path / "m.pdf").exists()
        assert manager.formats == ["html", "json"]

    def test_html_lists_each_intent(self, report, tmp_path):
        slot = {"accuracy": 0.5, "macro_f1": 0.25}
        report.per_slot = {"coarse": [slot, slot], "fine": [slot, slot]}
        path = tmp_path / "report.html"
        render_html_report(report, path)
        html = path.read_text(encoding="utf-8")
        assert "Intent 2" in html
        assert "0.2500" in html
