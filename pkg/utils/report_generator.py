"""
Report generation utilities for evaluation results.
"""
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

from jinja2 import Environment, FileSystemLoader, select_autoescape

from core.evaluator import GRANULARITIES, VIEWS, MetricsReport, render_report
from core.logger import run_logger

PathLike = Union[str, Path]


class HTMLReportGenerator:
    """Generate HTML reports for metrics."""

    def __init__(self, template_dir: Optional[Path] = None):
        self.template_dir = template_dir or Path(__file__).parent / "templates"
        self.env = Environment(
            loader=FileSystemLoader(self.template_dir),
            autoescape=select_autoescape(["html"]),
        )

    def generate_report(self, report: MetricsReport, output_path: PathLike, title: str = "Intent Detection Report") -> str:
        """Render ``report`` to ``output_path``."""
        template = self.env.get_template("metrics_report.html")
        html_content = template.render(
            title=title,
            report_date=datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            n_examples=report.n_examples,
            granularities=GRANULARITIES,
            views=VIEWS,
            metrics={"coarse": report.coarse, "fine": report.fine},
            thresholded=sorted(report.thresholded.items()),
            confusion={granularity: report.confusion.get(granularity, {}) for granularity in GRANULARITIES},
            per_slot={granularity: report.per_slot.get(granularity, []) for granularity in GRANULARITIES},
        )
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(html_content)
        run_logger.artifact_written("HTML report", output_path)
        return str(output_path)


class JSONReportGenerator:
    """Generate JSON reports for metrics."""

    def generate_report(self, report: MetricsReport, output_path: PathLike, title: str = "") -> str:
        render_report(report, output_path)
        return str(output_path)


class ReportManager:
    """Manage report generation for different formats."""

    def __init__(self):
        self.generators = {
            "html": HTMLReportGenerator(),
            "json": JSONReportGenerator(),
        }

    def generate_reports(self, report: MetricsReport, outputs: Dict[str, PathLike]) -> Dict[str, str]:
        """Write ``report`` once per requested format; ``outputs`` maps format to path."""
        report_paths = {}
        for format_name, path in outputs.items():
            if format_name not in self.generators:
                run_logger.warning(f"Unsupported report format: {format_name}")
                continue
            report_paths[format_name] = self.generators[format_name].generate_report(report, path)
        return report_paths

    @property
    def formats(self) -> List[str]:
        return sorted(self.generators)


def render_html_report(report: MetricsReport, path: PathLike, title: str = "Intent Detection Report") -> str:
    return HTMLReportGenerator().generate_report(report, path, title)


# Global report manager instance
report_manager = ReportManager()
