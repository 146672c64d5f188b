"""Rich renderables for training curves, sweep reports and dataset summaries."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rich.console import Group
from rich.table import Table
from rich.text import Text

from ..models.dataset import DatasetSummary
from ..models.metrics import SweepReport
from ..utils.formatting import format_count, format_metric, format_percent


def metrics_table(
    rows: Sequence[Dict[str, float]],
    columns: Sequence[str],
    title: str = "",
    max_rows: Optional[int] = None,
) -> Table:
    """Per-epoch rows as a table; only the last max_rows when given."""
    table = Table(title=title or None, show_lines=False, header_style="bold cyan")
    for column in columns:
        table.add_column(column, justify="right")
    shown = rows[-max_rows:] if max_rows else rows
    for row in shown:
        cells = []
        for column in columns:
            value = row.get(column)
            if column == "epoch":
                cells.append(str(int(value)))
            elif column == "test_accuracy" and value is not None:
                cells.append(format_percent(value))
            else:
                cells.append(format_metric(value))
        table.add_row(*cells)
    return table


def sweep_table(report: SweepReport) -> Table:
    """One row per latent size (and labeled budget), failed arms last."""
    table = Table(title="Latent-size sweep", header_style="bold magenta")
    for column in ("latent", "flat size", "labels", "test ELBO", "test RMSE", "accuracy"):
        table.add_column(column, justify="right")
    for row in report.rows:
        table.add_row(
            f"{row.spatial}x{row.spatial}",
            format_count(row.flat_size),
            str(row.labels_total),
            format_metric(row.test_elbo),
            format_metric(row.test_rmse),
            format_percent(row.test_accuracy),
        )
    for flat_size, message in sorted(report.failures.items()):
        table.add_row("-", format_count(flat_size), "-", "-", "-", Text(message, style="red"))
    return table


def summary_table(summaries: Sequence[DatasetSummary]) -> Table:
    """Counts, class histogram and pixel statistics per split."""
    table = Table(title="Dataset", header_style="bold green")
    for column in ("split", "images", "shape", "classes", "pixel mean", "pixel std"):
        table.add_column(column, justify="right")
    for s in summaries:
        classes = " ".join(f"{label}:{count}" for label, count in sorted(s.class_counts.items())) or "unlabeled"
        table.add_row(
            s.split,
            str(s.count),
            "x".join(map(str, s.image_shape)),
            classes,
            format_metric(s.pixel_mean),
            format_metric(s.pixel_std),
        )
    return table


class RunPanel:
    """Live view of a run directory: one table per metrics file seen so far."""

    def __init__(self, run_dir: Path, max_rows: int = 10):
        """Initialize run panel.

        Args:
            run_dir: Directory being monitored
            max_rows: Most recent epochs shown per table
        """
        self.run_dir = run_dir
        self.max_rows = max_rows
        self.rows: Dict[Path, List[Dict[str, float]]] = {}

    def update_rows(self, file_path: Path, new_rows: List[Dict[str, float]]) -> None:
        """Append newly tailed rows for one file."""
        self.rows.setdefault(file_path, []).extend(new_rows)

    def render(self) -> Group:
        """Render every tracked file as a table, sorted by path."""
        if not self.rows:
            return Group(Text(f"waiting for metrics in {self.run_dir}", style="dim"))
        tables = []
        for file_path in sorted(self.rows):
            rows = self.rows[file_path]
            columns = list(rows[0]) if rows else []
            title = str(file_path.relative_to(self.run_dir)) if file_path.is_relative_to(self.run_dir) else str(file_path)
            tables.append(metrics_table(rows, columns, title=title, max_rows=self.max_rows))
        return Group(*tables)
