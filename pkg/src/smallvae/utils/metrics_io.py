"""CSV emission: comma-separated, header row, `%.9g` floats, LF line endings."""

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

from ..errors import OutputError
from ..models.metrics import DensityTable, MetricsLog, SweepReport

logger = logging.getLogger(__name__)

INTEGER_COLUMNS = {"epoch", "spatial", "flat_size", "labels_total"}
SWEEP_COLUMNS = ("spatial", "flat_size", "labels_total", "test_elbo", "test_rmse", "test_accuracy")


def format_value(column: str, value) -> str:
    if column in INTEGER_COLUMNS:
        return str(int(value))
    return "%.9g" % float(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_text_atomic(path: Path | str, text: str) -> Path:
    """Write text to `<path>.tmp` and rename it over path.

    Raises:
        OutputError: On any I/O failure, naming the path
    """
    path = Path(path)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(temp_path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        temp_path.replace(path)
    except OSError as e:
        raise OutputError(path, f"cannot write: {e}") from e
    return path


def write_metrics_csv(path: Path | str, log: MetricsLog) -> Path:
    """One row per epoch in the log's column order; an empty log gives a header-only file."""
    rows = [[format_value(c, row[c]) for c in log.columns] for row in log.rows]
    path = write_text_atomic(path, render_csv(log.columns, rows))
    logger.debug(f"wrote {len(rows)} {log.kind} rows to {path}")
    return path


def read_metrics_csv(path: Path | str, kind: str) -> MetricsLog:
    """Parse a file written by write_metrics_csv back into a MetricsLog."""
    path = Path(path)
    log = MetricsLog(kind)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                log.append(**{key: float(value) for key, value in row.items()})
    except OSError as e:
        raise OutputError(path, f"cannot read: {e}") from e
    except (ValueError, TypeError) as e:
        raise OutputError(path, f"malformed metrics file: {e}") from e
    return log


def write_density_csv(path: Path | str, table: DensityTable) -> Path:
    """Columns: grid, then input_<label> and recon_<label> per location."""
    header: List[str] = ["grid"]
    for label in table.labels:
        header += [f"input_{label}", f"recon_{label}"]
    rows = []
    for i, x in enumerate(table.grid):
        row = [format_value("grid", x)]
        for label in table.labels:
            row.append(format_value("density", table.density_input[label][i]))
            row.append(format_value("density", table.density_recon[label][i]))
        rows.append(row)
    return write_text_atomic(path, render_csv(header, rows))


def write_sweep_report(path: Path | str, report: SweepReport) -> Path:
    rows = [[format_value(c, getattr(row, c)) for c in SWEEP_COLUMNS] for row in report.rows]
    return write_text_atomic(path, render_csv(SWEEP_COLUMNS, rows))
