"""Incremental reader for metrics CSV files that are rewritten while training runs."""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)


class MetricsTailer:
    """Read only the rows added since the last call (tail-like behavior).

    Training replaces metrics files atomically after every epoch, so a new
    inode or a shrinking file means re-reading from the top and skipping
    the rows already delivered.
    """

    def __init__(self):
        """Initialize with empty position, header and row-count tracking."""
        self.file_positions: Dict[str, tuple[int, int]] = {}
        self.headers: Dict[str, List[str]] = {}
        self.delivered: Dict[str, int] = {}

    def get_new_rows(self, file_path: Path) -> List[Dict[str, float]]:
        """Get rows added since the last read.

        Args:
            file_path: Path to a metrics CSV

        Returns:
            List[Dict[str, float]]: New rows keyed by column name
        """
        if not file_path.exists():
            return []

        file_key = str(file_path)

        try:
            stat = file_path.stat()
            current_size = stat.st_size
            current_inode = stat.st_ino

            last_position, last_inode = self.file_positions.get(file_key, (0, None))
            replaced = last_inode is not None and (last_inode != current_inode or current_size < last_position)
            if replaced:
                last_position = 0
                self.headers.pop(file_key, None)

            with open(file_path, "rb") as f:
                f.seek(last_position)
                data = f.read()

            end = data.rfind(b"\n") + 1
            self.file_positions[file_key] = (last_position + end, current_inode)
            lines = data[:end].decode("utf-8", errors="ignore").splitlines()

            if file_key not in self.headers:
                if not lines:
                    return []
                self.headers[file_key] = next(csv.reader([lines[0]]))
                lines = lines[1:]
            header = self.headers[file_key]

            rows = []
            for values in csv.reader(lines):
                if len(values) != len(header):
                    logger.debug(f"skipping malformed row in {file_path}: {values}")
                    continue
                rows.append({key: float(value) for key, value in zip(header, values)})

            if replaced:
                skip = self.delivered.get(file_key, 0)
                new_rows = rows[skip:] if len(rows) >= skip else rows
                self.delivered[file_key] = len(rows)
                return new_rows
            self.delivered[file_key] = self.delivered.get(file_key, 0) + len(rows)
            return rows

        except (IOError, OSError, ValueError) as e:
            logger.debug(f"cannot tail {file_path}: {e}")
            return []

    def reset(self, file_path: Optional[Path] = None):
        """Reset tracking for a file or all files.

        Args:
            file_path: Optional path to specific file. If None, resets all files.
        """
        if file_path:
            file_key = str(file_path)
            self.file_positions.pop(file_key, None)
            self.headers.pop(file_key, None)
            self.delivered.pop(file_key, None)
        else:
            self.file_positions.clear()
            self.headers.clear()
            self.delivered.clear()
