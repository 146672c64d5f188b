"""Watch a run directory for metrics CSV changes using watchdog."""

import logging
from pathlib import Path
from typing import Callable, Optional

from watchdog.events import FileSystemEvent, FileSystemEventHandler
from watchdog.observers import Observer

logger = logging.getLogger(__name__)

WATCHED_NAMES = ("metrics_pretrain.csv", "metrics_finetune.csv", "sweep_report.csv")


def is_metrics_file(path: Path) -> bool:
    return path.name in WATCHED_NAMES


class MetricsFileHandler(FileSystemEventHandler):
    """Forward changes of metrics CSVs to a callback."""

    def __init__(self, callback: Callable[[Path], None]):
        """Initialize file event handler.

        Args:
            callback: Function to call with the changed metrics file
        """
        super().__init__()
        self.callback = callback

    def _dispatch(self, path: str):
        file_path = Path(path)
        if is_metrics_file(file_path):
            self.callback(file_path)

    def on_modified(self, event: FileSystemEvent):
        if not event.is_directory:
            self._dispatch(event.src_path)

    def on_created(self, event: FileSystemEvent):
        if not event.is_directory:
            self._dispatch(event.src_path)

    def on_moved(self, event: FileSystemEvent):
        # atomic replace shows up as a move of the .tmp file onto the target
        if not event.is_directory:
            self._dispatch(event.dest_path)


class RunWatcher:
    """Watch a run directory (recursively, to include sweep arms)."""

    def __init__(self, run_dir: Path, callback: Callable[[Path], None]):
        """Initialize run watcher.

        Args:
            run_dir: Directory written by pretrain/finetune/sweep
            callback: Function to call when a metrics file changes
        """
        self.run_dir = run_dir
        self.callback = callback
        self.observer: Optional[Observer] = None
        self.handler: Optional[MetricsFileHandler] = None

    def start(self):
        """Start watching for file changes."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.handler = MetricsFileHandler(self.callback)
        self.observer = Observer()
        self.observer.schedule(self.handler, str(self.run_dir), recursive=True)
        self.observer.start()
        logger.debug(f"watching {self.run_dir}")

    def stop(self):
        """Stop watching for file changes."""
        if self.observer:
            self.observer.stop()
            self.observer.join()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
