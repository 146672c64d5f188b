"""Command-line entry point for smallvae."""

import argparse
import logging
import queue
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.live import Live
from rich.logging import RichHandler

from . import __version__
from .data.sampling import sample_labeled_subset
from .data.synthetic import synth_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DomainError,
    GradientError,
    LabelError,
    NonFiniteError,
    OutputError,
    ShapeError,
)
from .models.config import ExperimentConfig, full_scale
from .models.dataset import Dataset, DatasetSummary
from .models.metrics import FINETUNE_COLUMNS, PRETRAIN_COLUMNS
from .parsers.cifar_parser import load_cifar10
from .parsers.config_parser import build_config, dump_run_config, load_run_config
from .training import pipeline
from .training.sweep import sweep
from .utils.checkpoint import load_checkpoint
from .utils.metrics_io import write_density_csv
from .watchers.metrics_tailer import MetricsTailer
from .watchers.run_watcher import RunWatcher, is_metrics_file
from .widgets.metrics_table import RunPanel, metrics_table, summary_table, sweep_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (DataError, CheckpointError, ConfigError, OutputError, LabelError, ShapeError)
NUMERIC_ERRORS = (NonFiniteError, GradientError, DomainError)

_handler: Optional[logging.Handler] = None


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(verbose: bool = False) -> None:
    """Route library logging through a RichHandler on stderr."""
    global _handler
    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)
    _handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    _handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(_handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="smallvae",
        description="Dense-net VAE pre-training and frozen-encoder fine-tuning",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  smallvae pretrain --config run.toml --data ./cifar --out ./run1
  smallvae finetune --checkpoint run1/last.ckpt --labels-per-class 100
  smallvae sweep --synthetic two-gaussians --sizes 2,3 --out ./toy
  smallvae sweep --full --data ./cifar --out ./full --parallel
  smallvae eval --checkpoint run1/last.ckpt --data ./cifar
  smallvae inspect-data --data ./cifar
  smallvae monitor --run ./run1
        """,
    )
    parser.add_argument("--version", action="version", version=f"smallvae {__version__}")

    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run file")
    common.add_argument("--data", type=Path, help="CIFAR-10 directory with the six .bin batch files")
    common.add_argument(
        "--synthetic",
        choices=["constant", "gradient-patterns", "two-gaussians"],
        help="Use a generated dataset instead of CIFAR-10",
    )
    common.add_argument("--out", type=Path, help="Run directory (default: output_dir from the config)")
    common.add_argument("--seed", type=int, help="Seed for every random stream")
    common.add_argument("--dtype", choices=["float32", "float64"])
    common.add_argument("--limit-train", type=int, metavar="N", help="Use the first N training images")
    common.add_argument("--limit-test", type=int, metavar="N", help="Use the first N test images")
    common.add_argument("--latent-channels", type=int)
    common.add_argument("--latent-spatial", type=int)
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("pretrain", parents=[common], help="Pre-train the VAE")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--recon", choices=["gaussian", "bernoulli"])
    p.add_argument("--schedule", choices=["plateau", "constant"], help="Learning-rate schedule")
    p.add_argument("--resume", type=Path, metavar="CKPT", help="Continue from a last.ckpt")

    f = sub.add_parser("finetune", parents=[common], help="Fine-tune a classifier on a frozen encoder")
    f.add_argument("--checkpoint", type=Path, required=True, metavar="CKPT")
    f.add_argument("--labels-per-class", type=int)
    f.add_argument("--epochs", type=int)
    f.add_argument("--lr", type=float)
    f.add_argument("--batch-size", type=int)
    f.add_argument("--budgets", type=_int_list, metavar="N,N,...", help="Total labeled counts to iterate")

    s = sub.add_parser("sweep", parents=[common], help="Pretrain and fine-tune across latent sizes")
    s.add_argument("--sizes", type=_int_list, metavar="S,S,...", help="Latent spatial sizes (default 8,10,12)")
    s.add_argument("--budgets", type=_int_list, metavar="N,N,...", help="Total labeled counts to iterate")
    s.add_argument("--epochs", type=int, help="Pre-training epochs")
    s.add_argument("--finetune-epochs", type=int)
    s.add_argument("--labels-per-class", type=int)
    s.add_argument("--parallel", action="store_true", help="Run arms concurrently ($SMALLVAE_THREADS caps workers)")
    s.add_argument("--full", action="store_true", help="Full-scale reference setup (long-running)")

    e = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on the test split")
    e.add_argument("--checkpoint", type=Path, required=True, metavar="CKPT")
    e.add_argument("--head", type=Path, metavar="CKPT", help="Fine-tune checkpoint holding a classifier head")

    sub.add_parser("inspect-data", parents=[common], help="Counts, class histogram and pixel statistics")

    m = sub.add_parser("monitor", help="Live table of a run directory's metrics")
    m.add_argument("--run", type=Path, required=True, metavar="DIR")
    m.add_argument("--once", action="store_true", help="Print one snapshot and exit")
    m.add_argument("--refresh", type=float, default=1.0, metavar="SECONDS")
    m.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted config keys set by command-line flags."""
    values: Dict[str, Any] = {
        "data.limit_train": args.limit_train,
        "data.limit_test": args.limit_test,
        "latent.channels": args.latent_channels,
        "latent.spatial": args.latent_spatial,
        "dtype": args.dtype,
    }
    if args.out is not None:
        values["output_dir"] = str(args.out)
    if args.data is not None:
        values["data.source"] = "cifar10"
        values["data.dir"] = str(args.data)
    if args.synthetic is not None:
        values["data.source"] = "synthetic"
        values["data.synthetic_kind"] = args.synthetic
    if args.seed is not None:
        values.update({"pretrain.seed": args.seed, "finetune.seed": args.seed, "data.seed": args.seed})

    command = args.command
    if command == "pretrain":
        values.update(
            {
                "pretrain.epochs": args.epochs,
                "pretrain.lr": args.lr,
                "pretrain.batch_size": args.batch_size,
                "pretrain.weight_decay": args.weight_decay,
                "pretrain.recon": args.recon,
                "pretrain.schedule": args.schedule,
            }
        )
    elif command == "finetune":
        values.update(
            {
                "finetune.labels_per_class": args.labels_per_class,
                "finetune.epochs": args.epochs,
                "finetune.lr": args.lr,
                "finetune.batch_size": args.batch_size,
            }
        )
    elif command == "sweep":
        values.update(
            {
                "sweep.spatial_sizes": args.sizes,
                "sweep.label_budgets": args.budgets,
                "pretrain.epochs": args.epochs,
                "finetune.epochs": args.finetune_epochs,
                "finetune.labels_per_class": args.labels_per_class,
            }
        )
        if args.parallel:
            values["sweep.parallel"] = True
    return {key: value for key, value in values.items() if value is not None}


def resolve_config(args: argparse.Namespace, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Defaults < checkpoint/config file < command-line flags."""
    if base is not None:
        return build_config(base.model_dump(mode="json"), _overrides(args))
    return load_run_config(args.config, _overrides(args))


def load_data(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Train and test splits for cfg.data.

    Raises:
        DataError: If CIFAR-10 is selected without a directory or its files are invalid
    """
    data = cfg.data
    dtype = np.dtype(cfg.dtype)
    if data.source == "synthetic":
        size, channels = cfg.arch.image_size, cfg.arch.in_channels
        train = synth_dataset(data.synthetic_kind, data.synthetic_train, size, data.seed, channels, "train", dtype)
        test = synth_dataset(data.synthetic_kind, data.synthetic_test, size, data.seed, channels, "test", dtype)
        return train.limit(data.limit_train), test.limit(data.limit_test)
    if not data.dir:
        raise DataError("<unset>", "no CIFAR-10 directory given; pass --data or set data.dir")
    return load_cifar10(data.dir, dtype, data.limit_train, data.limit_test)


def _start_run(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    dump_run_config(cfg, out / "config_resolved.toml")
    return out


def cmd_pretrain(args: argparse.Namespace, console: Console) -> int:
    resume = None
    if args.resume is not None:
        resume, ckpt_cfg = pipeline.load_training_state(args.resume)
        cfg = resolve_config(args, ckpt_cfg)
        logger.info(f"resuming from {args.resume} at epoch {resume.epoch}")
    else:
        cfg = resolve_config(args)
    train, test = load_data(cfg)
    out = _start_run(cfg)
    model, log = pipeline.pretrain(cfg, train, test, resume=resume, out_dir=out)
    write_density_csv(out / "density.csv", pipeline.density_table(model, test, cfg))
    console.print(metrics_table(log.rows, PRETRAIN_COLUMNS, title="Pre-training", max_rows=10))
    console.print(f"checkpoint: {out / 'last.ckpt'}")
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace, console: Console) -> int:
    model, _, _, ckpt_cfg, _ = load_checkpoint(args.checkpoint)
    cfg = resolve_config(args, ckpt_cfg)
    train, test = load_data(cfg)
    out = _start_run(cfg)
    if args.budgets:
        results = pipeline.finetune_budgets(cfg, model, train, test, args.budgets, out_dir=out)
        for total, (head, log, _) in results.items():
            console.print(metrics_table(log.rows, FINETUNE_COLUMNS, title=f"Fine-tuning, {total} labels", max_rows=5))
        return EXIT_OK
    subset = sample_labeled_subset(train, cfg.finetune.labels_per_class, cfg.finetune.seed)
    head, log = pipeline.finetune(cfg, model, train, subset, test, out_dir=out)
    console.print(metrics_table(log.rows, FINETUNE_COLUMNS, title=f"Fine-tuning, {len(subset)} labels", max_rows=10))
    console.print(f"test accuracy: {pipeline.evaluate_classifier(model, head, test):.4f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, console: Console) -> int:
    cfg = resolve_config(args)
    if args.full:
        cfg = full_scale(cfg)
        logger.info("full-scale mode: 100 epochs per arm on all of CIFAR-10; expect a long run")
    train, test = load_data(cfg)
    out = _start_run(cfg)
    report = sweep(cfg, train, test, out_dir=out)
    console.print(sweep_table(report))
    if not report.rows and report.failures:
        logger.error("every sweep arm failed")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, console: Console) -> int:
    model, _, metadata, ckpt_cfg, head = load_checkpoint(args.checkpoint)
    cfg = resolve_config(args, ckpt_cfg)
    if args.head is not None:
        _, _, _, _, head = load_checkpoint(args.head)
        if head is None:
            raise CheckpointError(args.head, "no classifier head in checkpoint")
    _, test = load_data(cfg)
    _start_run(cfg)
    epoch = int(metadata.get("epoch", 0))
    results = pipeline.evaluate(model, test, cfg, epoch=epoch)
    if head is not None:
        results["test_accuracy"] = pipeline.evaluate_classifier(model, head, test)
    console.print(metrics_table([results], list(results), title=f"Evaluation of {args.checkpoint}"))
    return EXIT_OK


def cmd_inspect_data(args: argparse.Namespace, console: Console) -> int:
    cfg = resolve_config(args)
    train, test = load_data(cfg)
    console.print(summary_table([DatasetSummary.of(train), DatasetSummary.of(test)]))
    return EXIT_OK


def _scan(tailer: MetricsTailer, panel: RunPanel, paths: Sequence[Path]) -> None:
    for path in paths:
        rows = tailer.get_new_rows(path)
        if rows:
            panel.update_rows(path, rows)


def cmd_monitor(args: argparse.Namespace, console: Console) -> int:
    run_dir: Path = args.run
    if not run_dir.is_dir():
        raise DataError(run_dir, "run directory not found")
    tailer = MetricsTailer()
    panel = RunPanel(run_dir)
    _scan(tailer, panel, sorted(p for p in run_dir.rglob("*.csv") if is_metrics_file(p)))
    if args.once:
        console.print(panel.render())
        return EXIT_OK

    changed: "queue.Queue[Path]" = queue.Queue()
    with RunWatcher(run_dir, changed.put), Live(panel.render(), console=console, auto_refresh=False) as live:
        try:
            while True:
                time.sleep(args.refresh)
                pending = set()
                while not changed.empty():
                    pending.add(changed.get_nowait())
                if pending:
                    _scan(tailer, panel, sorted(pending))
                    live.update(panel.render(), refresh=True)
        except KeyboardInterrupt:
            pass
    return EXIT_OK


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "inspect-data": cmd_inspect_data,
    "monitor": cmd_monitor,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code.

    Exit codes: 0 success, 1 usage error, 2 data/checkpoint/config error,
    3 numeric failure (NaN/Inf, bad gradient, domain error).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(args.verbose)
    console = Console()
    try:
        return COMMANDS[args.command](args, console)
    except DATA_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA
    except NUMERIC_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
