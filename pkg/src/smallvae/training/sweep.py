"""Latent-size sweep: pretrain, fine-tune and evaluate one arm per spatial size."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import psutil

from ..errors import ConfigError, SmallVaeError
from ..models.config import ExperimentConfig
from ..models.dataset import Dataset, LabeledSubset
from ..models.metrics import DensityTable, MetricsLog, SweepReport, SweepRow
from ..data.sampling import sample_labeled_subset
from ..utils.metrics_io import write_density_csv, write_sweep_report
from ..parsers.config_parser import dump_run_config
from . import pipeline

logger = logging.getLogger(__name__)

THREADS_ENV = "SMALLVAE_THREADS"


def max_workers() -> int:
    """Worker cap: $SMALLVAE_THREADS, else the physical core count, else 1.

    Raises:
        ConfigError: If SMALLVAE_THREADS is set but not a positive integer
    """
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return psutil.cpu_count(logical=False) or 1


@dataclass
class ArmResult:
    """Outcome of one sweep arm.

    Attributes:
        spatial: Latent spatial size
        flat_size: Flattened latent size
        rows: Report rows, one per labeled budget
        pretrain_log: Pre-training curve
        finetune_log: Fine-tuning curve of the default budget
        density: Input-vs-reconstruction densities
        error: Failure message, None on success
    """

    spatial: int
    flat_size: int
    rows: List[SweepRow] = field(default_factory=list)
    pretrain_log: Optional[MetricsLog] = None
    finetune_log: Optional[MetricsLog] = None
    density: Optional[DensityTable] = None
    error: Optional[str] = None


def arm_dir(out_dir: Path, flat_size: int) -> Path:
    return out_dir / f"latent_{flat_size}"


def run_arm(
    cfg: ExperimentConfig,
    spatial: int,
    train: Dataset,
    test: Dataset,
    subset: LabeledSubset,
    out_dir: Optional[Path] = None,
    budgets: Sequence[int] = (),
) -> ArmResult:
    """Pretrain → fine-tune → evaluate for one latent spatial size.

    Library errors, ValueError and FloatingPointError are captured in
    ArmResult.error so other arms continue.
    """
    arm_cfg = cfg.with_spatial(spatial)
    flat = arm_cfg.latent.flat_size
    result = ArmResult(spatial=spatial, flat_size=flat)
    target = arm_dir(out_dir, flat) if out_dir is not None else None
    try:
        if target is not None:
            dump_run_config(arm_cfg, target / "config_resolved.toml")
        model, pretrain_log = pipeline.pretrain(arm_cfg, train, test, out_dir=target)
        result.pretrain_log = pretrain_log
        final = pretrain_log.last()
        head, finetune_log = pipeline.finetune(arm_cfg, model, train, subset, test, out_dir=target)
        result.finetune_log = finetune_log
        result.rows.append(
            SweepRow(
                spatial=spatial,
                flat_size=flat,
                test_elbo=final["test_total"],
                test_rmse=final["test_rmse"],
                test_accuracy=pipeline.evaluate_classifier(model, head, test),
                labels_total=len(subset),
            )
        )
        for total, (budget_head, _, budget_subset) in pipeline.finetune_budgets(
            arm_cfg, model, train, test, budgets
        ).items():
            result.rows.append(
                SweepRow(
                    spatial=spatial,
                    flat_size=flat,
                    test_elbo=final["test_total"],
                    test_rmse=final["test_rmse"],
                    test_accuracy=pipeline.evaluate_classifier(model, budget_head, test),
                    labels_total=len(budget_subset),
                )
            )
        result.density = pipeline.density_table(model, test, arm_cfg)
        if target is not None:
            write_density_csv(target / "density.csv", result.density)
    except (SmallVaeError, ValueError, FloatingPointError) as e:
        logger.warning(f"sweep arm latent {flat} failed: {e}")
        result.error = f"{type(e).__name__}: {e}"
    return result


def sweep(
    cfg: ExperimentConfig,
    train: Dataset,
    test: Dataset,
    spatial_sizes: Optional[Sequence[int]] = None,
    out_dir: Optional[Path | str] = None,
    budgets: Optional[Sequence[int]] = None,
) -> SweepReport:
    """Run every arm with the same seeds and the same labeled subset.

    Arms run concurrently when cfg.sweep.parallel is set, capped by
    max_workers(); rows are reported in spatial_sizes order either way.
    """
    sizes = list(spatial_sizes if spatial_sizes is not None else cfg.sweep.spatial_sizes)
    budgets = list(budgets if budgets is not None else cfg.sweep.label_budgets)
    out = Path(out_dir) if out_dir is not None else None
    subset = sample_labeled_subset(train, cfg.finetune.labels_per_class, cfg.finetune.seed)

    def run(spatial: int) -> ArmResult:
        return run_arm(cfg, spatial, train, test, subset, out, budgets)

    if cfg.sweep.parallel and len(sizes) > 1:
        workers = min(len(sizes), max_workers())
        logger.info(f"running {len(sizes)} sweep arms on {workers} threads")
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="smallvae-arm") as pool:
            results = list(pool.map(run, sizes))
    else:
        results = [run(spatial) for spatial in sizes]

    report = SweepReport()
    for result in results:
        if result.error is not None:
            report.failures[result.flat_size] = result.error
            continue
        report.rows.extend(result.rows)
        report.pretrain_logs[result.flat_size] = result.pretrain_log
        report.finetune_logs[result.flat_size] = result.finetune_log
        report.densities[result.flat_size] = result.density
    if out is not None:
        write_sweep_report(out / "sweep_report.csv", report)
    logger.info(f"sweep finished: {len(report.rows)} rows, {len(report.failures)} failed arms")
    return report

