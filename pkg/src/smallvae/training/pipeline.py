"""Pre-training, freezing, fine-tuning and evaluation."""

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Graph, Node, backward, ops
from ..data.sampling import batches, epoch_order, prefetch, sample_labeled_subset
from ..errors import CheckpointError, FreezeViolation, LabelError, NonFiniteError
from ..models.config import ExperimentConfig
from ..models.dataset import BatchPlan, Dataset, LabeledSubset
from ..models.metrics import DensityTable, MetricsLog
from ..models.vae_model import VaeModel, build_model
from ..nn.networks import ClassifierHead, build_classifier
from ..utils.checkpoint import load_checkpoint, save_checkpoint
from ..utils.formatting import format_duration, format_metric
from ..utils.metrics_io import write_metrics_csv
from ..utils.rng import restore_rng, rng_state, stream
from .density import pixel_density_estimate
from .optim import AdamState, PlateauScheduler, adam_step
from .vae import elbo_loss

logger = logging.getLogger(__name__)

EVAL_BATCH = 256
EpochCallback = Callable[[str, Dict[str, float]], None]


@dataclass
class TrainingState:
    """Everything needed to continue pre-training bit-exactly.

    Attributes:
        model: Parameters after `epoch` epochs
        optimizer: Adam moments, step count and lr
        scheduler: Plateau scheduler state
        noise: Generator for reparameterization noise
        log: Metric rows for epochs 1..epoch
        epoch: Completed epochs
    """

    model: VaeModel
    optimizer: AdamState
    scheduler: PlateauScheduler
    noise: np.random.Generator
    log: MetricsLog
    epoch: int


def numpy_dtype(cfg: ExperimentConfig) -> np.dtype:
    return np.dtype(cfg.dtype)


def evaluate_elbo(
    model: VaeModel,
    ds: Dataset,
    seed: int = 0,
    epoch: int = 0,
    recon: str = "gaussian",
    batch_size: int = EVAL_BATCH,
) -> Tuple[float, float, float]:
    """Per-example (total, kl, recon) over ds, noise from the ("eval-noise", epoch) stream."""
    rng = stream(seed, "eval-noise", epoch)
    sums = np.zeros(3)
    for images, _ in batches(ds, BatchPlan(batch_size, shuffle=False)):
        graph = Graph(recording=False)
        terms = elbo_loss(model, graph.constant(images), rng=rng, recon=recon)
        sums += len(images) * np.asarray(terms.floats())
    total, kl, rec = sums / len(ds)
    return float(total), float(kl), float(rec)


def test_rmse(model: VaeModel, ds: Dataset, batch_size: int = EVAL_BATCH) -> float:
    """sqrt of the mean squared pixel error of decode(mu) over ds."""
    if len(ds) == 0:
        raise ValueError("test_rmse: empty dataset")
    sse = 0.0
    for images, _ in batches(ds, BatchPlan(batch_size, shuffle=False)):
        diff = model.reconstructions(images, batch_size).astype(np.float64) - images
        sse += float(np.sum(diff * diff))
    return math.sqrt(sse / ds.images.size)


def evaluate(model: VaeModel, test: Dataset, cfg: ExperimentConfig, epoch: int = 0) -> Dict[str, float]:
    """Test ELBO terms and RMSE of a trained model."""
    total, kl, rec = evaluate_elbo(model, test, cfg.pretrain.seed, epoch, cfg.pretrain.recon)
    return {"test_total": total, "test_kl": kl, "test_recon": rec, "test_rmse": test_rmse(model, test)}


def initial_state(cfg: ExperimentConfig) -> TrainingState:
    model = build_model(cfg.latent, cfg.arch, cfg.pretrain.seed, numpy_dtype(cfg))
    pt = cfg.pretrain
    return TrainingState(
        model=model,
        optimizer=AdamState.for_params(model.parameters(), lr=pt.lr, weight_decay=pt.weight_decay),
        scheduler=PlateauScheduler(
            lr=pt.lr,
            factor=pt.scheduler_factor,
            patience=pt.scheduler_patience,
            threshold=pt.scheduler_threshold,
            min_lr=pt.min_lr,
        ),
        noise=stream(pt.seed, "noise"),
        log=MetricsLog("pretrain"),
        epoch=0,
    )


def save_training_state(path: Path | str, state: TrainingState, cfg: ExperimentConfig) -> Path:
    metadata = {
        "kind": "pretrain",
        "epoch": str(state.epoch),
        "scheduler": json.dumps(state.scheduler.state(), sort_keys=True),
        "noise_rng": rng_state(state.noise),
        "metrics": json.dumps(state.log.rows),
    }
    return save_checkpoint(path, state.model, state.optimizer, metadata, cfg)


def load_training_state(path: Path | str) -> Tuple[TrainingState, ExperimentConfig]:
    """Restore a pre-training run from its last checkpoint."""
    model, optimizer, metadata, cfg, _ = load_checkpoint(path)
    if optimizer is None:
        optimizer = AdamState.for_params(model.parameters(), lr=cfg.pretrain.lr, weight_decay=cfg.pretrain.weight_decay)
    log = MetricsLog("pretrain")
    try:
        for row in json.loads(metadata.get("metrics", "[]")):
            log.append(**row)
        if "scheduler" in metadata:
            scheduler = PlateauScheduler.from_state(json.loads(metadata["scheduler"]))
        else:
            scheduler = initial_state(cfg).scheduler
        noise = restore_rng(metadata["noise_rng"]) if "noise_rng" in metadata else stream(cfg.pretrain.seed, "noise")
    except (ValueError, TypeError, KeyError) as e:
        raise CheckpointError(path, f"invalid training-state metadata: {e}") from None
    state = TrainingState(model, optimizer, scheduler, noise, log, int(metadata.get("epoch", len(log))))
    return state, cfg


def _train_epoch(state: TrainingState, cfg: ExperimentConfig, train: Dataset, epoch: int) -> Tuple[float, float, float]:
    pt = cfg.pretrain
    params = state.model.parameters()
    sums = np.zeros(3)
    plan = BatchPlan(pt.batch_size, seed=pt.seed, epoch=epoch - 1)
    for step, (images, _) in enumerate(prefetch(batches(train, plan))):
        for p in params:
            p.zero_grad()
        graph = Graph()
        try:
            terms = elbo_loss(state.model, graph.constant(images), rng=state.noise, recon=pt.recon)
        except NonFiniteError as e:
            raise NonFiniteError(e.op, e.index, f"epoch {epoch} batch {step}") from e
        backward(graph, terms.total)
        adam_step(state.optimizer, params)
        values = terms.floats()
        sums += len(images) * np.asarray(values)
        logger.debug(f"epoch {epoch} batch {step}: total={values[0]:.6g} kl={values[1]:.6g} recon={values[2]:.6g}")
    total, kl, rec = sums / len(train)
    return float(total), float(kl), float(rec)


def pretrain(
    cfg: ExperimentConfig,
    train: Dataset,
    test: Dataset,
    resume: Optional[TrainingState] = None,
    out_dir: Optional[Path | str] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> Tuple[VaeModel, MetricsLog]:
    """Train the VAE on the ELBO for cfg.pretrain.epochs epochs.

    After every epoch the test ELBO and test RMSE are evaluated, the RMSE
    drives the plateau scheduler (unless the schedule is "constant"), and
    with out_dir set `last.ckpt` and `metrics_pretrain.csv` are rewritten so
    an interrupted run can resume.

    Args:
        cfg: Experiment configuration
        train: Training images (labels ignored)
        test: Test images
        resume: State to continue from instead of a fresh initialization
        out_dir: Run directory for checkpoint and metrics
        on_epoch: Called with ("pretrain", row) after each epoch

    Raises:
        NonFiniteError: If a loss becomes NaN/Inf (message names epoch and batch)
    """
    state = resume if resume is not None else initial_state(cfg)
    out = Path(out_dir) if out_dir is not None else None
    start = time.monotonic()
    for epoch in range(state.epoch + 1, cfg.pretrain.epochs + 1):
        lr = state.optimizer.lr
        train_total, train_kl, train_recon = _train_epoch(state, cfg, train, epoch)
        test_total, _, _ = evaluate_elbo(state.model, test, cfg.pretrain.seed, epoch, cfg.pretrain.recon)
        rmse = test_rmse(state.model, test)
        if cfg.pretrain.schedule == "plateau":
            state.optimizer.lr = state.scheduler.step(rmse)
        row = dict(
            epoch=epoch,
            train_total=train_total,
            train_kl=train_kl,
            train_recon=train_recon,
            test_total=test_total,
            test_rmse=rmse,
            lr=lr,
        )
        state.log.append(**row)
        state.epoch = epoch
        logger.info(
            f"pretrain epoch {epoch}/{cfg.pretrain.epochs}: train {format_metric(train_total)} "
            f"test {format_metric(test_total)} rmse {format_metric(rmse)} lr {lr:.3g} "
            f"({format_duration(time.monotonic() - start)})"
        )
        if out is not None:
            save_training_state(out / "last.ckpt", state, cfg)
            write_metrics_csv(out / "metrics_pretrain.csv", state.log)
        if on_epoch is not None:
            on_epoch("pretrain", row)
    return state.model, state.log


def cross_entropy(logits: Node, labels: np.ndarray) -> Node:
    """Batch mean of −log softmax(logits)[label].

    Raises:
        LabelError: If a label is outside [0, num_classes)
    """
    labels = np.asarray(labels)
    batch, num_classes = logits.shape
    if labels.shape != (batch,):
        raise LabelError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {batch} rows")
    bad = (labels < 0) | (labels >= num_classes)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise LabelError(f"cross_entropy: label {labels[i]} at index {i} outside [0, {num_classes})")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(batch), labels] = 1
    picked = ops.reduce_sum(ops.mul(logits.graph.constant(onehot), ops.log_softmax(logits)))
    return ops.mul(picked, -1.0 / batch)


def classifier_metrics(head: ClassifierHead, features: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    """(mean cross-entropy, accuracy) of head on precomputed features; ties go to the lowest class."""
    ce_sum, correct = 0.0, 0
    for start in range(0, len(features), EVAL_BATCH):
        graph = Graph(recording=False)
        logits = head(graph.constant(features[start : start + EVAL_BATCH]))
        chunk = labels[start : start + EVAL_BATCH]
        ce_sum += len(chunk) * float(cross_entropy(logits, chunk).value)
        correct += int(np.sum(np.argmax(logits.value, axis=1) == chunk))
    return ce_sum / len(features), correct / len(features)


def evaluate_classifier(model: VaeModel, head: ClassifierHead, test: Dataset) -> float:
    """Accuracy of argmax(head(mu)) against the test labels."""
    if test.labels is None:
        raise LabelError(f"evaluate_classifier: {test.split} data has no labels")
    return classifier_metrics(head, model.features(test.images), test.labels)[1]


def new_head(cfg: ExperimentConfig, model: VaeModel) -> ClassifierHead:
    ft = cfg.finetune
    return build_classifier(
        cfg.latent,
        rng=stream(ft.seed, "head-init"),
        dtype=model.dtype,
        num_classes=ft.num_classes,
        hidden=ft.hidden,
        hidden_threshold=ft.hidden_threshold,
    )


def finetune(
    cfg: ExperimentConfig,
    model: VaeModel,
    train: Dataset,
    subset: LabeledSubset,
    test: Dataset,
    out_dir: Optional[Path | str] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> Tuple[ClassifierHead, MetricsLog]:
    """Freeze the VAE and train a classifier head on encoder mu features.

    Raises:
        LabelError: If train or test has no labels
        FreezeViolation: If any VAE parameter changed during fine-tuning
    """
    if train.labels is None or test.labels is None:
        raise LabelError("finetune: train and test data must be labeled")
    ft = cfg.finetune
    model.freeze()
    before = model.checksums()

    train_features = model.features(train.images[subset.indices])
    train_labels = np.asarray(train.labels[subset.indices])
    test_features = model.features(test.images)
    head = new_head(cfg, model)
    params = head.parameters()
    optimizer = AdamState.for_params(params, lr=ft.lr, weight_decay=ft.weight_decay)
    log = MetricsLog("finetune")

    for epoch in range(1, ft.epochs + 1):
        order = epoch_order(len(train_labels), BatchPlan(ft.batch_size, seed=ft.seed, epoch=epoch - 1))
        ce_sum = 0.0
        for start in range(0, len(order), ft.batch_size):
            idx = order[start : start + ft.batch_size]
            for p in params:
                p.zero_grad()
            graph = Graph()
            loss = cross_entropy(head(graph.constant(train_features[idx])), train_labels[idx])
            backward(graph, loss)
            adam_step(optimizer, params)
            ce_sum += len(idx) * float(loss.value)
        test_ce, accuracy = classifier_metrics(head, test_features, test.labels)
        row = dict(epoch=epoch, train_ce=ce_sum / len(order), test_ce=test_ce, test_accuracy=accuracy, lr=optimizer.lr)
        log.append(**row)
        logger.info(
            f"finetune epoch {epoch}/{ft.epochs}: train_ce {format_metric(row['train_ce'])} "
            f"test_ce {format_metric(test_ce)} accuracy {accuracy:.3f}"
        )
        if on_epoch is not None:
            on_epoch("finetune", row)

    if model.checksums() != before:
        changed = sorted(name for name, digest in model.checksums().items() if before[name] != digest)
        raise FreezeViolation(f"frozen VAE parameters changed during fine-tuning: {changed}")

    if out_dir is not None:
        out = Path(out_dir)
        metadata = {"kind": "finetune", "epoch": str(ft.epochs), "labels_total": str(len(subset))}
        save_checkpoint(out / "head.ckpt", model, None, metadata, cfg, head=head)
        write_metrics_csv(out / "metrics_finetune.csv", log)
    return head, log


def finetune_budgets(
    cfg: ExperimentConfig,
    model: VaeModel,
    train: Dataset,
    test: Dataset,
    budgets: Sequence[int],
    out_dir: Optional[Path | str] = None,
) -> Dict[int, Tuple[ClassifierHead, MetricsLog, LabeledSubset]]:
    """Fine-tune once per total labeled budget, split evenly across the classes of train.

    With out_dir set, each budget writes its artifacts to `budget_<total>/`.
    """
    if train.labels is None:
        raise LabelError("finetune_budgets: training data has no labels")
    classes = len(train.class_counts())
    results = {}
    for total in budgets:
        per_class = max(1, total // classes)
        subset = sample_labeled_subset(train, per_class, cfg.finetune.seed)
        target = Path(out_dir) / f"budget_{total}" if out_dir is not None else None
        head, log = finetune(cfg, model, train, subset, test, out_dir=target)
        results[total] = (head, log, subset)
    return results


def density_table(model: VaeModel, ds: Dataset, cfg: ExperimentConfig) -> DensityTable:
    """Input-vs-reconstruction pixel densities at the configured locations."""
    ds = ds.limit(cfg.density.max_images)
    recons = model.reconstructions(ds.images)
    locations = cfg.density.resolve_locations(ds.image_shape[0], ds.image_shape[1])
    return pixel_density_estimate(
        ds.images, recons, locations, grid_points=cfg.density.grid_points, pooled=cfg.density.pooled
    )
