"""Labeled-subset sampling and deterministic minibatch iteration."""

import logging
import queue
import threading
from typing import Iterable, Iterator, Optional, Tuple, TypeVar

import numpy as np

from ..errors import LabelError
from ..models.dataset import BatchPlan, Dataset, LabeledSubset
from ..utils.rng import stream

logger = logging.getLogger(__name__)

Batch = Tuple[np.ndarray, Optional[np.ndarray]]
T = TypeVar("T")


def sample_labeled_subset(ds: Dataset, n_per_class: int, seed: int = 0) -> LabeledSubset:
    """Stratified sample of n_per_class examples from every class present in ds.

    Classes are visited in ascending order and drawn without replacement from
    the "subset" stream of seed.

    Raises:
        LabelError: If ds has no labels or a class has fewer than n_per_class examples
    """
    if ds.labels is None:
        raise LabelError(f"cannot sample a labeled subset from unlabeled {ds.split} data ({ds.source})")
    if n_per_class < 1:
        raise LabelError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = stream(seed, "subset")
    chosen = []
    for label in np.unique(ds.labels):
        members = np.flatnonzero(ds.labels == label)
        if len(members) < n_per_class:
            raise LabelError(f"class {label} has {len(members)} examples, {n_per_class} requested")
        chosen.append(rng.choice(members, size=n_per_class, replace=False))
    indices = np.sort(np.concatenate(chosen))
    logger.debug(f"sampled {len(indices)} labeled examples ({n_per_class} per class, seed {seed})")
    return LabeledSubset(indices=indices, n_per_class=n_per_class, seed=seed)


def epoch_order(n: int, plan: BatchPlan) -> np.ndarray:
    """Example order for plan.epoch; a function of (seed, epoch) only."""
    if not plan.shuffle:
        return np.arange(n)
    return stream(plan.seed, "shuffle", plan.epoch).permutation(n)


def batches(ds: Dataset, plan: BatchPlan) -> Iterator[Batch]:
    """Yield contiguous (images, labels) batches for one epoch."""
    order = epoch_order(len(ds), plan)
    for start in range(0, len(order), plan.batch_size):
        idx = order[start : start + plan.batch_size]
        if plan.drop_last and len(idx) < plan.batch_size:
            break
        images = np.ascontiguousarray(ds.images[idx])
        labels = ds.labels[idx] if ds.labels is not None else None
        yield images, labels


_DONE = object()


def prefetch(items: Iterable[T], depth: int = 2) -> Iterator[T]:
    """Produce items on one background thread, delivered in their original order."""
    if depth < 1:
        yield from items
        return
    buffer: "queue.Queue" = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def worker():
        try:
            for item in items:
                if stop.is_set():
                    return
                buffer.put(item)
            buffer.put(_DONE)
        except BaseException as e:
            buffer.put(e)

    thread = threading.Thread(target=worker, name="smallvae-prefetch", daemon=True)
    thread.start()
    try:
        while True:
            item = buffer.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while thread.is_alive():
            try:
                buffer.get_nowait()
            except queue.Empty:
                thread.join(timeout=0.01)
