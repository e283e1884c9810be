#!/usr/bin/env python3
"""
Trainer Module

Mini-batch training with Adam under a learning-rate schedule, evaluation
(top-1, per-class accuracy, confusion matrix), per-epoch history and
checkpointing. Runs are reproducible given the seed: shuffling,
augmentation and initialization all derive from it.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .checkpoint import restore_into, save_checkpoint, save_normalization
from .data import AUGMENTATIONS, BatchIterator, Dataset, Normalization, compute_normalization, normalize
from .errors import DataError, NumericFailureError
from .model import NetworkSpec, ShallowCNN, build_network
from .optim import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, Adam, LrSchedule, cifar_schedule
from .tensor import forward_backward

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "lr", "train_loss", "test_acc")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    scheme: str = "Logarithmic-8"
    num_classes: int = 10
    shortcut: bool = True
    batch_size: int = 128
    epochs: int = 180
    schedule: LrSchedule = field(default_factory=cifar_schedule)
    seed: int = 0
    dataset: str = "cifar10"
    augment: Optional[str] = "cifar"
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    checkpoint_dir: Optional[str] = None
    prefetch: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if self.augment is not None and self.augment not in AUGMENTATIONS:
            raise DataError(f"unknown augmentation '{self.augment}'")
        # Raises ScheduleExhaustedError when the schedule is shorter than the run
        self.schedule.rate(self.epochs)

    def network_spec(self, input_size: int) -> NetworkSpec:
        return NetworkSpec.from_name(self.scheme, num_classes=self.num_classes,
                                     shortcut=self.shortcut, input_size=input_size)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    test_acc: Optional[float] = None


@dataclass
class History:
    """Per-epoch records plus final and best test accuracy."""

    records: List[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [r.train_loss for r in self.records]

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.records[-1].test_acc if self.records else None

    def best(self) -> Optional[EpochRecord]:
        scored = [r for r in self.records if r.test_acc is not None]
        return max(scored, key=lambda r: r.test_acc) if scored else None

    @property
    def best_accuracy(self) -> Optional[float]:
        best = self.best()
        return best.test_acc if best else None

    def write_csv(self, path: str) -> str:
        """epoch,lr,train_loss,test_acc lines; test_acc is empty when not evaluated."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(HISTORY_FIELDS)
            for r in self.records:
                writer.writerow([r.epoch, f"{r.lr:g}", f"{r.train_loss:.6f}",
                                 "" if r.test_acc is None else f"{r.test_acc:.4f}"])
        return path

    def summary(self) -> str:
        best = self.best()
        if best is None:
            return f"final train loss {self.records[-1].train_loss:.4f}" if self.records else "no epochs run"
        return (f"final-epoch accuracy {self.final_accuracy:.2f}% (epoch {self.records[-1].epoch}); "
                f"best-epoch accuracy {best.test_acc:.2f}% (epoch {best.epoch})")


@dataclass
class EvaluationResult:
    """Top-1 accuracy (%), per-class accuracy (%) and the confusion matrix (rows: true class)."""

    accuracy: float
    per_class: np.ndarray
    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def format(self, class_names: Optional[Sequence[str]] = None) -> str:
        k = len(self.per_class)
        names = list(class_names) if class_names else [str(i) for i in range(k)]
        width = max(6, max(len(n) for n in names))
        lines = [f"top-1 accuracy: {self.accuracy:.2f}% over {self.total} images", "", "per-class accuracy:"]
        for name, acc in zip(names, self.per_class):
            lines.append(f"  {name:<{width}}  " + ("     -" if np.isnan(acc) else f"{acc:6.2f}%"))
        lines.append("")
        lines.append("confusion matrix (rows = true, columns = predicted):")
        lines.append(" " * (width + 2) + " ".join(f"{n:>{width}}" for n in names))
        for name, row in zip(names, self.confusion):
            lines.append(f"  {name:<{width}}" + " ".join(f"{v:>{width}d}" for v in row))
        return "\n".join(lines)


def evaluate(model, test: Dataset, batch_size: int = 256) -> EvaluationResult:
    """Classify every test image once, in order, without augmentation."""
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    predictions = np.asarray(model.predict(test.images, batch_size=batch_size), dtype=np.int64)
    k = test.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (test.labels, predictions), 1)

    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, 100.0 * np.diag(confusion) / support, np.nan)
    accuracy = 100.0 * np.trace(confusion) / confusion.sum()
    return EvaluationResult(accuracy=float(accuracy), per_class=per_class, confusion=confusion)


class Trainer:
    """Owns one model and its optimizer state for the duration of a run."""

    def __init__(self, model: ShallowCNN, config: TrainConfig,
                 normalization: Optional[Normalization] = None, progress: bool = True):
        self.model = model
        self.config = config
        self.normalization = normalization
        self.progress = progress
        self.optimizer = Adam(model.params, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        self.history = History()
        self._last_good: Optional[str] = None

    def step(self, images: np.ndarray, labels: np.ndarray, lr: float) -> float:
        """Forward, backward and one Adam update on a batch; returns the batch loss."""
        loss = self.model.loss(images, labels)
        forward_backward(loss, self.model.params)
        self.optimizer.step(lr)
        return loss.item()

    def _checkpoint_path(self, tag: str) -> Optional[str]:
        if not self.config.checkpoint_dir:
            return None
        slug = self.model.spec.name.replace(" ", "_").replace("/", "")
        return os.path.join(self.config.checkpoint_dir, f"{slug}-seed{self.config.seed}-{tag}.lgcv")

    def _save(self, path: str) -> str:
        save_checkpoint(self.model.params, path)
        if self.normalization is not None:
            save_normalization(self.normalization, path)
        return path

    def _run_epoch(self, batches: BatchIterator, epoch: int, lr: float) -> float:
        total, seen = 0.0, 0
        bar = tqdm(batches.epoch(epoch), total=batches.num_batches(), desc=f"epoch {epoch}",
                   leave=False, disable=not self.progress)
        with bar:
            for images, labels in bar:
                loss = self.step(images, labels, lr)
                total += loss * len(labels)
                seen += len(labels)
                bar.set_postfix({"loss": f"{loss:.4f}", "lr": f"{lr:g}"})
        return total / seen

    def train(self, train_set: Dataset, test_set: Optional[Dataset] = None) -> History:
        """Run config.epochs epochs; checkpoints land after every epoch plus a best snapshot."""
        cfg = self.config
        augment = AUGMENTATIONS[cfg.augment] if cfg.augment else None
        # Datasets that went through normalize() are used as they are
        batch_stats = self.normalization if train_set.normalization is None else None
        batches = BatchIterator(train_set, cfg.batch_size, cfg.seed, augment=augment,
                                normalization=batch_stats, prefetch=cfg.prefetch)
        eval_set = test_set
        if test_set is not None and test_set.normalization is None and self.normalization is not None:
            eval_set = normalize(test_set, self.normalization)

        logger.info("training %s for %d epochs (%d batches of %d, seed %d)",
                    self.model.spec.name, cfg.epochs, batches.num_batches(), cfg.batch_size, cfg.seed)
        best_acc = None
        for epoch in range(1, cfg.epochs + 1):
            lr = cfg.schedule.rate(epoch)
            try:
                train_loss = self._run_epoch(batches, epoch, lr)
            except NumericFailureError as e:
                logger.error("numeric failure in epoch %d at %s: %s", epoch, e.node, e)
                if self._last_good is not None:
                    restore_into(self.model.params, self._last_good)
                    logger.error("model restored from last good checkpoint %s", self._last_good)
                raise

            test_acc = evaluate(self.model, eval_set).accuracy if eval_set is not None else None
            self.history.records.append(EpochRecord(epoch, lr, train_loss, test_acc))
            logger.info("epoch %d lr %g loss %.4f acc %s", epoch, lr, train_loss,
                        "-" if test_acc is None else f"{test_acc:.2f}%")

            last = self._checkpoint_path("last")
            if last is not None:
                self._last_good = self._save(last)
                if test_acc is not None and (best_acc is None or test_acc > best_acc):
                    self._save(self._checkpoint_path("best"))
            if test_acc is not None and (best_acc is None or test_acc > best_acc):
                best_acc = test_acc
        return self.history


def train(config: TrainConfig, train_set: Dataset, test_set: Optional[Dataset] = None,
          progress: bool = True) -> Tuple[ShallowCNN, History, Normalization]:
    """Build the network for config, normalize with training statistics and train it."""
    spec = config.network_spec(input_size=train_set.image_shape[1])
    if spec.num_classes != train_set.num_classes:
        raise DataError(f"{config.scheme} built for {spec.num_classes} classes, data has {train_set.num_classes}")
    stats = train_set.normalization or compute_normalization(train_set)
    model = build_network(spec, seed=config.seed)
    trainer = Trainer(model, config, normalization=stats, progress=progress)
    history = trainer.train(train_set, test_set)
    return model, history, stats


def overfit(model: ShallowCNN, images: np.ndarray, labels: np.ndarray, steps: int, lr: float = 1e-3,
            config: Optional[TrainConfig] = None) -> List[float]:
    """Repeated full-batch steps on a fixed subset; returns the loss after each step."""
    trainer = Trainer(model, config or TrainConfig(epochs=1, augment=None), progress=False)
    return [trainer.step(images, labels, lr) for _ in range(steps)]


def config_from_mapping(values: Dict[str, Any], schedule: LrSchedule) -> TrainConfig:
    """TrainConfig from a run configuration mapping (see config.DEFAULTS)."""
    synthetic = values["dataset"] == "synthetic"
    return TrainConfig(
        scheme=values["scheme"],
        num_classes=6 if synthetic else values["classes"],
        shortcut=values["shortcut"],
        batch_size=values["batch_size"],
        epochs=values["epochs"],
        schedule=schedule,
        seed=values["seed"],
        dataset=values["dataset"],
        augment="affine" if synthetic else "cifar",
        beta1=values["beta1"],
        beta2=values["beta2"],
        eps=values["eps"],
        checkpoint_dir=values.get("checkpoint_dir"),
    )
