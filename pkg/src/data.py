#!/usr/bin/env python3
"""
Data Module

CIFAR-10 binary ingestion, train-time augmentation, per-channel
normalization, a procedurally generated 6-class 64x64 face-shaped dataset
and the seeded mini-batch iterator used by training.

CIFAR-10 binary records are 1 label byte followed by 3072 pixel bytes:
channel-major (R, G, B), row-major within each 32x32 channel.
"""

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import AugmentationConfigError, CorruptRecordError, DataError, DegenerateChannelError, \
    IngestionError

logger = logging.getLogger(__name__)

CIFAR_SIDE = 32
CIFAR_CLASSES = 10
CIFAR_PIXELS = 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR_RECORD_BYTES = 1 + CIFAR_PIXELS
CIFAR_RECORDS_PER_FILE = 10000
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"
CIFAR_PAD = 4
CIFAR_CLASS_NAMES = ("airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck")

FACE_SIDE = 64
FACE_CLASSES = 6
FACE_CLASS_NAMES = ("neutral", "smile", "surprise", "squint", "disgust", "scream")

ROTATION_GRID = (-7, -5, -3, -1, 1, 3, 5, 7)
TRANSLATION_GRID = tuple(range(-3, 4))
SCALE_GRID = (0.90, 0.95, 1.00, 1.05, 1.10)


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class LabeledImage:
    """One image (3, H, W) with pixels in [0, 1] before normalization."""

    pixels: np.ndarray
    label: int


@dataclass(frozen=True)
class Normalization:
    """Per-channel statistics of a training split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, images: np.ndarray) -> np.ndarray:
        """(x - mean) / std over the channel axis of (N, 3, H, W) or (3, H, W)."""
        shape = (-1, 1, 1)
        return ((images - self.mean.reshape(shape)) / self.std.reshape(shape)).astype(np.float32)


@dataclass
class Dataset:
    """Images (N, 3, H, W) float32 with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    split: Split
    num_classes: int
    normalization: Optional[Normalization] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise DataError(f"images must be (N, 3, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> LabeledImage:
        return LabeledImage(pixels=self.images[index], label=int(self.labels[index]))

    def __iter__(self) -> Iterator[LabeledImage]:
        for index in range(len(self)):
            yield self[index]

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, count: int) -> "Dataset":
        """First count samples, same split and statistics."""
        return replace(self, images=self.images[:count], labels=self.labels[:count])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# --- CIFAR-10 binary format -------------------------------------------------

def parse_cifar10_records(blob: bytes, source: str = "<memory>") -> Tuple[np.ndarray, np.ndarray]:
    """Decode concatenated records into images (N, 3, 32, 32) in [0, 1] and labels."""
    if len(blob) % CIFAR_RECORD_BYTES:
        raise IngestionError(
            f"{source}: {len(blob)} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            path=source,
        )
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= CIFAR_CLASSES)
    if bad.size:
        raise CorruptRecordError(
            f"{source}: record {bad[0]} has label byte {labels[bad[0]]} (> 9)", path=source
        )
    images = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).astype(np.float32) / 255.0
    return images, labels


def read_cifar10_file(path: str, expected_records: Optional[int] = CIFAR_RECORDS_PER_FILE
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """Read one binary batch file, checking its exact length when expected_records is set."""
    if not os.path.isfile(path):
        raise IngestionError(f"missing CIFAR-10 file: {path}", path=path)
    with open(path, "rb") as f:
        blob = f.read()
    if expected_records is not None and len(blob) != expected_records * CIFAR_RECORD_BYTES:
        raise IngestionError(
            f"{path}: expected {expected_records * CIFAR_RECORD_BYTES} bytes, found {len(blob)}",
            path=path,
        )
    return parse_cifar10_records(blob, source=path)


def load_cifar10(path: str, records_per_file: Optional[int] = CIFAR_RECORDS_PER_FILE
                 ) -> Tuple[Dataset, Dataset]:
    """Load the five training batches and the test batch from a directory."""
    logger.info("loading CIFAR-10 from %s", path)
    parts = [read_cifar10_file(os.path.join(path, name), records_per_file) for name in CIFAR_TRAIN_FILES]
    train_images = np.concatenate([images for images, _ in parts])
    train_labels = np.concatenate([labels for _, labels in parts])
    test_images, test_labels = read_cifar10_file(os.path.join(path, CIFAR_TEST_FILE), records_per_file)

    train = Dataset(train_images, train_labels, Split.TRAIN, CIFAR_CLASSES)
    test = Dataset(test_images, test_labels, Split.TEST, CIFAR_CLASSES)
    logger.info("loaded %d train / %d test images", len(train), len(test))
    return train, test


def write_cifar10_batch(path: str, images: np.ndarray, labels: Sequence[int]) -> str:
    """Write images (N, 3, 32, 32) in [0, 1] and labels as a CIFAR-10 binary file."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.shape[1:] != (3, CIFAR_SIDE, CIFAR_SIDE) or len(images) != len(labels):
        raise DataError(f"cannot write images {images.shape} with {len(labels)} labels")
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    records = np.empty((len(images), CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels.astype(np.uint8)
    records[:, 1:] = images.reshape(len(images), -1)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(records.tobytes())
    return path


# --- Augmentation -----------------------------------------------------------

def crop_and_flip(img: LabeledImage, top: int, left: int, flip: bool, pad: int = CIFAR_PAD) -> LabeledImage:
    """Zero-pad by pad, crop the original size at (top, left), optionally mirror."""
    channels, height, width = img.pixels.shape
    padded = np.pad(img.pixels, ((0, 0), (pad, pad), (pad, pad)))
    crop = padded[:, top:top + height, left:left + width]
    if flip:
        crop = crop[:, :, ::-1]
    return LabeledImage(pixels=np.ascontiguousarray(crop), label=img.label)


def augment_cifar(img: LabeledImage, rng: np.random.Generator) -> LabeledImage:
    """Pad 4, random crop back to size, horizontal flip with probability 0.5."""
    top, left = rng.integers(0, 2 * CIFAR_PAD + 1, size=2)
    flip = rng.random() < 0.5
    return crop_and_flip(img, int(top), int(left), bool(flip))


def _on_grid(value: float, grid: Sequence[float]) -> bool:
    return any(abs(value - g) < 1e-9 for g in grid)


def augment_affine(img: LabeledImage, rotation_deg: float, translate_px: Tuple[int, int],
                   scale: float) -> LabeledImage:
    """Rotate, scale and shift about the image center with bilinear sampling and zero fill.

    translate_px is (dx, dy): the output pixel (y, x) reads the source at
    (y - dy, x - dx) before rotation and scaling. Zero rotation is accepted
    as the identity draw alongside the published rotation grid.
    """
    dx, dy = translate_px
    if not _on_grid(rotation_deg, ROTATION_GRID + (0,)):
        raise AugmentationConfigError(f"rotation {rotation_deg} not in {ROTATION_GRID}")
    if not (_on_grid(dx, TRANSLATION_GRID) and _on_grid(dy, TRANSLATION_GRID)):
        raise AugmentationConfigError(f"translation {translate_px} outside [-3, 3]")
    if not _on_grid(scale, SCALE_GRID):
        raise AugmentationConfigError(f"scale {scale} not in {SCALE_GRID}")

    if rotation_deg == 0 and dx == 0 and dy == 0 and abs(scale - 1.0) < 1e-9:
        return LabeledImage(pixels=img.pixels.copy(), label=img.label)

    _, height, width = img.pixels.shape
    theta = np.deg2rad(rotation_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    # Output -> input mapping in (row, col) coordinates
    inverse = np.array([[cos, sin], [-sin, cos]]) / scale
    center = np.array([(height - 1) / 2.0, (width - 1) / 2.0])
    offset = center - inverse @ (center + np.array([dy, dx], dtype=float))

    warped = np.stack([
        ndimage.affine_transform(channel, inverse, offset=offset, order=1, mode="constant", cval=0.0)
        for channel in img.pixels.astype(np.float64)
    ]).astype(np.float32)
    return LabeledImage(pixels=warped, label=img.label)


def affine_grid() -> List[Tuple[int, Tuple[int, int], float]]:
    """Every (rotation, (dx, dy), scale) combination of the augmentation grid."""
    return [(r, (dx, dy), s) for r, dx, dy, s in
            itertools.product(ROTATION_GRID, TRANSLATION_GRID, TRANSLATION_GRID, SCALE_GRID)]


def random_affine(img: LabeledImage, rng: np.random.Generator) -> LabeledImage:
    """Draw rotation, per-axis translations and scale independently from their grids."""
    rotation = ROTATION_GRID[rng.integers(len(ROTATION_GRID))]
    dx, dy = (TRANSLATION_GRID[i] for i in rng.integers(len(TRANSLATION_GRID), size=2))
    scale = SCALE_GRID[rng.integers(len(SCALE_GRID))]
    return augment_affine(img, rotation, (dx, dy), scale)


AUGMENTATIONS = {
    "cifar": augment_cifar,
    "affine": random_affine,
}


# --- Synthetic face-shaped dataset -----------------------------------------

def _face_pattern(label: int, side: int, rng: np.random.Generator) -> np.ndarray:
    """Class-dependent geometric pattern with jittered phase, frequency and tint."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / side
    freq = rng.uniform(3.0, 5.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    cy, cx = rng.uniform(0.4, 0.6, size=2)
    radius = np.hypot(yy - cy, xx - cx)

    if label == 0:
        base = np.sin(2 * np.pi * freq * yy + phase)
    elif label == 1:
        base = np.sin(2 * np.pi * freq * xx + phase)
    elif label == 2:
        base = np.sin(2 * np.pi * freq * radius * 2 + phase)
    elif label == 3:
        base = np.sin(2 * np.pi * freq * (xx + yy) / np.sqrt(2) + phase)
    elif label == 4:
        base = np.sign(np.sin(2 * np.pi * freq * xx + phase) * np.sin(2 * np.pi * freq * yy + phase))
    else:
        base = 2 * np.exp(-(radius ** 2) / (2 * rng.uniform(0.08, 0.15) ** 2)) - 1

    tint = rng.uniform(0.6, 1.0, size=3)
    image = 0.5 + 0.4 * base[None] * tint[:, None, None]
    image += rng.normal(0.0, 0.05, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def _synthetic_split(seed: int, split: Split, count: int, side: int) -> Dataset:
    rng = np.random.default_rng([seed, 0 if split is Split.TRAIN else 1])
    labels = rng.permutation(np.arange(count) % FACE_CLASSES)
    images = np.stack([_face_pattern(int(label), side, rng) for label in labels])
    return Dataset(images, labels, split, FACE_CLASSES)


def make_synthetic_faceset(seed: int, n_train: int, n_test: int, side: int = FACE_SIDE
                           ) -> Tuple[Dataset, Dataset]:
    """Deterministic, class-balanced 6-class (3, side, side) train/test splits."""
    if n_train < 1 or n_test < 1:
        raise DataError(f"synthetic split sizes must be >= 1, got {n_train}, {n_test}")
    return _synthetic_split(seed, Split.TRAIN, n_train, side), _synthetic_split(seed, Split.TEST, n_test, side)


# --- Normalization ----------------------------------------------------------

def compute_normalization(train: Dataset) -> Normalization:
    """Per-channel mean and (population) std of a training split."""
    if len(train) == 0:
        raise DataError("cannot compute statistics of an empty dataset")
    pixels = train.images.astype(np.float64)
    mean = pixels.mean(axis=(0, 2, 3))
    std = pixels.std(axis=(0, 2, 3))
    degenerate = np.flatnonzero(std <= 0)
    if degenerate.size:
        raise DegenerateChannelError(f"channel {int(degenerate[0])} has zero standard deviation")
    return Normalization(mean=mean, std=std)


def normalize(ds: Dataset, stats: Optional[Normalization] = None) -> Dataset:
    """Normalize per channel; a test split must be given the training statistics."""
    if stats is None:
        if ds.split is not Split.TRAIN:
            raise DataError("test data must be normalized with training statistics")
        stats = compute_normalization(ds)
    if np.any(stats.std <= 0):
        raise DegenerateChannelError("normalization statistics contain a zero std")
    images = Normalization(mean=stats.mean, std=stats.std).apply(ds.images.astype(np.float64))
    return replace(ds, images=images, normalization=stats)


# --- Mini-batches -----------------------------------------------------------

Augment = Callable[[LabeledImage, np.random.Generator], LabeledImage]


class BatchIterator:
    """Seeded mini-batches whose content depends only on (seed, epoch, batch index)."""

    def __init__(self, dataset: Dataset, batch_size: int, seed: int,
                 augment: Optional[Augment] = None, normalization: Optional[Normalization] = None,
                 shuffle: bool = True, prefetch: bool = False):
        if batch_size < 1:
            raise DataError(f"batch size must be >= 1, got {batch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.augment = augment
        self.normalization = normalization
        self.shuffle = shuffle
        self.prefetch = prefetch

    def num_batches(self) -> int:
        """Final partial batch included."""
        return -(-len(self.dataset) // self.batch_size)

    def order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.dataset))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))

    def batch(self, epoch: int, index: int, order: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Build batch index of epoch."""
        order = self.order(epoch) if order is None else order
        picks = order[index * self.batch_size:(index + 1) * self.batch_size]
        images = self.dataset.images[picks]
        labels = self.dataset.labels[picks]
        if self.augment is not None:
            rng = np.random.default_rng([self.seed, epoch, index])
            images = np.stack([self.augment(LabeledImage(im, int(lb)), rng).pixels
                               for im, lb in zip(images, labels)])
        if self.normalization is not None:
            images = self.normalization.apply(images)
        return np.ascontiguousarray(images, dtype=np.float32), labels

    def epoch(self, epoch: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield every batch of an epoch, optionally preparing batch k+1 in the background."""
        order = self.order(epoch)
        count = self.num_batches()
        if not self.prefetch:
            for index in range(count):
                yield self.batch(epoch, index, order)
            return

        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(self.batch, epoch, 0, order)
            for index in range(count):
                current = pending.result()
                if index + 1 < count:
                    pending = pool.submit(self.batch, epoch, index + 1, order)
                yield current
