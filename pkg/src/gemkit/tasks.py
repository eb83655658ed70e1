"""Sequential task stream construction.

Three stream kinds over a base classification dataset:

* ``permuted``               -- every task sees all classes but with one
                                fixed input-feature permutation per task
                                (task 1 keeps the identity permutation);
* ``split_disjoint``         -- the label space is partitioned into
                                per-task class subsets with no overlap;
* ``split_with_replacement`` -- per-task class subsets drawn with
                                replacement across tasks, overlap allowed.

Split tasks re-index labels to [0, classes_per_task) so heads have a
fixed width. The leading ``cv_tasks`` tasks form the cross-validation
prefix; the rest is the evaluation stream. Construction is a pure
function of (base data, config).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, InsufficientClasses, TruncatedFile

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

STREAM_KINDS = ("permuted", "split_disjoint", "split_with_replacement")


@dataclass
class BaseData:
    """Flat-feature classification dataset with a train/test split."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int


@dataclass
class TaskDataset:
    task_id: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_names: list[int]


@dataclass(frozen=True)
class StreamConfig:
    kind: str
    total_tasks: int
    cv_tasks: int
    seed: int
    classes_per_task: int | None = None

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValueError(f"kind must be one of {STREAM_KINDS}, got {self.kind!r}")
        if not 0 <= self.cv_tasks < self.total_tasks:
            raise ValueError(
                f"need 0 <= cv_tasks < total_tasks, got {self.cv_tasks}/{self.total_tasks}"
            )
        if self.kind != "permuted" and not self.classes_per_task:
            raise ValueError(f"{self.kind} streams need classes_per_task")


def make_permuted_stream(base: BaseData, cfg: StreamConfig) -> list[TaskDataset]:
    """One fixed feature permutation per task, applied to train and test."""
    rng = np.random.default_rng(cfg.seed)
    dim = base.train_x.shape[1]
    stream = []
    for task_id in range(1, cfg.total_tasks + 1):
        if task_id == 1:
            perm = np.arange(dim)
        else:
            perm = rng.permutation(dim)
        stream.append(
            TaskDataset(
                task_id=task_id,
                train_x=base.train_x[:, perm],
                train_y=base.train_y.copy(),
                test_x=base.test_x[:, perm],
                test_y=base.test_y.copy(),
                class_names=list(range(base.num_classes)),
            )
        )
    return stream


def make_split_stream(
    base: BaseData, cfg: StreamConfig, with_replacement: bool
) -> list[TaskDataset]:
    """Per-task class subsets; disjoint partition or resampled with overlap."""
    rng = np.random.default_rng(cfg.seed)
    per_task = cfg.classes_per_task
    if per_task > base.num_classes:
        raise InsufficientClasses(
            f"tasks of {per_task} classes need a base with at least that many, "
            f"got {base.num_classes}"
        )
    if with_replacement:
        class_sets = [
            sorted(rng.choice(base.num_classes, size=per_task, replace=False))
            for _ in range(cfg.total_tasks)
        ]
    else:
        needed = cfg.total_tasks * per_task
        if needed > base.num_classes:
            raise InsufficientClasses(
                f"disjoint split needs {needed} classes, base has {base.num_classes}"
            )
        order = rng.permutation(base.num_classes)
        class_sets = [
            sorted(order[i * per_task : (i + 1) * per_task])
            for i in range(cfg.total_tasks)
        ]

    stream = []
    for task_id, classes in enumerate(class_sets, start=1):
        remap = {int(c): i for i, c in enumerate(classes)}
        train_mask = np.isin(base.train_y, classes)
        test_mask = np.isin(base.test_y, classes)
        stream.append(
            TaskDataset(
                task_id=task_id,
                train_x=base.train_x[train_mask],
                train_y=np.array([remap[int(y)] for y in base.train_y[train_mask]], dtype=np.int64),
                test_x=base.test_x[test_mask],
                test_y=np.array([remap[int(y)] for y in base.test_y[test_mask]], dtype=np.int64),
                class_names=[int(c) for c in classes],
            )
        )
    return stream


def build_stream(base: BaseData, cfg: StreamConfig) -> list[TaskDataset]:
    if cfg.kind == "permuted":
        return make_permuted_stream(base, cfg)
    return make_split_stream(base, cfg, with_replacement=cfg.kind == "split_with_replacement")


def split_cv_eval(stream: list[TaskDataset], cv_tasks: int):
    """Leading cv_tasks tasks for hyperparameter selection, rest for evaluation."""
    return stream[:cv_tasks], stream[cv_tasks:]


# --- IDX binary format (the de-facto MNIST layout) ---

def read_idx(path) -> np.ndarray:
    """One IDX file as an array: images (n, rows, cols) or labels (n,)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise TruncatedFile(f"{path}: too short for an IDX header")
    (magic,) = struct.unpack_from(">i", data, 0)
    if magic == IDX_IMAGE_MAGIC:
        if len(data) < 16:
            raise TruncatedFile(f"{path}: image header truncated")
        count, rows, cols = struct.unpack_from(">iii", data, 4)
        expected = 16 + count * rows * cols
        if len(data) < expected:
            raise TruncatedFile(f"{path}: expected {expected} bytes, got {len(data)}")
        return np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(
            count, rows, cols
        )
    if magic == IDX_LABEL_MAGIC:
        (count,) = struct.unpack_from(">i", data, 4)
        expected = 8 + count
        if len(data) < expected:
            raise TruncatedFile(f"{path}: expected {expected} bytes, got {len(data)}")
        return np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
    raise BadMagic(f"{path}: magic 0x{magic:08x} is neither image nor label IDX")


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_idx_dataset(
    train_images,
    train_labels,
    test_images,
    test_labels,
    train_limit: int | None = None,
    test_limit: int | None = None,
) -> BaseData:
    """IDX image/label file pairs as a BaseData with pixels scaled to [0, 1]."""

    def load_pair(image_path, label_path, limit):
        images = read_idx(image_path)
        labels = read_idx(label_path)
        if images.ndim != 3:
            raise BadMagic(f"{image_path}: expected an image file")
        if labels.ndim != 1:
            raise BadMagic(f"{label_path}: expected a label file")
        if len(images) != len(labels):
            raise TruncatedFile(
                f"image/label count mismatch: {len(images)} vs {len(labels)}"
            )
        if limit is not None:
            images, labels = images[:limit], labels[:limit]
        xs = images.reshape(len(images), -1).astype(np.float64) / 255.0
        return xs, labels.astype(np.int64)

    train_x, train_y = load_pair(train_images, train_labels, train_limit)
    test_x, test_y = load_pair(test_images, test_labels, test_limit)
    num_classes = int(max(train_y.max(), test_y.max())) + 1
    return BaseData(train_x, train_y, test_x, test_y, num_classes)


def make_synthetic_base(
    classes: int,
    dim: int,
    per_class: int,
    seed: int,
    test_per_class: int | None = None,
) -> BaseData:
    """Gaussian class clusters around unit-norm random means (sigma 0.3).

    Generates per_class train and test_per_class test samples per class
    (test defaults to per_class). Separable enough for a linear probe.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if test_per_class is None:
        test_per_class = per_class
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    def draw(count):
        xs = np.zeros((classes * count, dim))
        ys = np.zeros(classes * count, dtype=np.int64)
        for c in range(classes):
            block = slice(c * count, (c + 1) * count)
            xs[block] = means[c] + 0.3 * rng.normal(size=(count, dim))
            ys[block] = c
        return xs, ys

    train_x, train_y = draw(per_class)
    test_x, test_y = draw(test_per_class)
    return BaseData(train_x, train_y, test_x, test_y, classes)
