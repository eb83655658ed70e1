"""Per-task episodic memory with fixed-budget ring buffers.

Each task owns one ring buffer per class. Writing streams a task's data
through the buffers (FIFO within class, oldest evicted), so after a task
finishes its buffer holds the LAST ``budget_per_class`` samples seen per
class. Reference batches are drawn uniformly from the union of all
buffers of tasks earlier than the current one.

Single-writer contract: the training loop is the only writer; sampling
is read-only.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetZero, EmptyMemory, TruncatedFile

SNAPSHOT_MAGIC = b"EPMEM001"


@dataclass
class MemorySlot:
    """One stored sample: raw input vector, source task id, class label."""

    x: np.ndarray
    task_id: int
    label: int


@dataclass
class EpisodicMemoryStore:
    budget_per_class: int
    classes_per_task: int
    # task_id -> label -> ring of slots
    per_task: dict[int, dict[int, deque[MemorySlot]]] = field(default_factory=dict)
    finalized: set[int] = field(default_factory=set)

    def task_slots(self, task_id: int) -> list[MemorySlot]:
        """Slots stored for one task, in (label, arrival) order."""
        buffers = self.per_task.get(task_id, {})
        return [slot for label in sorted(buffers) for slot in buffers[label]]

    def slots_before(self, current_task: int) -> list[MemorySlot]:
        """Union of all buffers of tasks strictly earlier than current_task."""
        return [
            slot
            for task_id in sorted(self.per_task)
            if task_id < current_task
            for slot in self.task_slots(task_id)
        ]

    def size(self, task_id: int) -> int:
        return sum(len(ring) for ring in self.per_task.get(task_id, {}).values())


def make_store(budget_per_class: int, classes_per_task: int) -> EpisodicMemoryStore:
    if budget_per_class < 1:
        raise BudgetZero(f"budget_per_class must be >= 1, got {budget_per_class}")
    return EpisodicMemoryStore(budget_per_class, classes_per_task)


def update_memory(store: EpisodicMemoryStore, xs, labels, task_id: int) -> EpisodicMemoryStore:
    """Stream one task's samples through its ring buffers and finalize it.

    xs: array-like of input vectors in stream order; labels: matching
    class indices. Returns the store (mutated in place).
    """
    if store.budget_per_class < 1:
        raise BudgetZero(f"budget_per_class must be >= 1, got {store.budget_per_class}")
    if task_id in store.finalized:
        raise ValueError(f"task {task_id} already has finalized memory")
    buffers = store.per_task.setdefault(task_id, {})
    for x, label in zip(xs, labels):
        label = int(label)
        ring = buffers.get(label)
        if ring is None:
            ring = buffers[label] = deque(maxlen=store.budget_per_class)
        ring.append(MemorySlot(np.asarray(x, dtype=np.float64), task_id, label))
    store.finalized.add(task_id)
    return store


def sample_reference_batch(
    store: EpisodicMemoryStore,
    current_task: int,
    batch_size: int,
    rng: np.random.Generator,
    replace: bool = True,
) -> list[MemorySlot]:
    """Uniform sample from the union of buffers of tasks < current_task.

    With replacement by default; without replacement returns
    min(batch_size, available) slots. Raises EmptyMemory when no earlier
    task has stored anything.
    """
    pool = store.slots_before(current_task)
    if not pool:
        raise EmptyMemory(f"no stored samples from tasks before {current_task}")
    if replace:
        idx = rng.integers(0, len(pool), size=batch_size)
    else:
        idx = rng.choice(len(pool), size=min(batch_size, len(pool)), replace=False)
    return [pool[i] for i in idx]


def per_task_batches(
    store: EpisodicMemoryStore,
    current_task: int,
    batch_size: int,
    rng: np.random.Generator,
    replace: bool = True,
) -> dict[int, list[MemorySlot]]:
    """Independent reference batch per previous task (for per-task constraints)."""
    tasks = [t for t in sorted(store.per_task) if t < current_task and store.size(t) > 0]
    if not tasks:
        raise EmptyMemory(f"no stored samples from tasks before {current_task}")
    batches = {}
    for task_id in tasks:
        pool = store.task_slots(task_id)
        if replace:
            idx = rng.integers(0, len(pool), size=batch_size)
        else:
            idx = rng.choice(len(pool), size=min(batch_size, len(pool)), replace=False)
        batches[task_id] = [pool[i] for i in idx]
    return batches


def slots_to_batch(slots: list[MemorySlot]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack slots into (xs, task_ids, labels) arrays for the model."""
    xs = np.stack([slot.x for slot in slots])
    task_ids = np.array([slot.task_id for slot in slots], dtype=np.int64)
    labels = np.array([slot.label for slot in slots], dtype=np.int64)
    return xs, task_ids, labels


# --- binary snapshot (experiment resumption) ---
#
# Layout, all big-endian:
#   magic (8 bytes) | budget u32 | classes_per_task u32
#   | n_finalized u32 | finalized task ids u32...
#   | n_records u32 | records
# record: task_id u32 | label u32 | n_values u32 | values f64...

def save_memory(store: EpisodicMemoryStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack(">II", store.budget_per_class, store.classes_per_task))
        finalized = sorted(store.finalized)
        fh.write(struct.pack(">I", len(finalized)))
        for task_id in finalized:
            fh.write(struct.pack(">I", task_id))
        records = [slot for t in sorted(store.per_task) for slot in store.task_slots(t)]
        fh.write(struct.pack(">I", len(records)))
        for slot in records:
            values = np.ascontiguousarray(slot.x, dtype=">f8")
            fh.write(struct.pack(">III", slot.task_id, slot.label, values.size))
            fh.write(values.tobytes())


def load_memory(path) -> EpisodicMemoryStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise TruncatedFile(f"not a memory snapshot: bad magic in {path}")
    offset = len(SNAPSHOT_MAGIC)

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise TruncatedFile(f"snapshot {path} ends early at byte {offset}")
        out = struct.unpack_from(fmt, data, offset)
        offset += size
        return out

    budget, classes_per_task = take(">II")
    store = make_store(budget, classes_per_task)
    (n_finalized,) = take(">I")
    finalized = [take(">I")[0] for _ in range(n_finalized)]
    (n_records,) = take(">I")
    for _ in range(n_records):
        task_id, label, n_values = take(">III")
        values = take(f">{n_values}d")
        buffers = store.per_task.setdefault(task_id, {})
        ring = buffers.setdefault(label, deque(maxlen=budget))
        ring.append(MemorySlot(np.array(values, dtype=np.float64), task_id, label))
    store.finalized.update(finalized)
    return store
