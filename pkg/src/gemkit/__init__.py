"""Constrained-gradient continual learning toolkit.

Episodic-memory update rules (single- and multi-constraint projections,
soft-margin and averaging variants), ring-buffer memory, sequential task
streams, the standard continual-learning metric suite, a margin
refinement search, and a reproducible benchmark harness with a CLI.
"""

from .config import ExperimentConfig, load_config
from .gradient_rules import (
    aagem_update,
    agem_project,
    gem_project,
    normalize,
    soft_gem_update,
    violation_check,
)
from .harness import RunRecord, run_suite, train_sequence
from .memory import (
    EpisodicMemoryStore,
    MemorySlot,
    make_store,
    per_task_batches,
    sample_reference_batch,
    update_memory,
)
from .metrics import (
    AccuracyMatrix,
    average_accuracy,
    backward_transfer,
    forgetting,
    forward_transfer,
    lca,
)
from .model import MlpArchitecture, ModelState, evaluate, forward, init_model, loss_and_grad, sgd_step
from .tasks import (
    BaseData,
    StreamConfig,
    TaskDataset,
    build_stream,
    load_idx_dataset,
    make_permuted_stream,
    make_split_stream,
    make_synthetic_base,
    split_cv_eval,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "BaseData",
    "EpisodicMemoryStore",
    "ExperimentConfig",
    "MemorySlot",
    "MlpArchitecture",
    "ModelState",
    "RunRecord",
    "StreamConfig",
    "TaskDataset",
    "aagem_update",
    "agem_project",
    "average_accuracy",
    "backward_transfer",
    "build_stream",
    "evaluate",
    "forgetting",
    "forward",
    "forward_transfer",
    "gem_project",
    "init_model",
    "lca",
    "load_config",
    "load_idx_dataset",
    "loss_and_grad",
    "make_permuted_stream",
    "make_split_stream",
    "make_store",
    "make_synthetic_base",
    "normalize",
    "per_task_batches",
    "run_suite",
    "sample_reference_batch",
    "sgd_step",
    "soft_gem_update",
    "split_cv_eval",
    "train_sequence",
    "update_memory",
    "violation_check",
]
