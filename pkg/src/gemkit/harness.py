"""End-to-end training/evaluation loop and multi-run suite driver.

One run = one (config, seed) pair: train the model on the evaluation
task sequence, one task at a time, dispatching the configured update
rule per mini-batch, refreshing episodic memory once after each task,
and evaluating every task after each task (future tasks included, for
forward transfer).

Reproducibility contract: a run is a pure function of (config, seed).
Four independent RNG streams are derived per run -- model init, batch
shuffling, memory sampling, and (from the stream config's own seed)
task construction -- so methods that consume different amounts of
randomness still see identical data order. Serialized run records are
byte-identical across reruns; wall-clock timings live in a sidecar file
outside that guarantee.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradient_rules as rules
from .config import (
    ExperimentConfig,
    canonical_json,
    config_hash,
    config_to_dict,
    load_base,
    stream_config,
)
from .errors import ConfigError, EmptyMemory, ZeroUpdateWarning
from .memory import (
    make_store,
    per_task_batches,
    sample_reference_batch,
    slots_to_batch,
    update_memory,
)
from .metrics import AccuracyMatrix, MetricsReport, REPORT_COLUMNS, compute_report
from .model import MlpArchitecture, evaluate, init_model, loss_and_grad, sgd_step
from .tasks import TaskDataset, build_stream, split_cv_eval

RECORD_SCHEMA_VERSION = 1

_RNG_STREAMS = {"init": 0, "shuffle": 1, "memory": 2}


def named_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _RNG_STREAMS[name]]))


def derived_seed(seed: int, name: str) -> int:
    state = np.random.SeedSequence([seed, _RNG_STREAMS[name]]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    method: str
    label: str
    seed: int
    epsilon: float | None
    matrix: AccuracyMatrix
    learning_curve: list[float]
    baseline: list[float]
    task_ids: list[int]
    per_task_steps: list[int]
    per_task_projections: list[int]
    per_task_zero_updates: list[int]
    report: MetricsReport
    wall_clock_per_task: list[float] = field(default_factory=list)
    theta_per_task: list[np.ndarray] | None = None


def _json_float(value: float):
    return None if isinstance(value, float) and math.isnan(value) else value


def record_to_dict(record: RunRecord) -> dict:
    """Deterministic payload only; timings stay in the sidecar file."""
    return {
        "schema_version": RECORD_SCHEMA_VERSION,
        "config_hash": record.config_hash,
        "method": record.method,
        "label": record.label,
        "seed": record.seed,
        "epsilon": record.epsilon,
        "task_ids": record.task_ids,
        "accuracy_matrix": [[float(v) for v in row] for row in record.matrix.values],
        "learning_curve": [float(v) for v in record.learning_curve],
        "random_baseline": [float(v) for v in record.baseline],
        "per_task_steps": record.per_task_steps,
        "per_task_projections": record.per_task_projections,
        "per_task_zero_updates": record.per_task_zero_updates,
        "metrics": {k: _json_float(v) for k, v in record.report.values.items()},
    }


def record_bytes(record: RunRecord) -> bytes:
    return (canonical_json(record_to_dict(record)) + "\n").encode()


def record_filename(record: RunRecord) -> str:
    return f"{record.label}_{record.config_hash[:8]}_seed{record.seed}.json"


def save_record(record: RunRecord, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / record_filename(record)
    path.write_bytes(record_bytes(record))
    timing = {"wall_clock_per_task": record.wall_clock_per_task}
    (out_dir / (path.stem + ".timing.json")).write_text(json.dumps(timing) + "\n")
    return path


def load_record_dict(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _select_tasks(stream: list[TaskDataset], cv_tasks: int, subset: str) -> list[TaskDataset]:
    cv, ev = split_cv_eval(stream, cv_tasks)
    if subset == "eval":
        return ev
    if subset == "cv":
        if not cv:
            raise ConfigError("cv subset requested but cv_tasks is 0")
        return cv
    if subset == "all":
        return stream
    raise ConfigError(f"subset must be eval, cv or all, got {subset!r}")


def _batch_update(cfg: ExperimentConfig, model, task, xs, ys, store, mem_rng, counters):
    """One mini-batch through the configured method; returns the update vector."""
    tids = np.full(len(xs), task.task_id, dtype=np.int64)

    if cfg.method == "VAN":
        _, grad = loss_and_grad(model, xs, tids, ys)
        return grad

    if cfg.method == "ER":
        try:
            slots = sample_reference_batch(store, task.task_id, cfg.batch_size, mem_rng)
        except EmptyMemory:
            _, grad = loss_and_grad(model, xs, tids, ys)
            return grad
        mem_x, mem_t, mem_y = slots_to_batch(slots)
        _, grad = loss_and_grad(
            model,
            np.concatenate([xs, mem_x]),
            np.concatenate([tids, mem_t]),
            np.concatenate([ys, mem_y]),
        )
        return grad

    if cfg.method == "GEM":
        try:
            batches = per_task_batches(store, task.task_id, cfg.ref_batch_size, mem_rng)
        except EmptyMemory:
            _, grad = loss_and_grad(model, xs, tids, ys)
            return grad
        constraints = []
        for prev_task in sorted(batches):
            bx, bt, by = slots_to_batch(batches[prev_task])
            _, g_k = loss_and_grad(model, bx, bt, by)
            constraints.append(g_k)
        _, grad = loss_and_grad(model, xs, tids, ys)
        live = [c for c in constraints if np.linalg.norm(c) > rules.ZERO_FLOOR]
        if live and any(float(grad @ c) < 0.0 for c in live):
            counters["projections"] += 1
            return rules.gem_project(grad, live)
        return grad

    # single-reference methods: AGEM, AAGEM, SOFTGEM
    try:
        slots = sample_reference_batch(store, task.task_id, cfg.ref_batch_size, mem_rng)
    except EmptyMemory:
        _, grad = loss_and_grad(model, xs, tids, ys)
        return grad
    bx, bt, by = slots_to_batch(slots)
    _, ref_grad = loss_and_grad(model, bx, bt, by)
    _, grad = loss_and_grad(model, xs, tids, ys)
    if (
        np.linalg.norm(grad) <= rules.ZERO_FLOOR
        or np.linalg.norm(ref_grad) <= rules.ZERO_FLOOR
        or not rules.violation_check(grad, ref_grad)
    ):
        return grad
    counters["projections"] += 1
    if cfg.method == "AGEM":
        return rules.agem_project(grad, ref_grad)
    if cfg.method == "SOFTGEM":
        return rules.soft_gem_update(grad, ref_grad, cfg.epsilon)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroUpdateWarning)
        return rules.aagem_update(grad, ref_grad)


def train_sequence(
    cfg: ExperimentConfig,
    seed: int,
    subset: str = "eval",
    collect_theta: bool = False,
) -> RunRecord:
    base = load_base(cfg.stream.base)
    stream = build_stream(base, stream_config(cfg.stream))
    tasks = _select_tasks(stream, cfg.stream.cv_tasks, subset)

    classes_per_head = (
        base.num_classes if cfg.stream.kind == "permuted" else cfg.stream.classes_per_task
    )
    arch = MlpArchitecture(
        input_dim=base.train_x.shape[1],
        hidden_dims=cfg.hidden_dims,
        heads=cfg.stream.total_tasks,
        classes_per_head=classes_per_head,
    )
    model = init_model(arch, derived_seed(seed, "init"))
    shuffle_rng = named_rng(seed, "shuffle")
    mem_rng = named_rng(seed, "memory")
    store = make_store(max(1, cfg.mem_per_class), classes_per_head)

    baseline = [evaluate(model, t.test_x, t.test_y, t.task_id) for t in tasks]
    matrix = AccuracyMatrix.empty(len(tasks))
    curves: list[list[float]] = []
    per_task_steps, per_task_projections, per_task_zero_updates = [], [], []
    wall_clock = []
    snapshots: list[np.ndarray] | None = [] if collect_theta else None

    for position, task in enumerate(tasks, start=1):
        started = time.perf_counter()
        counters = {"projections": 0, "zero_updates": 0, "steps": 0}
        curve = [evaluate(model, task.test_x, task.test_y, task.task_id)]
        for epoch in range(cfg.epochs_per_task):
            order = shuffle_rng.permutation(len(task.train_x))
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                update = _batch_update(
                    cfg, model, task, task.train_x[idx], task.train_y[idx],
                    store, mem_rng, counters,
                )
                if update.any():
                    model = sgd_step(model, update, cfg.lr)
                else:
                    counters["zero_updates"] += 1
                counters["steps"] += 1
                if epoch == 0 and len(curve) <= cfg.lca_beta:
                    curve.append(evaluate(model, task.test_x, task.test_y, task.task_id))
        if cfg.method in ("ER", "GEM", "AGEM", "AAGEM", "SOFTGEM"):
            update_memory(store, task.train_x, task.train_y, task.task_id)
        matrix.set_row(position, [evaluate(model, t.test_x, t.test_y, t.task_id) for t in tasks])
        curves.append(curve)
        per_task_steps.append(counters["steps"])
        per_task_projections.append(counters["projections"])
        per_task_zero_updates.append(counters["zero_updates"])
        wall_clock.append(time.perf_counter() - started)
        if snapshots is not None:
            snapshots.append(model.theta.copy())

    horizon = cfg.lca_beta + 1
    padded = np.array([c + [c[-1]] * (horizon - len(c)) for c in curves])
    learning_curve = [float(v) for v in padded.mean(axis=0)]

    label = cfg.display_label()
    report = compute_report(cfg.method, seed, matrix, learning_curve, baseline, cfg.lca_beta)
    return RunRecord(
        config_hash=config_hash(cfg),
        method=cfg.method,
        label=label,
        seed=seed,
        epsilon=cfg.epsilon,
        matrix=matrix,
        learning_curve=learning_curve,
        baseline=baseline,
        task_ids=[t.task_id for t in tasks],
        per_task_steps=per_task_steps,
        per_task_projections=per_task_projections,
        per_task_zero_updates=per_task_zero_updates,
        report=report,
        wall_clock_per_task=wall_clock,
        theta_per_task=snapshots,
    )


def _run_one(args):
    cfg, seed, subset = args
    return train_sequence(cfg, seed, subset=subset)


def run_suite(
    configs: list[ExperimentConfig],
    out_dir,
    jobs: int = 1,
    subset: str = "eval",
) -> dict:
    """Run every (config, seed) pair, write records, and aggregate.

    Results are independent of execution order, so any jobs value yields
    byte-identical outputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(cfg, seed, subset) for cfg in configs for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, work))
    else:
        records = [_run_one(item) for item in work]
    for record in records:
        save_record(record, out_dir)

    records.sort(key=lambda r: (r.method, r.label, r.config_hash, r.seed))
    with open(out_dir / "runs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for record in records:
            writer.writerow(record.report.row())

    summary = aggregate_records(records)
    _write_aggregate(summary, out_dir)
    return summary


def aggregate_records(records: list[RunRecord]) -> dict:
    """Per-config mean and std (over seeds) of every headline metric."""
    groups: dict[tuple, list[RunRecord]] = {}
    for record in records:
        groups.setdefault((record.method, record.label, record.config_hash), []).append(record)
    rows = []
    for (method, label, digest), members in sorted(groups.items()):
        row = {"method": method, "label": label, "config_hash": digest, "n_seeds": len(members)}
        for metric in REPORT_COLUMNS[2:]:
            values = np.array([m.report.values[metric] for m in members])
            row[f"{metric}_mean"] = float(np.mean(values))
            row[f"{metric}_std"] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        rows.append(row)
    return {"rows": rows}


def _write_aggregate(summary: dict, out_dir: Path) -> None:
    rows = summary["rows"]
    columns = ["method", "label", "config_hash", "n_seeds"]
    for metric in REPORT_COLUMNS[2:]:
        columns += [f"{metric}_mean", f"{metric}_std"]
    with open(out_dir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])
    payload = canonical_json({"rows": [{k: _json_float(v) for k, v in r.items()} for r in rows]})
    (out_dir / "aggregate.json").write_text(payload + "\n")
