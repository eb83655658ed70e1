"""Experiment configuration: versioned JSON schema, validation, hashing.

Unknown keys are rejected at every nesting level so silent typos cannot
change an experiment. The canonical serialized form (sorted keys, fixed
separators) feeds the config hash recorded in every run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError
from .tasks import (
    BaseData,
    StreamConfig,
    STREAM_KINDS,
    load_idx_dataset,
    make_synthetic_base,
)

SCHEMA_VERSION = 1

METHODS = ("VAN", "ER", "GEM", "AGEM", "AAGEM", "SOFTGEM")
MEMORY_METHODS = ("ER", "GEM", "AGEM", "AAGEM", "SOFTGEM")


@dataclass(frozen=True)
class SyntheticSource:
    classes: int
    dim: int
    per_class: int
    seed: int
    test_per_class: int | None = None


@dataclass(frozen=True)
class IdxSource:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    train_limit: int | None = None
    test_limit: int | None = None


@dataclass(frozen=True)
class StreamSpec:
    kind: str
    total_tasks: int
    cv_tasks: int
    seed: int
    base: SyntheticSource | IdxSource
    classes_per_task: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    stream: StreamSpec
    hidden_dims: tuple[int, ...]
    lr: float
    batch_size: int
    seeds: tuple[int, ...]
    mem_per_class: int = 25
    ref_batch_size: int = 256
    epochs_per_task: int = 1
    lca_beta: int = 10
    epsilon: float | None = None
    label: str | None = None

    def display_label(self) -> str:
        return self.label if self.label is not None else self.method


def _require_keys(mapping: dict, allowed: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")


def _source_from_dict(d: dict):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("stream.base must be an object with a 'type' key")
    kind = d["type"]
    if kind == "synthetic":
        _require_keys(d, {"type", "classes", "dim", "per_class", "seed", "test_per_class"}, "stream.base")
        return SyntheticSource(
            classes=int(d["classes"]),
            dim=int(d["dim"]),
            per_class=int(d["per_class"]),
            seed=int(d["seed"]),
            test_per_class=None if d.get("test_per_class") is None else int(d["test_per_class"]),
        )
    if kind == "idx":
        _require_keys(
            d,
            {"type", "train_images", "train_labels", "test_images", "test_labels",
             "train_limit", "test_limit"},
            "stream.base",
        )
        return IdxSource(
            train_images=str(d["train_images"]),
            train_labels=str(d["train_labels"]),
            test_images=str(d["test_images"]),
            test_labels=str(d["test_labels"]),
            train_limit=None if d.get("train_limit") is None else int(d["train_limit"]),
            test_limit=None if d.get("test_limit") is None else int(d["test_limit"]),
        )
    raise ConfigError(f"stream.base.type must be 'synthetic' or 'idx', got {kind!r}")


def _stream_from_dict(d: dict) -> StreamSpec:
    if not isinstance(d, dict):
        raise ConfigError("stream must be an object")
    _require_keys(
        d, {"kind", "total_tasks", "cv_tasks", "seed", "base", "classes_per_task"}, "stream"
    )
    for key in ("kind", "total_tasks", "cv_tasks", "seed", "base"):
        if key not in d:
            raise ConfigError(f"stream is missing required key {key!r}")
    if d["kind"] not in STREAM_KINDS:
        raise ConfigError(f"stream.kind must be one of {STREAM_KINDS}, got {d['kind']!r}")
    return StreamSpec(
        kind=d["kind"],
        total_tasks=int(d["total_tasks"]),
        cv_tasks=int(d["cv_tasks"]),
        seed=int(d["seed"]),
        base=_source_from_dict(d["base"]),
        classes_per_task=None if d.get("classes_per_task") is None else int(d["classes_per_task"]),
    )


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(
        d,
        {"schema_version", "method", "stream", "hidden_dims", "lr", "batch_size",
         "seeds", "mem_per_class", "ref_batch_size", "epochs_per_task", "lca_beta",
         "epsilon", "label"},
        "config",
    )
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    for key in ("method", "stream", "hidden_dims", "lr", "batch_size", "seeds"):
        if key not in d:
            raise ConfigError(f"config is missing required key {key!r}")
    cfg = ExperimentConfig(
        method=d["method"],
        stream=_stream_from_dict(d["stream"]),
        hidden_dims=tuple(int(h) for h in d["hidden_dims"]),
        lr=float(d["lr"]),
        batch_size=int(d["batch_size"]),
        seeds=tuple(int(s) for s in d["seeds"]),
        mem_per_class=int(d.get("mem_per_class", 25)),
        ref_batch_size=int(d.get("ref_batch_size", 256)),
        epochs_per_task=int(d.get("epochs_per_task", 1)),
        lca_beta=int(d.get("lca_beta", 10)),
        epsilon=None if d.get("epsilon") is None else float(d["epsilon"]),
        label=d.get("label"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    if cfg.method == "SOFTGEM":
        if cfg.epsilon is None:
            raise ConfigError("SOFTGEM needs an epsilon value")
        if not 0.0 <= cfg.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {cfg.epsilon}")
    elif cfg.epsilon is not None:
        raise ConfigError(f"epsilon is only valid for SOFTGEM, not {cfg.method}")
    if cfg.method in MEMORY_METHODS and cfg.mem_per_class < 1:
        raise ConfigError(f"{cfg.method} needs mem_per_class >= 1")
    if cfg.lr <= 0:
        raise ConfigError(f"lr must be positive, got {cfg.lr}")
    if cfg.batch_size < 1 or cfg.ref_batch_size < 1:
        raise ConfigError("batch sizes must be >= 1")
    if cfg.epochs_per_task < 1:
        raise ConfigError("epochs_per_task must be >= 1")
    if not cfg.seeds:
        raise ConfigError("seeds must be a nonempty list")
    if any(d < 1 for d in cfg.hidden_dims):
        raise ConfigError("hidden_dims must all be >= 1")
    # constructing the StreamConfig runs its own bounds checks
    stream_config(cfg.stream)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["schema_version"] = SCHEMA_VERSION
    d["hidden_dims"] = list(cfg.hidden_dims)
    d["seeds"] = list(cfg.seeds)
    base = d["stream"].pop("base")
    base["type"] = "synthetic" if isinstance(cfg.stream.base, SyntheticSource) else "idx"
    d["stream"]["base"] = base
    return d


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(cfg)).encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(payload)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_base(spec: SyntheticSource | IdxSource) -> BaseData:
    if isinstance(spec, SyntheticSource):
        return make_synthetic_base(
            spec.classes, spec.dim, spec.per_class, spec.seed, spec.test_per_class
        )
    return load_idx_dataset(
        spec.train_images,
        spec.train_labels,
        spec.test_images,
        spec.test_labels,
        spec.train_limit,
        spec.test_limit,
    )


def stream_config(spec: StreamSpec) -> StreamConfig:
    try:
        return StreamConfig(
            kind=spec.kind,
            total_tasks=spec.total_tasks,
            cv_tasks=spec.cv_tasks,
            seed=spec.seed,
            classes_per_task=spec.classes_per_task,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
