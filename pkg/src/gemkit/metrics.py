"""Continual-learning evaluation metrics over the task accuracy matrix.

The accuracy matrix R is T x T with R[t][i] = accuracy on task i after
finishing training on task t (1-based in the formulas below, 0-based in
code). Rows fill in training order; the harness also populates future
task columns so forward transfer is computable.

Metrics:

* average accuracy   A_k  = mean_i<=k R[k][i]
* forgetting         F_k  = mean_i<k ( max_l<k R[l][i] - R[k][i] )
* learning curve area   LCA_b = mean of the first b+1 points of the
  per-task accuracy-vs-minibatch curve, averaged over tasks
* backward transfer  BWT = mean_i<T ( R[T][i] - R[i][i] )
* forward transfer   FWT = mean_i>1 ( R[i-1][i] - baseline[i] )

where baseline[i] is the freshly initialized model's accuracy on task i.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CurveTooShort, MissingBaseline, RowUnpopulated, TooFewTasks

# Fixed column order for metric reports (one row per method x seed).
REPORT_COLUMNS = ("method", "seed", "A_T", "F_T", "a_1", "a_t", "BWT", "FWT", "LCA_10")


@dataclass
class AccuracyMatrix:
    """T x T accuracy matrix; unpopulated entries are NaN."""

    values: np.ndarray

    @classmethod
    def empty(cls, num_tasks: int) -> "AccuracyMatrix":
        return cls(np.full((num_tasks, num_tasks), np.nan))

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    @property
    def a_1(self) -> float:
        """Accuracy on the first task after the last task finished."""
        return float(self.values[-1, 0])

    @property
    def a_t(self) -> float:
        """Accuracy on the last task after it finished."""
        return float(self.values[-1, -1])

    def set_row(self, after_task: int, accuracies) -> None:
        self.values[after_task - 1, :] = accuracies


def _rows(matrix) -> np.ndarray:
    if isinstance(matrix, AccuracyMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def average_accuracy(matrix, after_task: int) -> float:
    """Mean accuracy over tasks 1..k after training k tasks."""
    R = _rows(matrix)
    row = R[after_task - 1, :after_task]
    if np.isnan(row).any():
        raise RowUnpopulated(f"row for task {after_task} not fully evaluated")
    return float(np.mean(row))


def forgetting(matrix, after_task: int) -> float:
    """Mean maximal accuracy drop over tasks earlier than task k.

    Negative values mean later training improved earlier tasks.
    """
    if after_task < 2:
        raise TooFewTasks("forgetting needs at least 2 trained tasks")
    R = _rows(matrix)
    block = R[: after_task - 1, : after_task - 1]
    last = R[after_task - 1, : after_task - 1]
    if np.isnan(block).any() or np.isnan(last).any():
        raise RowUnpopulated(f"rows up to task {after_task} not fully evaluated")
    drops = block.max(axis=0) - last
    return float(np.mean(drops))


def lca(curve, beta: int) -> float:
    """Mean of the first beta+1 learning-curve points."""
    curve = np.asarray(curve, dtype=np.float64)
    if len(curve) < beta + 1:
        raise CurveTooShort(f"curve has {len(curve)} points, need {beta + 1}")
    return float(np.mean(curve[: beta + 1]))


def backward_transfer(matrix) -> float:
    """Mean change on earlier tasks between their own row and the final row."""
    R = _rows(matrix)
    T = R.shape[0]
    if T < 2:
        raise TooFewTasks("backward transfer needs at least 2 tasks")
    diag = R.diagonal()[:-1]
    final = R[-1, :-1]
    if np.isnan(diag).any() or np.isnan(final).any():
        raise RowUnpopulated("diagonal and final row must be populated")
    return float(np.mean(final - diag))


def forward_transfer(matrix, baseline) -> float:
    """Mean zero-shot gain on each task just before it is trained."""
    R = _rows(matrix)
    T = R.shape[0]
    if T < 2:
        raise TooFewTasks("forward transfer needs at least 2 tasks")
    if baseline is None:
        raise MissingBaseline("forward transfer needs the pre-training baseline")
    baseline = np.asarray(baseline, dtype=np.float64)
    if len(baseline) != T or np.isnan(baseline).any():
        raise MissingBaseline(f"baseline must hold {T} pre-training accuracies")
    superdiag = np.array([R[i - 1, i] for i in range(1, T)])
    if np.isnan(superdiag).any():
        raise RowUnpopulated("first superdiagonal must be populated")
    return float(np.mean(superdiag - baseline[1:]))


@dataclass
class MetricsReport:
    """All headline metrics of a single run, in report-column order."""

    method: str
    seed: int
    values: dict[str, float] = field(default_factory=dict)

    def row(self) -> list:
        return [self.method, self.seed] + [self.values[c] for c in REPORT_COLUMNS[2:]]


def compute_report(method: str, seed: int, matrix, curve, baseline, lca_beta: int = 10) -> MetricsReport:
    R = _rows(matrix)
    T = R.shape[0]
    values = {
        "A_T": average_accuracy(R, T),
        "F_T": forgetting(R, T) if T >= 2 else float("nan"),
        "a_1": float(R[-1, 0]),
        "a_t": float(R[-1, -1]),
        "BWT": backward_transfer(R) if T >= 2 else float("nan"),
        "FWT": forward_transfer(R, baseline) if T >= 2 else float("nan"),
        "LCA_10": lca(curve, lca_beta),
    }
    return MetricsReport(method, seed, values)


def write_reports_csv(path, reports: list[MetricsReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            writer.writerow(report.row())


def write_reports_json(path, reports: list[MetricsReport]) -> None:
    rows = [dict(zip(REPORT_COLUMNS, report.row())) for report in reports]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
