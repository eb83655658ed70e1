"""Heuristic interval-refinement search for the soft-constraint margin.

The search evaluates a grid of N margin values over [0, 1], then
repeatedly re-centers a new N-point grid around the two best-scoring
values (score = final average accuracy of a training population):

* best at the grid's left edge  -> new range [best, second + delta]
* second at the grid's right edge -> new range [best - delta, second]
* both interior                 -> widen both sides by delta

with delta the current grid spacing and everything clipped to [0, 1].
The search stops once the two best values sit on opposite grid edges
(after the first repeat) or once the repeat budget is exhausted; at most
max_repeats + 1 grids are ever evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridTooSmall, MissingResults


@dataclass
class EpsilonSearchState:
    repeat_index: int
    grid: list[float]
    delta: float
    max_repeats: int
    results: dict[float, float] = field(default_factory=dict)


def init_grid(n_points: int, max_repeats: int = 5) -> EpsilonSearchState:
    """N equally spaced margin values over [0, 1]."""
    if n_points < 3:
        raise GridTooSmall(f"grid needs at least 3 points, got {n_points}")
    grid = [float(v) for v in np.linspace(0.0, 1.0, n_points)]
    return EpsilonSearchState(
        repeat_index=0,
        grid=grid,
        delta=1.0 / (n_points - 1),
        max_repeats=max_repeats,
    )


def best_two(state: EpsilonSearchState) -> tuple[float, float]:
    """The top-scoring and runner-up grid values; ties go to the smaller value."""
    missing = [eps for eps in state.grid if eps not in state.results]
    if missing:
        raise MissingResults(f"grid values without a score: {missing}")
    ranked = sorted(state.grid, key=lambda eps: (-state.results[eps], eps))
    return ranked[0], ranked[1]


def refine(state: EpsilonSearchState) -> EpsilonSearchState | None:
    """Next search state, or None once the search has stopped."""
    first, second = best_two(state)
    lo, hi = min(first, second), max(first, second)
    left, right = state.grid[0], state.grid[-1]
    at_edges = lo == left and hi == right
    if (at_edges and state.repeat_index > 0) or state.repeat_index >= state.max_repeats:
        return None
    if lo == left:
        new_lo, new_hi = lo, hi + state.delta
    elif hi == right:
        new_lo, new_hi = lo - state.delta, hi
    else:
        new_lo, new_hi = lo - state.delta, hi + state.delta
    new_lo = max(0.0, new_lo)
    new_hi = min(1.0, new_hi)
    n_points = len(state.grid)
    return replace(
        state,
        repeat_index=state.repeat_index + 1,
        grid=[float(v) for v in np.linspace(new_lo, new_hi, n_points)],
        delta=(new_hi - new_lo) / (n_points - 1),
        results={},
    )


def run_search(trainer, n_points: int = 11, max_repeats: int = 5):
    """Drive the full search; trainer maps a margin value to its score.

    Returns (best margin over every evaluated point, history), where
    history is a list of (repeat_index, margin, score) in evaluation
    order. The trainer must be deterministic per margin.
    """
    state = init_grid(n_points, max_repeats)
    history = []
    while state is not None:
        for eps in state.grid:
            score = float(trainer(eps))
            state.results[eps] = score
            history.append((state.repeat_index, eps, score))
        state = refine(state)
    best_eps, _ = max(
        ((eps, score) for _, eps, score in history),
        key=lambda item: (item[1], -item[0]),
    )
    return best_eps, history
