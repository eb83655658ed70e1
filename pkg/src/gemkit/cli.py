"""Command-line interface.

Subcommands:

* ``run``        -- train one config (all its seeds, or one via --seed)
                    and write run records
* ``suite``      -- run a directory (or list) of configs, write records
                    plus aggregate CSV/JSON
* ``search-eps`` -- drive the margin-refinement search over repeated
                    training populations (or an analytic test objective)
* ``metrics``    -- recompute the metric suite from a stored run record
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .epsilon_search import run_search
from .errors import GemKitError
from .harness import run_suite, save_record, load_record_dict, train_sequence
from .metrics import REPORT_COLUMNS, compute_report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train a single experiment config")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--seed", type=int, default=None, help="run only this seed")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--subset", default="eval", choices=["eval", "cv", "all"])

    suite = sub.add_parser("suite", help="run many configs and aggregate")
    suite.add_argument("--configs", required=True, nargs="+",
                       help="config files and/or directories of *.json configs")
    suite.add_argument("--out", default="results", help="output directory")
    suite.add_argument("--jobs", type=int, default=1, help="parallel runs")
    suite.add_argument("--subset", default="eval", choices=["eval", "cv", "all"])

    search = sub.add_parser("search-eps", help="refine the soft-constraint margin")
    search.add_argument("--config", required=True,
                        help="base config; method/epsilon are overridden per grid point")
    search.add_argument("--out", default="results", help="output directory")
    search.add_argument("--grid", type=int, default=11, help="grid points per repeat")
    search.add_argument("--repeats", type=int, default=5, help="refinement repeats")
    search.add_argument("--subset", default="cv", choices=["eval", "cv", "all"])
    search.add_argument("--analytic-peak", type=float, default=None,
                        help="skip training; score margins with -(eps - peak)^2")

    metrics = sub.add_parser("metrics", help="recompute metrics from a run record")
    metrics.add_argument("--record", required=True, help="stored run record JSON")
    metrics.add_argument("--out", default=None, help="optional output JSON path")
    return parser


def _expand_configs(paths: list[str]) -> list[ExperimentConfig]:
    files: list[Path] = []
    for entry in paths:
        path = Path(entry)
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        else:
            files.append(path)
    return [load_config(f) for f in files]


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    for seed in seeds:
        record = train_sequence(cfg, seed, subset=args.subset)
        path = save_record(record, args.out)
        line = "  ".join(
            f"{k}={record.report.values[k]:.4f}"
            for k in REPORT_COLUMNS[2:]
            if not math.isnan(record.report.values[k])
        )
        print(f"{record.label} seed={seed}  {line}")
        print(f"wrote {path}")
    return 0


def _cmd_suite(args) -> int:
    configs = _expand_configs(args.configs)
    if not configs:
        print("no config files found", file=sys.stderr)
        return 1
    summary = run_suite(configs, args.out, jobs=args.jobs, subset=args.subset)
    for row in summary["rows"]:
        print(
            f"{row['label']:>16s}  A_T={row['A_T_mean']:.4f}(+-{row['A_T_std']:.4f})"
            f"  F_T={row['F_T_mean']:.4f}  n={row['n_seeds']}"
        )
    print(f"wrote {Path(args.out) / 'aggregate.csv'}")
    return 0


def _cmd_search_eps(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats: dict[float, tuple[float, float, float]] = {}

    if args.analytic_peak is not None:
        peak = args.analytic_peak

        def trainer(eps: float) -> float:
            score = -((eps - peak) ** 2)
            stats[eps] = (score, 0.0, float("nan"))
            return score

    else:

        def trainer(eps: float) -> float:
            if eps not in stats:  # deterministic per (eps, seeds): reuse
                run_cfg = dataclasses.replace(cfg, method="SOFTGEM", epsilon=eps)
                records = [
                    train_sequence(run_cfg, seed, subset=args.subset)
                    for seed in cfg.seeds
                ]
                a_t = np.array([r.report.values["A_T"] for r in records])
                f_t = np.array([r.report.values["F_T"] for r in records])
                stats[eps] = (
                    float(a_t.mean()),
                    float(a_t.std(ddof=1)) if len(a_t) > 1 else 0.0,
                    float(f_t.mean()),
                )
            return stats[eps][0]

    best_eps, history = run_search(trainer, n_points=args.grid, max_repeats=args.repeats)

    history_path = out_dir / "search_history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "epsilon", "a_t_mean", "a_t_std", "f_t_mean"])
        for repeat, eps, _ in history:
            mean, std, f_mean = stats[eps]
            writer.writerow([repeat, eps, mean, std, f_mean])
    best_path = out_dir / "best_epsilon.json"
    best_path.write_text(
        json.dumps(
            {
                "best_epsilon": best_eps,
                "grid_points": args.grid,
                "max_repeats": args.repeats,
                "repeats_run": max(r for r, _, _ in history) + 1,
            },
            sort_keys=True,
        )
        + "\n"
    )
    print(f"best epsilon: {best_eps}")
    print(f"wrote {history_path}")
    return 0


def _cmd_metrics(args) -> int:
    path = Path(args.record)
    if not path.exists():
        print(f"record file not found: {path}", file=sys.stderr)
        return 1
    payload = load_record_dict(path)
    report = compute_report(
        payload["method"],
        payload["seed"],
        np.array(payload["accuracy_matrix"]),
        payload["learning_curve"],
        payload["random_baseline"],
    )
    for key in REPORT_COLUMNS[2:]:
        print(f"{key} = {report.values[key]:.6f}")
    if args.out:
        Path(args.out).write_text(
            json.dumps(
                {k: (None if math.isnan(v) else v) for k, v in report.values.items()},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "suite": _cmd_suite,
        "search-eps": _cmd_search_eps,
        "metrics": _cmd_metrics,
    }
    try:
        return handlers[args.command](args)
    except GemKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
