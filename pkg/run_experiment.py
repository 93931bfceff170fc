#!/usr/bin/env python3
"""
Run AB/Push-Pull experiments from a YAML config.

Commands:
  run      simulate one experiment, write trace.csv, effective_config.yaml and report.txt
  compare  run several configs on the same problem and graphs, write compare.csv
  bound    print the stepsize-range components and the spectral certificate
  metrics  print strong connectivity, diameter and edge utility per round of a graph file

Usage:
  python run_experiment.py run experiment.yaml
  python run_experiment.py compare ab.yaml pd.yaml --output output/compare
  python run_experiment.py bound experiment.yaml
  python run_experiment.py metrics graphs.txt [--window 3]

Exit codes:
  0 success, 1 divergence / verification failure / stage error, 2 config or input problem
"""

from __future__ import annotations

import argparse
import logging
from typing import Callable

from pushpull import harness
from pushpull.config import ConfigError, load_config
from pushpull.graph_core import ConnectivityError

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
logger = logging.getLogger(__name__)


def run_stage(stage_name: str, fn: Callable[[], int]) -> int:
    """Run one command, mapping input problems to 2 and anything else to 1."""
    logger.info("=" * 60)
    logger.info("STAGE: %s", stage_name)
    logger.info("=" * 60)
    try:
        return fn()
    except (ConfigError, ConnectivityError, ValueError, FileNotFoundError) as e:
        logger.error("❌ %s: %s", stage_name, e)
        return 2
    except Exception as e:
        logger.exception("Error in stage %s: %s", stage_name, e)
        return 1


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    logger.info("🚀 Experiment: %s (%s)", cfg.name, cfg.algorithm.method)
    outcome = harness.run_experiment(cfg)
    for kind, path in outcome.files.items():
        logger.info("   %s: %s", kind, path)
    if outcome.report is not None:
        for line in outcome.report.to_text().splitlines():
            logger.info("   %s", line)
    if outcome.status != 0:
        logger.error("❌ Experiment %s failed%s", cfg.name, f": {outcome.error}" if outcome.error else "")
        return outcome.status
    final = outcome.result.trace[-1]
    logger.info("✅ Experiment %s finished: k=%d relative residual %.3e", cfg.name, final.k, final.relative_residual)
    return 0


def cmd_compare(args) -> int:
    cfgs = [load_config(path) for path in args.configs]
    comparison = harness.compare_methods(cfgs, output=args.output)
    logger.info("📊 Compared %d runs: %s", len(comparison.labels), ", ".join(comparison.labels))
    logger.info("✅ Wrote %s", comparison.path)
    return 0


def cmd_bound(args) -> int:
    summary = harness.bound_summary(load_config(args.config))
    for key in ("L", "mu", "c", "tau", "r", "varphi", "sigma", "sigma_mode"):
        print(f"{key:<14} {summary[key]}")
    for key in ("x_dispersion", "y_dispersion", "determinant", "gradient"):
        print(f"term {key:<9} {summary[key]!r}")
    for key in ("eta", "limit", "alpha", "rho", "det_gap", "certified"):
        print(f"{key:<14} {summary[key]!r}")
    return 0 if summary["certified"] else 1


def cmd_metrics(args) -> int:
    rows = harness.metrics_rows(args.graph_file, window=args.window)
    print("k,edges,strongly_connected,diameter,max_edge_utility")
    for row in rows:
        print(
            f"{row['k']},{row['edges']},{str(row['strongly_connected']).lower()},"
            f"{'' if row['diameter'] is None else row['diameter']},"
            f"{'' if row['max_edge_utility'] is None else row['max_edge_utility']}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="AB/Push-Pull experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run one experiment")
    p_run.add_argument("config", help="Path to experiment YAML")
    p_run.set_defaults(handler=cmd_run)

    p_cmp = sub.add_parser("compare", help="Run several experiments and align their residuals")
    p_cmp.add_argument("configs", nargs="+", help="Experiment YAML files sharing problem and graphs")
    p_cmp.add_argument("--output", default="output/compare", help="Directory for compare.csv")
    p_cmp.set_defaults(handler=cmd_compare)

    p_bound = sub.add_parser("bound", help="Print the stepsize range and certificate")
    p_bound.add_argument("config", help="Path to experiment YAML")
    p_bound.set_defaults(handler=cmd_bound)

    p_metrics = sub.add_parser("metrics", help="Print per-round graph metrics of a graph file")
    p_metrics.add_argument("graph_file", help="Graph sequence file")
    p_metrics.add_argument("--window", type=int, default=1, help="Connectivity window C")
    p_metrics.set_defaults(handler=cmd_metrics)

    args = parser.parse_args(argv)
    return run_stage(args.command, lambda: args.handler(args))


if __name__ == "__main__":
    raise SystemExit(main())
