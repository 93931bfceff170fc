#!/usr/bin/env python3
"""
Run every experiment defined in experiments.yaml.

For each experiment: build the problem and graph sequence, simulate, write the trace
and the effective config, and verify the analysis inequalities when ``verify`` is on.
A failing experiment does not stop the batch; failures are summarised at the end.

Usage:
  python run_all_experiments.py [--experiments-file experiments.yaml] [--only fusion20 ring-auto]
"""

from __future__ import annotations

import argparse
import logging
import time

from pushpull import harness
from pushpull.config import ConfigError, ExperimentConfig, load_experiments_config

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
logger = logging.getLogger(__name__)


def run_one(cfg: ExperimentConfig) -> int:
    """Run a single experiment, returning its exit status."""
    logger.info("")
    logger.info("=" * 70)
    logger.info("🚀 Processing: %s (%s, %s)", cfg.name, cfg.algorithm.method, cfg.graphs.kind)
    logger.info("=" * 70)
    start = time.time()
    try:
        outcome = harness.run_experiment(cfg)
    except (ConfigError, ValueError) as e:
        logger.error("❌ %s: invalid input: %s", cfg.name, e)
        return 2
    except Exception as e:
        logger.exception("❌ Error processing %s: %s", cfg.name, e)
        return 1
    if outcome.status != 0:
        logger.error("❌ %s failed%s", cfg.name, f": {outcome.error}" if outcome.error else " verification")
        return outcome.status
    logger.info(
        "✅ Completed %s in %.1f seconds (relative residual %.3e)",
        cfg.name, time.time() - start, outcome.result.trace[-1].relative_residual,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run all experiments from experiments.yaml")
    parser.add_argument("--experiments-file", default="experiments.yaml", help="Path to experiments.yaml")
    parser.add_argument("--only", nargs="+", help="Run only these experiment names")
    args = parser.parse_args(argv)

    try:
        experiments = load_experiments_config(args.experiments_file)
    except ConfigError as e:
        logger.error("Failed to load experiments: %s", e)
        return 2

    if args.only:
        unknown = sorted(set(args.only) - {c.name for c in experiments})
        if unknown:
            logger.error("Unknown experiment names: %s", ", ".join(unknown))
            return 2
        experiments = [c for c in experiments if c.name in args.only]
        logger.info("Filtering to experiments: %s", ", ".join(args.only))

    total_start = time.time()
    failed = []
    for i, cfg in enumerate(experiments, 1):
        logger.info("")
        logger.info("📊 Progress: %d/%d", i, len(experiments))
        if run_one(cfg) != 0:
            failed.append(cfg.name)

    logger.info("")
    logger.info("=" * 70)
    logger.info("🏁 Batch Complete")
    logger.info("=" * 70)
    logger.info("Total time: %.1f seconds", time.time() - total_start)
    logger.info("Experiments run: %d", len(experiments))
    logger.info("Successful: %d", len(experiments) - len(failed))
    if failed:
        logger.warning("Failed: %d (%s)", len(failed), ", ".join(failed))
        return 1
    logger.info("✅ All experiments completed successfully!")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
