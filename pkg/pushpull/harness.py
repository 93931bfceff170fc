"""Wires configuration, graphs, objectives, engine and diagnostics into runnable experiments.

Outputs of one experiment land in ``run.output``:
  trace.csv              k,relative_residual,opt_gap,D,S,max_agent_error,rho_bound
  effective_config.yaml  the validated config plus a ``resolved`` section
  report.txt             verification report (when ``verify`` is on)
  matrices.txt           A_k and B_k per round (when ``run.dump_matrices`` is on)

All files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pushpull import diagnostics, engine, mixing
from pushpull.config import ConfigError, ExperimentConfig, dump_config
from pushpull.diagnostics import SpectralCertificate, StepsizeBound, UniformConstants
from pushpull.engine import DivergenceError, RunConfig, RunResult
from pushpull.graph_core import (
    ConnectivityError,
    DigraphSequence,
    GraphMetrics,
    generate_sequence,
    read_sequence,
    round_metrics,
)
from pushpull.mixing import MixingSchedule, StochasticVector
from pushpull.objectives import SensorFusion, load_problem, make_sensor_fusion, optimum

logger = logging.getLogger(__name__)

TRACE_HEADER = ("k", "relative_residual", "opt_gap", "D", "S", "max_agent_error", "rho_bound")
TRIAL_ROUNDS = 50
MAX_HALVINGS = 60


@dataclass
class PreparedExperiment:
    cfg: ExperimentConfig
    problem: SensorFusion
    x_star: np.ndarray
    graphs: DigraphSequence
    schedule: MixingSchedule
    phis: List[StochasticVector]
    pis: List[StochasticVector]
    alpha: float
    alpha_source: str
    metrics: Optional[List[Optional[GraphMetrics]]] = None
    uniform: Optional[UniformConstants] = None
    bound: Optional[StepsizeBound] = None
    certificate: Optional[SpectralCertificate] = None

    @property
    def rho_bound(self) -> float:
        return self.certificate.rho if self.certificate is not None else math.nan

    def resolved(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"alpha": self.alpha, "alpha_source": self.alpha_source}
        if self.bound is not None:
            out["stepsize_bound"] = self.bound.limit
            out["stepsize_terms"] = list(self.bound.terms)
        if self.certificate is not None:
            out["rho_bound"] = self.certificate.rho
            out["certified"] = self.certificate.certified
        out["L"], out["mu"] = self.problem.L, self.problem.mu
        return out


@dataclass
class ExperimentOutcome:
    status: int
    prepared: Optional[PreparedExperiment] = None
    result: Optional[RunResult] = None
    report: Optional[diagnostics.VerificationReport] = None
    files: Dict[str, Path] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class Comparison:
    labels: List[str]
    rows: List[Tuple[int, List[Optional[float]]]]
    path: Optional[Path] = None


def build_problem(cfg: ExperimentConfig) -> SensorFusion:
    p = cfg.problem
    if p.kind == "custom_file":
        problem = load_problem(p.path)
        logger.info("loaded problem instance from %s (n=%d p=%d)", p.path, problem.n, problem.p)
        return problem
    return make_sensor_fusion(p.n, p.p, p.s, p.lam, p.seed)


def build_graphs(cfg: ExperimentConfig, n: int) -> DigraphSequence:
    g = cfg.graphs
    if g.kind == "file":
        seq = read_sequence(g.path, window=g.C)
        if seq.n != n:
            raise ConfigError(f"graph file {g.path} has {seq.n} nodes but the problem has {n} agents")
        seq.validate(cyclic=cfg.run.horizon > len(seq))
        return seq
    seq = generate_sequence(
        n,
        g.kind,
        horizon=g.horizon,
        window=g.C,
        seed=g.seed,
        edge_prob=g.edge_prob,
        topology=g.static_topology,
    )
    if cfg.run.horizon > len(seq):
        seq.validate(cyclic=True)
    return seq


def search_push_diging_stepsize(
    f: SensorFusion,
    schedule: MixingSchedule,
    start: float,
    x0_seed: int = 0,
    x_star: Optional[np.ndarray] = None,
) -> float:
    """Halve ``start`` until a short Push-DIGing trial stays finite."""
    trial = schedule.truncated(min(TRIAL_ROUNDS, schedule.horizon))
    alpha = start
    for _ in range(MAX_HALVINGS):
        try:
            engine.run_push_diging(f, trial, RunConfig(alpha, trial.horizon, trace_every=max(trial.horizon, 1), x0_seed=x0_seed), x_star=x_star)
            return alpha
        except DivergenceError:
            logger.warning("Push-DIGing trial diverged at alpha=%.6g, halving", alpha)
            alpha /= 2.0
    raise DivergenceError(0, 0, reason=f"no finite Push-DIGing stepsize found after {MAX_HALVINGS} halvings")


def _ab_bound(
    problem: SensorFusion,
    schedule: MixingSchedule,
    phis: Sequence[StochasticVector],
    pis: Sequence[StochasticVector],
    metrics: Sequence[Optional[GraphMetrics]],
    sigma_mode: str,
) -> Tuple[UniformConstants, StepsizeBound]:
    uniform = diagnostics.uniform_constants(schedule, phis, pis, metrics, sigma_mode)
    return uniform, uniform.stepsize(problem.L, problem.mu, problem.n)


def _certify(uniform: UniformConstants, problem: SensorFusion, alpha: float) -> Optional[SpectralCertificate]:
    if alpha >= 2.0 / (problem.n * (problem.L + problem.mu)):
        logger.warning("alpha=%.6g is outside the range of the uniform bound; no certificate", alpha)
        return None
    return diagnostics.spectral_certificate(uniform.bound_matrix(problem.L, problem.mu, problem.n, alpha))


def prepare(cfg: ExperimentConfig, need_metrics: Optional[bool] = None) -> PreparedExperiment:
    """Build the problem, graphs, schedule and weights, and resolve the stepsize."""
    problem = build_problem(cfg)
    x_star = optimum(problem)
    graphs = build_graphs(cfg, problem.n)
    schedule = mixing.build_schedule(graphs, cfg.run.horizon, cfg.algorithm.weights)
    phis, pis = mixing.weight_sequences(schedule)
    algo = cfg.algorithm
    if need_metrics is None:
        need_metrics = algo.auto or cfg.verify

    metrics = uniform = bound = certificate = None
    if need_metrics:
        metrics = round_metrics(schedule.graphs)
        if all(m is not None for m in metrics):
            uniform, bound = _ab_bound(problem, schedule, phis, pis, metrics, algo.sigma)
        elif algo.auto:
            raise ConnectivityError("alpha 'auto' needs every round to be strongly connected; set alpha explicitly")
        else:
            logger.warning("some rounds are not strongly connected; the uniform stepsize bound does not apply")

    if not algo.auto:
        alpha, source = float(algo.alpha), "explicit"
    elif algo.method == "ab_push_pull":
        alpha, source = bound.alpha * algo.safety_factor, "auto"
    else:
        start = bound.alpha * algo.safety_factor
        alpha, source = search_push_diging_stepsize(problem, schedule, start, cfg.run.x0_seed, x_star), "search"

    if uniform is not None and algo.method == "ab_push_pull":
        certificate = _certify(uniform, problem, alpha)
    logger.info("stepsize alpha=%.6g (%s)", alpha, source)
    return PreparedExperiment(
        cfg, problem, x_star, graphs, schedule, phis, pis, alpha, source, metrics, uniform, bound, certificate
    )


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def trace_to_csv(trace: Sequence[engine.TraceRecord], rho_bound: float) -> str:
    lines = [",".join(TRACE_HEADER)]
    for rec in trace:
        values = rec.as_row()
        lines.append(",".join([str(values[0])] + [_fmt(v) for v in values[1:]] + [_fmt(rho_bound)]))
    return "\n".join(lines) + "\n"


def write_trace(path: str | Path, trace: Sequence[engine.TraceRecord], rho_bound: float = math.nan) -> Path:
    path = Path(path)
    _atomic_write_text(path, trace_to_csv(trace, rho_bound))
    return path


def read_trace(path: str | Path) -> List[Dict[str, float]]:
    """Parse a trace file back into dictionaries keyed by the header."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        row = {key: float(v) for key, v in zip(header, values)}
        row["k"] = int(row["k"])
        rows.append(row)
    return rows


def matrices_text(schedule: MixingSchedule) -> str:
    blocks = []
    for k, rnd in enumerate(schedule.rounds):
        blocks.append(f"round {k}\nA\n{mixing.matrix_to_text(rnd.A.entries)}\nB\n{mixing.matrix_to_text(rnd.B.entries)}")
    return "\n".join(blocks) + "\n"


def execute(prepared: PreparedExperiment, checker: Optional[diagnostics.CompositeChecker] = None) -> RunResult:
    cfg = prepared.cfg
    run_cfg = RunConfig(prepared.alpha, cfg.run.horizon, trace_every=cfg.run.trace_every, x0_seed=cfg.run.x0_seed)
    if cfg.algorithm.method == "push_diging":
        return engine.run_push_diging(prepared.problem, prepared.schedule, run_cfg, x_star=prepared.x_star)
    return engine.run(
        prepared.problem,
        prepared.schedule,
        run_cfg,
        on_step=checker.observe if checker is not None else None,
        x_star=prepared.x_star,
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutcome:
    """Run one experiment end to end and write its files.

    Status 0 on success, 1 when the run diverges or verification fails. Configuration
    and input problems propagate as exceptions for the caller to map.
    """
    out_dir = Path(cfg.run.output)
    prepared = prepare(cfg)
    outcome = ExperimentOutcome(status=0, prepared=prepared)

    checker = None
    if cfg.verify and cfg.algorithm.method == "ab_push_pull":
        checker = diagnostics.CompositeChecker(
            prepared.schedule,
            prepared.problem,
            prepared.x_star,
            prepared.alpha,
            metrics=prepared.metrics,
            phis=prepared.phis,
            pis=prepared.pis,
            uniform=prepared.uniform,
        )
    elif cfg.verify:
        logger.warning("verification covers AB/Push-Pull only; skipped for %s", cfg.algorithm.method)

    config_path = out_dir / "effective_config.yaml"
    try:
        result = execute(prepared, checker)
    except DivergenceError as e:
        logger.error("run diverged: %s", e)
        _atomic_write_text(config_path, dump_config(cfg, prepared.resolved()))
        outcome.status, outcome.error = 1, str(e)
        outcome.files["effective_config"] = config_path
        return outcome
    outcome.result = result

    outcome.files["trace"] = write_trace(out_dir / "trace.csv", result.trace, prepared.rho_bound)
    _atomic_write_text(config_path, dump_config(cfg, prepared.resolved()))
    outcome.files["effective_config"] = config_path
    if cfg.run.dump_matrices:
        outcome.files["matrices"] = out_dir / "matrices.txt"
        _atomic_write_text(outcome.files["matrices"], matrices_text(prepared.schedule))

    if checker is not None:
        outcome.report = checker.report()
        outcome.files["report"] = out_dir / "report.txt"
        _atomic_write_text(outcome.files["report"], outcome.report.to_text())
        if not outcome.report.passed:
            logger.error("verification failed: %s", outcome.report.first_violation)
            outcome.status = 1
    return outcome


def _labels(cfgs: Sequence[ExperimentConfig]) -> List[str]:
    labels: List[str] = []
    for cfg in cfgs:
        label, suffix = cfg.name, 2
        while label in labels:
            label = f"{cfg.name}_{suffix}"
            suffix += 1
        labels.append(label)
    return labels


def compare_methods(cfgs: Sequence[ExperimentConfig], output: Optional[str | Path] = None) -> Comparison:
    """Run every config on the same problem and graphs and align their residual columns by k."""
    if not cfgs:
        raise ConfigError("compare needs at least one config")
    first = cfgs[0]
    for cfg in cfgs[1:]:
        if cfg.problem != first.problem:
            raise ConfigError(f"experiment '{cfg.name}' uses a different problem than '{first.name}'")
        if cfg.graphs != first.graphs:
            raise ConfigError(f"experiment '{cfg.name}' uses different graph settings than '{first.name}'")

    labels = _labels(cfgs)
    columns: List[Dict[int, float]] = []
    for label, cfg in zip(labels, cfgs):
        logger.info("compare: running %s (%s)", label, cfg.algorithm.method)
        result = execute(prepare(cfg, need_metrics=cfg.algorithm.auto))
        columns.append({rec.k: rec.relative_residual for rec in result.trace})

    ks = sorted(set().union(*columns))
    rows = [(k, [col.get(k) for col in columns]) for k in ks]
    comparison = Comparison(labels, rows)
    if output is not None:
        header = ["k"] + [f"{label}_relative_residual" for label in labels]
        lines = [",".join(header)] + [",".join([str(k)] + [_fmt(v) for v in values]) for k, values in rows]
        comparison.path = Path(output) / "compare.csv"
        _atomic_write_text(comparison.path, "\n".join(lines) + "\n")
    return comparison


def bound_summary(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Stepsize-range components for the configured problem and graphs."""
    problem = build_problem(cfg)
    graphs = build_graphs(cfg, problem.n)
    schedule = mixing.build_schedule(graphs, cfg.run.horizon, cfg.algorithm.weights)
    phis, pis = mixing.weight_sequences(schedule)
    uniform, bound = _ab_bound(problem, schedule, phis, pis, round_metrics(schedule.graphs), cfg.algorithm.sigma)
    cert = diagnostics.spectral_certificate(uniform.bound_matrix(problem.L, problem.mu, problem.n, bound.alpha))
    summary: Dict[str, Any] = dict(bound.as_dict())
    summary.update(
        L=problem.L,
        mu=problem.mu,
        c=uniform.c,
        tau=uniform.tau,
        r=uniform.r,
        varphi=uniform.varphi,
        sigma=uniform.sigma,
        sigma_mode=uniform.sigma_mode,
        rho=cert.rho,
        certified=cert.certified,
        det_gap=cert.det_gap,
    )
    return summary


def metrics_rows(path: str | Path, window: int = 1) -> List[Dict[str, Any]]:
    """Per-round strong connectivity, diameter and edge utility of a graph-sequence file."""
    seq = read_sequence(path, window=window)
    rows = []
    for k, (g, m) in enumerate(zip(seq.graphs, round_metrics(seq.graphs))):
        rows.append(
            {
                "k": k,
                "edges": len(g.edges),
                "strongly_connected": m is not None,
                "diameter": m.diameter if m is not None else None,
                "max_edge_utility": m.max_edge_utility if m is not None else None,
            }
        )
    return rows
