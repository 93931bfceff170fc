"""Experiment configuration: YAML loading, presets, defaults and validation.

A single experiment file (see docs/config-schema.md):

  name: fusion20
  preset: sensor-fusion-20     # optional, explicit keys below override it
  problem:   {kind: sensor_fusion, n: 20, p: 20, s: 1, lambda: 0.01, seed: 0}
  graphs:    {kind: random_sc, C: 1, seed: 0, edge_prob: 0.2}
  algorithm: {method: ab_push_pull, alpha: auto}
  run:       {horizon: 2000, trace_every: 10, output: output/fusion20}
  verify: true

A batch file holds a list of such mappings under an ``experiments:`` key.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from pushpull.diagnostics import SIGMA_MODES
from pushpull.engine import METHODS
from pushpull.graph_core import DEFAULT_EDGE_PROB, GENERATOR_KINDS, STATIC_TOPOLOGIES
from pushpull.mixing import WEIGHT_SCHEMES

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ("sensor_fusion", "custom_file")
GRAPH_KINDS = GENERATOR_KINDS + ("file",)
DEFAULT_HORIZON = 1000

PRESETS: Dict[str, Dict[str, Any]] = {
    "sensor-fusion-20": {
        "problem": {"kind": "sensor_fusion", "n": 20, "p": 20, "s": 1, "lambda": 0.01, "seed": 0},
        "graphs": {"kind": "random_sc", "C": 1, "seed": 0, "edge_prob": DEFAULT_EDGE_PROB},
        # the worst-case bound is around 1e-12 for this network, so the preset runs
        # at a fixed stepsize that the trace shows to be stable
        "algorithm": {"method": "ab_push_pull", "alpha": 0.05},
        "run": {"horizon": 12000, "trace_every": 10},
    },
}
PRESETS["sensor-fusion-paper"] = PRESETS["sensor-fusion-20"]


class ConfigError(ValueError):
    """Configuration file could not be parsed or failed validation."""


@dataclass
class ProblemConfig:
    kind: str = "sensor_fusion"
    n: Optional[int] = None
    p: Optional[int] = None
    s: int = 1
    lam: float = 0.01
    seed: int = 0
    path: Optional[str] = None


@dataclass
class GraphConfig:
    kind: str = "random_sc"
    C: int = 1
    horizon: Optional[int] = None
    seed: int = 0
    edge_prob: float = DEFAULT_EDGE_PROB
    static_topology: str = "complete"
    path: Optional[str] = None


@dataclass
class AlgorithmConfig:
    method: str = "ab_push_pull"
    alpha: Union[str, float] = "auto"
    safety_factor: float = 1.0
    sigma: str = "empirical"
    weights: str = "uniform"

    @property
    def auto(self) -> bool:
        return self.alpha == "auto"


@dataclass
class RunSection:
    horizon: int = DEFAULT_HORIZON
    trace_every: int = 1
    output: str = "output/experiment"
    x0_seed: int = 0
    dump_matrices: bool = False


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    graphs: GraphConfig = field(default_factory=GraphConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    run: RunSection = field(default_factory=RunSection)
    verify: bool = True
    preset: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Effective configuration in file form (``load_config`` reads it back unchanged)."""
        doc: Dict[str, Any] = {"name": self.name}
        if self.preset is not None:
            doc["preset"] = self.preset
        problem = {"kind": self.problem.kind}
        if self.problem.kind == "custom_file":
            problem["path"] = self.problem.path
        else:
            problem.update(n=self.problem.n, p=self.problem.p, s=self.problem.s, seed=self.problem.seed)
            problem["lambda"] = self.problem.lam
        doc["problem"] = problem
        graphs: Dict[str, Any] = {"kind": self.graphs.kind, "C": self.graphs.C}
        if self.graphs.kind == "file":
            graphs["path"] = self.graphs.path
        else:
            graphs.update(
                horizon=self.graphs.horizon,
                seed=self.graphs.seed,
                edge_prob=self.graphs.edge_prob,
                static_topology=self.graphs.static_topology,
            )
        doc["graphs"] = graphs
        doc["algorithm"] = {
            "method": self.algorithm.method,
            "alpha": self.algorithm.alpha,
            "safety_factor": self.algorithm.safety_factor,
            "sigma": self.algorithm.sigma,
            "weights": self.algorithm.weights,
        }
        doc["run"] = {
            "horizon": self.run.horizon,
            "trace_every": self.run.trace_every,
            "output": self.run.output,
            "x0_seed": self.run.x0_seed,
            "dump_matrices": self.run.dump_matrices,
        }
        doc["verify"] = self.verify
        return doc


_SECTION_KEYS = {
    "problem": {"kind", "n", "p", "s", "lambda", "seed", "path"},
    "graphs": {"kind", "C", "horizon", "seed", "edge_prob", "static_topology", "path"},
    "algorithm": {"method", "alpha", "safety_factor", "sigma", "weights"},
    "run": {"horizon", "trace_every", "output", "x0_seed", "dump_matrices"},
}
_TOP_KEYS = {"name", "preset", "problem", "graphs", "algorithm", "run", "verify", "resolved"}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _section(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = doc.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {type(value).__name__}")
    unknown = sorted(set(value) - _SECTION_KEYS[name])
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section '{name}'")
    return value


def _int(value: Any, where: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where} must be at least {minimum}, got {value}")
    return value


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _choice(value: Any, where: str, allowed) -> str:
    if value not in allowed:
        raise ConfigError(f"{where} must be one of {list(allowed)}, got {value!r}")
    return value


def _problem(raw: Dict[str, Any]) -> ProblemConfig:
    kind = str(raw.get("kind", "sensor_fusion")).replace("-", "_")
    _choice(kind, "problem.kind", PROBLEM_KINDS)
    if kind == "custom_file":
        if not raw.get("path"):
            raise ConfigError("problem.kind custom_file requires problem.path")
        return ProblemConfig(kind=kind, path=str(raw["path"]))
    for key in ("n", "p"):
        if key not in raw:
            raise ConfigError(f"Invalid problem section format - missing '{key}' key")
    lam = _number(raw.get("lambda", 0.01), "problem.lambda")
    if lam <= 0:
        raise ConfigError(f"problem.lambda must be positive, got {lam}")
    return ProblemConfig(
        kind=kind,
        n=_int(raw["n"], "problem.n", 2),
        p=_int(raw["p"], "problem.p", 1),
        s=_int(raw.get("s", 1), "problem.s", 1),
        lam=lam,
        seed=_int(raw.get("seed", 0), "problem.seed", 0),
    )


def _graphs(raw: Dict[str, Any], run_horizon: int) -> GraphConfig:
    if "kind" not in raw:
        raise ConfigError("Invalid graphs section format - missing 'kind' key")
    kind = _choice(raw["kind"], "graphs.kind", GRAPH_KINDS)
    window = _int(raw.get("C", 1), "graphs.C", 1)
    if kind == "file":
        if not raw.get("path"):
            raise ConfigError("graphs.kind file requires graphs.path")
        return GraphConfig(kind=kind, C=window, path=str(raw["path"]))
    horizon = raw.get("horizon")
    horizon = run_horizon if horizon is None else _int(horizon, "graphs.horizon", 1)
    if window > horizon:
        raise ConfigError(f"graphs.C = {window} exceeds the graph horizon {horizon}")
    if kind == "c_partitioned" and window < 2:
        raise ConfigError("graphs.kind c_partitioned needs C >= 2")
    edge_prob = _number(raw.get("edge_prob", DEFAULT_EDGE_PROB), "graphs.edge_prob")
    if not 0.0 <= edge_prob <= 1.0:
        raise ConfigError(f"graphs.edge_prob must lie in [0, 1], got {edge_prob}")
    return GraphConfig(
        kind=kind,
        C=window,
        horizon=horizon,
        seed=_int(raw.get("seed", 0), "graphs.seed", 0),
        edge_prob=edge_prob,
        static_topology=_choice(raw.get("static_topology", "complete"), "graphs.static_topology", STATIC_TOPOLOGIES),
    )


def _algorithm(raw: Dict[str, Any]) -> AlgorithmConfig:
    alpha = raw.get("alpha", "auto")
    if alpha != "auto":
        alpha = _number(alpha, "algorithm.alpha")
        if alpha <= 0:
            raise ConfigError(f"algorithm.alpha must be positive or 'auto', got {alpha}")
    safety = _number(raw.get("safety_factor", 1.0), "algorithm.safety_factor")
    if not 0.0 < safety <= 1.0:
        raise ConfigError(f"algorithm.safety_factor must lie in (0, 1], got {safety}")
    return AlgorithmConfig(
        method=_choice(raw.get("method", "ab_push_pull"), "algorithm.method", METHODS),
        alpha=alpha,
        safety_factor=safety,
        sigma=_choice(raw.get("sigma", "empirical"), "algorithm.sigma", SIGMA_MODES),
        weights=_choice(raw.get("weights", "uniform"), "algorithm.weights", WEIGHT_SCHEMES),
    )


def config_from_dict(doc: Dict[str, Any], source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed document and apply presets and defaults."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown top-level key(s) {unknown}")
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"{source}: unknown preset '{preset}' (available: {sorted(PRESETS)})")
        doc = _merge(PRESETS[preset], doc)
    for key in ("problem", "graphs"):
        if key not in doc:
            raise ConfigError(f"Invalid experiment config format - missing '{key}' key")

    problem_raw, graphs_raw = _section(doc, "problem"), _section(doc, "graphs")
    algorithm_raw, run_raw = _section(doc, "algorithm"), _section(doc, "run")
    name = str(doc.get("name", "experiment"))

    default_horizon = graphs_raw.get("horizon", DEFAULT_HORIZON) if graphs_raw.get("kind") != "file" else DEFAULT_HORIZON
    run = RunSection(
        horizon=_int(run_raw.get("horizon", default_horizon), "run.horizon", 1),
        trace_every=_int(run_raw.get("trace_every", 1), "run.trace_every", 1),
        output=str(run_raw.get("output", f"output/{name}")),
        x0_seed=_int(run_raw.get("x0_seed", 0), "run.x0_seed", 0),
        dump_matrices=bool(run_raw.get("dump_matrices", False)),
    )
    verify = doc.get("verify", True)
    if not isinstance(verify, bool):
        raise ConfigError(f"verify must be true or false, got {verify!r}")
    try:
        return ExperimentConfig(
            name=name,
            problem=_problem(problem_raw),
            graphs=_graphs(graphs_raw, run.horizon),
            algorithm=_algorithm(algorithm_raw),
            run=run,
            verify=verify,
            preset=preset,
        )
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from e


def _read_yaml(path: str | Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark is not None else str(path)
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{where}: YAML parse error: {problem}") from e


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate one experiment file."""
    doc = _read_yaml(path)
    if doc is None:
        raise ConfigError(f"{path}: empty config file")
    cfg = config_from_dict(doc, source=str(path))
    logger.debug("loaded config %s from %s", cfg.name, path)
    return cfg


def load_experiments_config(path: str | Path) -> List[ExperimentConfig]:
    """Load a batch file; each entry under ``experiments:`` is a full experiment mapping."""
    doc = _read_yaml(path)
    if not doc or "experiments" not in doc:
        raise ConfigError("Invalid experiments.yaml format - missing 'experiments' key")
    entries = doc["experiments"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'experiments' must be a non-empty list")
    configs = [config_from_dict(entry, source=f"{path}[{i}]") for i, entry in enumerate(entries)]
    names = [c.name for c in configs]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ConfigError(f"duplicate experiment names: {duplicates}")
    return configs


def dump_config(cfg: ExperimentConfig, resolved: Optional[Dict[str, Any]] = None) -> str:
    """YAML echo of the effective config; ``resolved`` records run-time choices such as alpha."""
    doc = cfg.to_dict()
    if resolved:
        doc["resolved"] = resolved
    return yaml.safe_dump(doc, sort_keys=False)
