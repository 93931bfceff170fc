from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import yaml

from pushpull import mixing
from pushpull.graph_core import Digraph, DigraphSequence, generate_sequence
from pushpull.objectives import make_sensor_fusion


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def small_problem():
    return make_sensor_fusion(n=3, p=2, s=1, lam=0.1, seed=1)


@pytest.fixture
def ring3():
    return DigraphSequence((Digraph.ring(3),))


@pytest.fixture
def random_schedule():
    def build(n: int, horizon: int, seed: int, edge_prob: float = 0.3, scheme: str = "uniform"):
        seq = generate_sequence(n, "random_sc", horizon=horizon, seed=seed, edge_prob=edge_prob)
        return mixing.build_schedule(seq, horizon, scheme)

    return build


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a config mapping to YAML; outputs default into tmp_path."""

    def write(doc: dict, name: str = "experiment.yaml") -> Path:
        doc = dict(doc)
        run = dict(doc.get("run", {}))
        run.setdefault("output", str(tmp_path / "out" / doc.get("name", "experiment")))
        doc["run"] = run
        path = tmp_path / name
        path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
        return path

    return write


@pytest.fixture
def small_config():
    return {
        "name": "small",
        "problem": {"kind": "sensor_fusion", "n": 3, "p": 2, "s": 1, "lambda": 0.1, "seed": 1},
        "graphs": {"kind": "random_sc", "seed": 4, "edge_prob": 0.3},
        "algorithm": {"alpha": "auto"},
        "run": {"horizon": 60, "trace_every": 5},
    }
