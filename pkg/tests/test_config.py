from pathlib import Path

import pytest
import yaml

from pushpull.config import (
    DEFAULT_HORIZON,
    ConfigError,
    config_from_dict,
    dump_config,
    load_config,
    load_experiments_config,
)

REPO_ROOT = Path(__file__).resolve().parent.parent

MINIMAL = {
    "problem": {"n": 4, "p": 2},
    "graphs": {"kind": "random_sc"},
}


def test_defaults():
    cfg = config_from_dict(MINIMAL)
    assert cfg.name == "experiment"
    assert (cfg.problem.kind, cfg.problem.s, cfg.problem.lam, cfg.problem.seed) == ("sensor_fusion", 1, 0.01, 0)
    assert (cfg.graphs.C, cfg.graphs.horizon, cfg.graphs.static_topology) == (1, DEFAULT_HORIZON, "complete")
    assert cfg.algorithm.auto and cfg.algorithm.method == "ab_push_pull"
    assert (cfg.run.horizon, cfg.run.trace_every, cfg.run.output) == (DEFAULT_HORIZON, 1, "output/experiment")
    assert cfg.verify


def test_graph_horizon_defaults_to_the_run_horizon():
    cfg = config_from_dict({**MINIMAL, "run": {"horizon": 250}})
    assert cfg.graphs.horizon == 250


def test_preset_fills_the_sensor_fusion_instance():
    cfg = config_from_dict({"name": "fusion20", "preset": "sensor-fusion-20", "run": {"horizon": 300}})
    assert (cfg.problem.n, cfg.problem.p, cfg.problem.s, cfg.problem.lam) == (20, 20, 1, 0.01)
    assert cfg.graphs.kind == "random_sc"
    assert cfg.run.horizon == 300
    assert cfg.run.trace_every == 10
    assert cfg.algorithm.alpha == 0.05


def test_preset_alias_matches():
    alias = config_from_dict({"preset": "sensor-fusion-paper"})
    main = config_from_dict({"preset": "sensor-fusion-20"})
    assert (alias.problem, alias.graphs, alias.algorithm, alias.run) == (main.problem, main.graphs, main.algorithm, main.run)
    assert alias.preset == "sensor-fusion-paper"


def test_explicit_keys_override_the_preset():
    cfg = config_from_dict(
        {"preset": "sensor-fusion-20", "problem": {"n": 5}, "algorithm": {"method": "push_diging", "alpha": 0.01}}
    )
    assert cfg.problem.n == 5 and cfg.problem.p == 20
    assert cfg.algorithm.method == "push_diging"


def test_hyphenated_custom_file_kind():
    cfg = config_from_dict({"problem": {"kind": "custom-file", "path": "p.yaml"}, "graphs": {"kind": "static"}})
    assert cfg.problem.kind == "custom_file"
    assert cfg.problem.path == "p.yaml"


@pytest.mark.parametrize(
    "doc, message",
    [
        ({**MINIMAL, "algorithm": {"alpha": -0.1}}, "algorithm.alpha"),
        ({**MINIMAL, "algorithm": {"alpha": "fast"}}, "algorithm.alpha"),
        ({**MINIMAL, "graphs": {"kind": "random_sc", "C": 5, "horizon": 3}}, "exceeds"),
        ({**MINIMAL, "graphs": {"kind": "c_partitioned", "C": 1}}, "C >= 2"),
        ({**MINIMAL, "graphs": {"kind": "smallworld"}}, "graphs.kind"),
        ({**MINIMAL, "graphs": {"kind": "file"}}, "graphs.path"),
        ({**MINIMAL, "graphs": {}}, "missing 'kind' key"),
        ({"graphs": {"kind": "random_sc"}}, "missing 'problem' key"),
        ({**MINIMAL, "problem": {"n": 4}}, "missing 'p' key"),
        ({**MINIMAL, "problem": {"n": 1, "p": 2}}, "problem.n"),
        ({**MINIMAL, "problem": {"n": 4, "p": 2, "lambda": 0}}, "problem.lambda"),
        ({**MINIMAL, "problem": {"n": 4.5, "p": 2}}, "integer"),
        ({**MINIMAL, "problem": {"n": 4, "p": 2, "sizes": 3}}, "unknown key"),
        ({**MINIMAL, "extras": True}, "unknown top-level"),
        ({**MINIMAL, "preset": "nope"}, "unknown preset"),
        ({**MINIMAL, "run": {"trace_every": 0}}, "run.trace_every"),
        ({**MINIMAL, "algorithm": {"safety_factor": 1.5}}, "safety_factor"),
        ({**MINIMAL, "algorithm": {"sigma": "optimistic"}}, "algorithm.sigma"),
        ({**MINIMAL, "verify": "yes"}, "verify"),
    ],
)
def test_validation_errors(doc, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(doc)


def test_parse_error_names_line_and_column(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: x\nproblem: {n: 4, p: 2\ngraphs:\n  kind: random_sc\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=r"broken\.yaml:\d+:\d+: YAML parse error"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml")


def test_empty_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError, match="empty"):
        load_config(path)


def test_source_is_named_in_errors(write_config):
    path = write_config({**MINIMAL, "algorithm": {"alpha": -1}}, name="bad.yaml")
    with pytest.raises(ConfigError, match="bad.yaml"):
        load_config(path)


def test_echo_loads_back_unchanged(tmp_path, small_config, write_config):
    cfg = load_config(write_config(small_config))
    echo = tmp_path / "echo.yaml"
    echo.write_text(dump_config(cfg, {"alpha": 1e-3, "alpha_source": "auto"}), encoding="utf-8")
    assert load_config(echo) == cfg
    assert yaml.safe_load(echo.read_text(encoding="utf-8"))["resolved"]["alpha"] == 1e-3


def test_echo_of_file_kinds(tmp_path):
    cfg = config_from_dict(
        {"problem": {"kind": "custom_file", "path": "problem.yaml"}, "graphs": {"kind": "file", "path": "g.txt", "C": 2}}
    )
    assert config_from_dict(yaml.safe_load(dump_config(cfg))) == cfg


class TestExperimentsFile:

    def test_loads_every_entry(self, tmp_path, small_config):
        second = dict(small_config, name="other")
        path = tmp_path / "experiments.yaml"
        path.write_text(yaml.safe_dump({"experiments": [small_config, second]}), encoding="utf-8")
        assert [c.name for c in load_experiments_config(path)] == ["small", "other"]

    def test_missing_key(self, tmp_path):
        path = tmp_path / "experiments.yaml"
        path.write_text("projects: []\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="missing 'experiments' key"):
            load_experiments_config(path)

    def test_duplicate_names(self, tmp_path, small_config):
        path = tmp_path / "experiments.yaml"
        path.write_text(yaml.safe_dump({"experiments": [small_config, small_config]}), encoding="utf-8")
        with pytest.raises(ConfigError, match="duplicate"):
            load_experiments_config(path)

    def test_entry_errors_name_the_index(self, tmp_path, small_config):
        bad = dict(small_config, algorithm={"alpha": 0})
        path = tmp_path / "experiments.yaml"
        path.write_text(yaml.safe_dump({"experiments": [small_config, bad]}), encoding="utf-8")
        with pytest.raises(ConfigError, match=r"\[1\]"):
            load_experiments_config(path)

    def test_shipped_batch_file_is_valid(self):
        names = [c.name for c in load_experiments_config(REPO_ROOT / "experiments.yaml")]
        assert "fusion20" in names and "partitioned" in names
        assert load_config(REPO_ROOT / "experiment.yaml").preset == "sensor-fusion-20"
