"""実行設定の読み込みと検証のテスト"""

import json
from pathlib import Path
from typing import Any, Dict

import pytest

from quadlab.dynamics.partition import PartitionConfig
from quadlab.pipeline.run_config import (
    RunConfig,
    load_experiment_config,
    load_schema,
    parse_experiment_config,
)
from quadlab.series.rates import RateSequence
from quadlab.utils.errors import ConfigError


def test_load_fixture_config(configs_dir: Path) -> None:
    experiment = load_experiment_config(configs_dir / "fixture.yaml")
    assert experiment.a0 == 2.0
    assert experiment.seed == 7
    assert experiment.run.max_generations == 10
    assert experiment.startup.shrink is True
    assert experiment.run.rate.label == "power:1"
    assert experiment.run.sampling.eta_samples == 17
    assert experiment.startup.grid_points == 9


@pytest.mark.parametrize("name", ["minimal.yaml", "fixture.yaml"])
def test_shipped_configs_load(configs_dir: Path, name: str) -> None:
    assert sorted(p.name for p in configs_dir.glob("*.yaml")) == ["fixture.yaml", "minimal.yaml"]
    experiment = load_experiment_config(configs_dir / name)
    assert parse_experiment_config(experiment.to_dict()) == experiment


def test_docs_schema_matches_packaged_schema(configs_dir: Path) -> None:
    docs = configs_dir.parent / "docs" / "run-config.schema.json"
    assert json.loads(docs.read_text(encoding="utf-8")) == load_schema()


@pytest.mark.parametrize("shrink", [True, False])
def test_shrink_accepts_booleans(shrink: bool) -> None:
    experiment = parse_experiment_config({"a0": 2.0, "startup": {"shrink": shrink}})
    assert experiment.startup.shrink is shrink


def test_integral_floats_become_ints() -> None:
    experiment = parse_experiment_config({"a0": 2.0, "run": {"m0": 3.0, "max_steps": 40}})
    assert experiment.run.m0 == 3
    assert isinstance(experiment.run.m0, int)


def test_minimal_config_uses_defaults(configs_dir: Path) -> None:
    experiment = load_experiment_config(configs_dir / "minimal.yaml")
    assert experiment.run.max_generations == 0
    assert experiment.run.tau == 0.5
    assert experiment.run.partition.delta_exponent == 3.0
    assert experiment.startup.shrink


def test_dict_form_round_trips(configs_dir: Path) -> None:
    experiment = load_experiment_config(configs_dir / "fixture.yaml")
    assert parse_experiment_config(experiment.to_dict()) == experiment


@pytest.mark.parametrize(
    "data, path",
    [
        ({"seed": 1}, "a0"),
        ({"a0": 3.0}, "a0"),
        ({"a0": 2.0, "bogus": 1}, "bogus"),
        ({"a0": 2.0, "run": {"tau": 1.5}}, "run.tau"),
        ({"a0": 2.0, "run": {"tau": True}}, "run.tau"),
        ({"a0": 2.0, "run": {"tau": "half"}}, "run.tau"),
        ({"a0": 2.0, "run": {"unknown_key": 1}}, "run.unknown_key"),
        ({"a0": 2.0, "run": {"m0": 1}}, "run.m0"),
        ({"a0": 2.0, "run": {"partition": {"epsilon1": -1.0}}}, "run.partition.epsilon1"),
        ({"a0": 2.0, "run": {"rate": {"theta": 2.0}}}, "run.rate.kind"),
        ({"a0": 2.0, "run": {"rate": "geometric"}}, "run.rate"),
        (
            {"a0": 2.0, "run": {"sampling": {"base_points": 9, "max_points": 5}}},
            "run.sampling.max_points",
        ),
        ({"a0": 2.0, "startup": {"shrink": "yes"}}, "startup.shrink"),
        ({"a0": 2.0, "startup": {"shrink": 1}}, "startup.shrink"),
        ({"a0": 2.0, "run": {"m0": True}}, "run.m0"),
        ({"a0": 2.0, "run": {"gamma": float("inf")}}, "run.gamma"),
        ({"a0": 2.0, "run": {"c_b": float("nan")}}, "run.c_b"),
        ({"a0": 2.0, "run": {"partition": {"epsilon1": 0.01}}}, "run.partition.epsilon1"),
        ({"a0": 2.0, "run": {"rate": {"kind": "table"}}}, "run.rate"),
        ({"a0": 2.0, "run": {"sampling": {"extra": 1}}}, "run.sampling.extra"),
        ({"a0": 2.0, "startup": {"epsilon": 2.0}}, "startup.epsilon"),
        ({"a0": 2.0, "audit": {"fit_margin": 0.5}}, "audit.fit_margin"),
    ],
)
def test_errors_carry_field_path(data: Dict[str, Any], path: str) -> None:
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(data)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_top_level_must_be_mapping() -> None:
    with pytest.raises(ConfigError):
        parse_experiment_config(["a0", 2.0])


def test_run_config_validates_directly() -> None:
    with pytest.raises(ConfigError) as info:
        RunConfig(
            partition=PartitionConfig(3.0, 0.2), rate=RateSequence.from_spec("power:1"), tau=0.0
        )
    assert info.value.path == "tau"


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "missing.yaml")


def test_broken_yaml(tmp_path: Path) -> None:
    path = tmp_path / "broken.yaml"
    path.write_text("a0: [2.0\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(path)


def test_json_is_accepted(tmp_path: Path) -> None:
    path = tmp_path / "run.json"
    path.write_text('{"a0": 1.9, "run": {"rate": "nlogn"}}', encoding="utf-8")
    experiment = load_experiment_config(path)
    assert experiment.a0 == 1.9
    assert experiment.run.rate.label == "nlogn"
