"""実行設定（YAML / JSON）の読み込みと JSON Schema による検証モジュール"""

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Type, TypeVar

import yaml
from jsonschema import Draft202012Validator, ValidationError

from quadlab.dynamics.partition import PartitionConfig
from quadlab.series.rates import RateSequence
from quadlab.utils.errors import ConfigError
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class SamplingSpec:
    """区間像のサンプリング設定"""

    base_points: int = 3
    max_points: int = 129
    a_samples: int = 9
    eta_samples: int = 33
    bisect_steps: int = 60
    split_rounds: int = 48
    # これより狭い区間では binary64 で ξ_n を分解できない
    min_width: float = 1e-14


@dataclass(frozen=True)
class RunConfig:
    """除外シミュレーションの設定"""

    partition: PartitionConfig
    rate: RateSequence
    tau: float = 0.5
    gamma_b: float = 0.4
    c_b: float = 0.1
    gamma: float = 0.2
    c: float = 0.05
    m0: int = 2
    kappa: float = 5.0
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    max_generations: int = 8
    max_steps: int = 120
    d1: float = 1.5
    c_m: float = 0.5
    gamma_m: float = 0.3
    max_active_intervals: int = 64
    bound_max_nu: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"τ は (0, 1) の範囲で指定してください: {self.tau}", path="tau")
        if self.m0 < 2:
            raise ConfigError(f"m0 は 2 以上で指定してください: {self.m0}", path="m0")
        if not self.kappa > 0.0:
            raise ConfigError(f"κ は正で指定してください: {self.kappa}", path="kappa")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["partition"] = {
            "delta_exponent": self.partition.delta_exponent,
            "epsilon1": self.partition.epsilon1,
            "r_max": self.partition.r_max,
        }
        data["rate"] = self.rate.to_dict()
        return data


@dataclass(frozen=True)
class StartupSpec:
    """開始区間 ω₀ の探索設定"""

    epsilon: float = 1e-9
    shrink: bool = True
    ce_horizon: int = 60
    ce_gamma_min: float = 0.0
    pr_k: float = 0.1
    pr_sigma_max: float = 2.0
    grid_points: int = 9


@dataclass(frozen=True)
class AuditSettings:
    """監査の当てはめ設定（フィクスチャ側の値を上書き）"""

    fit_margin: float = 1.25
    holdout_tolerance: float = 0.05
    fixtures: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    """1 回の実験（開始パラメータ・シード・各設定）"""

    a0: float
    run: RunConfig
    seed: int = 0
    startup: StartupSpec = field(default_factory=StartupSpec)
    audit: AuditSettings = field(default_factory=AuditSettings)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a0": self.a0,
            "seed": self.seed,
            "run": self.run.to_dict(),
            "startup": asdict(self.startup),
            "audit": asdict(self.audit),
        }


SCHEMA_RESOURCE = "run_config.schema.json"


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    """同梱の JSON Schema（docs/run-config.schema.json と同じ内容）を読む"""
    resource = resources.files("quadlab.pipeline").joinpath(SCHEMA_RESOURCE)
    text = resource.read_text(encoding="utf-8")
    return json.loads(text)


def _join(parts: Iterable[Any]) -> Optional[str]:
    return ".".join(str(part) for part in parts) or None


def _innermost(error: ValidationError) -> ValidationError:
    """oneOf の失敗から、インスタンスの型に合う枝のエラーを選ぶ"""
    while error.context:
        candidates = [e for e in error.context if e.validator != "type"] or list(error.context)
        error = min(candidates, key=lambda e: (-len(e.absolute_path), e.message))
    return error


def _to_config_error(error: ValidationError) -> ConfigError:
    error = _innermost(error)
    parts = list(error.absolute_path)
    if error.validator == "required":
        missing = [key for key in error.validator_value if key not in error.instance]
        return ConfigError("必須のキーです", path=_join([*parts, missing[0]]))
    if error.validator == "additionalProperties":
        known = set(error.schema.get("properties", {}))
        unknown = sorted(set(map(str, error.instance)) - known)
        return ConfigError(f"未知のキーです: {', '.join(unknown)}", path=_join([*parts, unknown[0]]))
    return ConfigError(f"スキーマ違反 ({error.validator}): {error.message}", path=_join(parts))


def _check_finite(value: Any, parts: List[Any]) -> None:
    # JSON Schema の number は inf / nan を通す
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"有限値で指定してください: {value!r}", path=_join(parts))
    if isinstance(value, dict):
        for key, item in value.items():
            _check_finite(item, [*parts, key])
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _check_finite(item, [*parts, i])


def validate_config_data(data: Any) -> None:
    """
    実行設定の辞書をスキーマで検証する

    Raises:
        ConfigError: 最初に見つかった違反（ドット区切りのパス付き）
    """
    validator = Draft202012Validator(load_schema())
    errors = sorted(
        validator.iter_errors(data), key=lambda e: [str(part) for part in e.absolute_path]
    )
    if errors:
        raise _to_config_error(errors[0])
    _check_finite(data, [])


def _build(cls: Type[T], data: Optional[Dict[str, Any]], **extra: Any) -> T:
    """検証済みの辞書から dataclass を作る（int / float はフィールドの型に揃える）"""
    fields = cls.__dataclass_fields__  # type: ignore[attr-defined]
    kwargs: Dict[str, Any] = {}
    for key, value in (data or {}).items():
        if key in extra:
            continue
        kind = fields[key].type
        kwargs[key] = kind(value) if kind in (int, float) else value
    kwargs.update(extra)
    return cls(**kwargs)


def _prefixed(error: ConfigError, path: str) -> ConfigError:
    return ConfigError(error.detail, path=f"{path}.{error.path}" if error.path else path)


def _parse_rate(data: Any, path: str) -> RateSequence:
    try:
        if data is None:
            return RateSequence.from_spec("power:1")
        if isinstance(data, str):
            return RateSequence.from_spec(data)
        return RateSequence.from_dict(data)
    except ValueError as e:
        raise ConfigError(str(e), path=path) from e


def parse_run_config(data: Optional[Dict[str, Any]], path: str = "run") -> RunConfig:
    """
    検証済みの辞書から RunConfig を作る

    スキーマで表せない項目間の条件（分割の下限、表形式の δ_n、点数の大小）はここで検査する。
    """
    data = data or {}
    try:
        partition = _build(
            PartitionConfig,
            {"delta_exponent": 3.0, "epsilon1": 0.2, **(data.get("partition") or {})},
        )
    except ConfigError as e:
        raise _prefixed(e, f"{path}.partition") from e
    rate = _parse_rate(data.get("rate"), f"{path}.rate")

    sampling = _build(SamplingSpec, data.get("sampling"))
    if sampling.max_points < sampling.base_points:
        raise ConfigError(
            f"base_points={sampling.base_points} 以上で指定してください: {sampling.max_points}",
            path=f"{path}.sampling.max_points",
        )

    try:
        return _build(RunConfig, data, partition=partition, rate=rate, sampling=sampling)
    except ConfigError as e:
        raise _prefixed(e, path) from e


def parse_experiment_config(data: Any) -> ExperimentConfig:
    """
    辞書から ExperimentConfig を作る

    Raises:
        ConfigError: スキーマ違反または項目間の条件違反（フィールドのパス付き）
    """
    validate_config_data(data)
    return ExperimentConfig(
        a0=float(data["a0"]),
        seed=int(data.get("seed", 0)),
        run=parse_run_config(data.get("run"), "run"),
        startup=_build(StartupSpec, data.get("startup")),
        audit=_build(AuditSettings, data.get("audit")),
    )


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    YAML / JSON の実行設定を読み込む

    JSON は YAML の部分集合なので同じローダーで読む。

    Raises:
        ConfigError: 読み込めない・検証に失敗した場合（フィールドのパス付き）
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"設定ファイルを読み込めません: {path} ({e})") from e

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"設定ファイルの形式が不正です: {path} ({e})") from e

    experiment = parse_experiment_config(data)
    logger.debug(f"実行設定を読み込みました: {path}")
    return experiment
