"""共通フィクスチャ"""

from pathlib import Path
from typing import Iterator

import numpy as np
import pytest

from quadlab.config import config
from quadlab.dynamics.partition import PartitionConfig
from quadlab.pipeline.run_config import RunConfig, SamplingSpec
from quadlab.series.rates import RateSequence

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def cfg() -> PartitionConfig:
    """Δ = 3, ε₁ = 0.2 の標準的な分割"""
    return PartitionConfig(delta_exponent=3.0, epsilon1=0.2)


@pytest.fixture
def rate() -> RateSequence:
    return RateSequence.from_spec("power:1")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def small_run_config(cfg: PartitionConfig, rate: RateSequence) -> RunConfig:
    """テスト用に小さくしたシミュレーション設定"""
    return RunConfig(
        partition=cfg,
        rate=rate,
        max_generations=2,
        max_steps=60,
        max_active_intervals=8,
        bound_max_nu=80,
        sampling=SamplingSpec(max_points=33, a_samples=5, eta_samples=9),
    )


@pytest.fixture
def configs_dir() -> Path:
    return ROOT / "configs"


@pytest.fixture
def fixtures_file() -> Path:
    return ROOT / "fixtures" / "audit.yaml"


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """環境変数と .env の影響を受けないようにする"""
    for key in ("QUADLAB_THREADS", "QUADLAB_LOG_LEVEL", "QUADLAB_OUTPUT_DIR", "QUADLAB_FIXTURES"):
        monkeypatch.delenv(key, raising=False)
    config.reset()
    yield
    config.reset()


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="CLI の出力で tests/golden/ を書き直す",
    )


@pytest.fixture
def update_golden(request: pytest.FixtureRequest) -> bool:
    return bool(request.config.getoption("--update-golden"))


@pytest.fixture
def golden_dir() -> Path:
    return ROOT / "tests" / "golden"
