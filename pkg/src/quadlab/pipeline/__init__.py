"""除外シミュレーション・監査のパイプラインモジュール"""

from .audit import AuditResult, load_fixtures, run_audits
from .exclusion import ParamInterval, RunResult, run, startup
from .orchestrator import ExclusionOrchestrator
from .run_config import ExperimentConfig, RunConfig, load_experiment_config

__all__ = [
    "AuditResult",
    "load_fixtures",
    "run_audits",
    "ParamInterval",
    "RunResult",
    "run",
    "startup",
    "ExclusionOrchestrator",
    "ExperimentConfig",
    "RunConfig",
    "load_experiment_config",
]
