"""力学系モジュール（軌道・分割・回帰・歪み）"""

from .core import Parameter, critical_orbit, param_derivative, tsujii_ratio
from .partition import Interval, PartitionConfig, PartitionIndex, locate
from .returns import ReturnEvent, ReturnKind, classify

__all__ = [
    "Parameter",
    "critical_orbit",
    "param_derivative",
    "tsujii_ratio",
    "Interval",
    "PartitionConfig",
    "PartitionIndex",
    "locate",
    "ReturnEvent",
    "ReturnKind",
    "classify",
]
