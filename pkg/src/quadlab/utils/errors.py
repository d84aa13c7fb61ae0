"""例外定義モジュール"""

from typing import Any, Optional


class QuadLabError(Exception):
    """quadlab の全例外の基底クラス"""


class DomainError(QuadLabError, ValueError):
    """定義域外の入力（CLI では終了コード 3）"""


class ParameterOutOfRange(DomainError):
    """パラメータ a が [1, 2] の外にある"""


class StartupRejected(DomainError):
    """開始パラメータが CE / PR スクリーニングを通過しない"""


class RNotInPartition(DomainError):
    """分割に含まれない深さ r が指定された"""


class DegenerateDerivative(QuadLabError, ArithmeticError):
    """窓の中で相微分が 0 になった"""


class NotAReturn(QuadLabError, ValueError):
    """像が (−δ, δ) と交わらない"""


class PreconditionViolated(QuadLabError, ValueError):
    """操作の前提条件が満たされていない"""


class BoundedPeriodTruncated(QuadLabError):
    """束縛条件が maxNu まで成立し続けた（p は下界）"""

    def __init__(self, message: str, result: Any) -> None:
        super().__init__(message)
        self.result = result


class NoReturnWithinBudget(QuadLabError):
    """ステップ予算内に (−δ, δ) へ戻らなかった"""


class NoExpansionWithinBudget(QuadLabError):
    """ステップ予算内に距離条件が破れなかった"""


class BudgetExhausted(QuadLabError):
    """完全回帰に到達する前にステップ予算を使い切った（途中までの結果を保持）"""

    def __init__(self, message: str, result: Any = None) -> None:
        super().__init__(message)
        self.result = result


class RateNotDefined(QuadLabError, ValueError):
    """δ_n が定義されていない n が要求された"""


class NotIncreasing(QuadLabError, ValueError):
    """時刻列が狭義単調増加でない"""


class ConfigError(QuadLabError, ValueError):
    """実行設定の検証エラー（CLI では終了コード 2）"""

    def __init__(self, message: str, path: Optional[str] = None) -> None:
        self.path = path
        self.detail = message
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class FixtureError(QuadLabError):
    """監査フィクスチャの欠落・破損"""
