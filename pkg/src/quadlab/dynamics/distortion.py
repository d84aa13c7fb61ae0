"""歪み評価モジュール（束縛期間の有界歪み・相-パラメータ比・主歪み）"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from quadlab.dynamics.core import (
    ParameterLike,
    as_parameter,
    orbit_log_derivative,
    phase_derivative,
    safe_exp,
    tsujii_ratio,
)
from quadlab.series.rates import log_star
from quadlab.utils.errors import DegenerateDerivative
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

BOUNDED_DISTORTION_BUDGET = 2.0


@dataclass(frozen=True)
class DistortionReport:
    """歪み比と判定

    holds が None のときは評価の対象外（束縛期間の外など）。
    """

    ratio: float
    log_ratio: float
    window: Tuple[int, int]
    budget: float
    holds: Optional[bool]


@dataclass(frozen=True)
class PhaseParamWindow:
    """相-パラメータ比の窓と当てはめた帯 (1−A)T ≤ |比| ≤ (1+A)T"""

    entries: List[Tuple[int, float]]
    T: float
    A: float
    D_A: float

    def in_band(self, ratio: float) -> bool:
        return (1.0 - self.A) * self.T <= abs(ratio) <= (1.0 + self.A) * self.T


@dataclass(frozen=True)
class RestoreDecision:
    """微分回復規則の判定結果"""

    keep: bool
    witness: Optional[float]
    witness_log: float
    violations: List[float]


def _two_sided(log_ratio: float, log_budget: float) -> bool:
    return abs(log_ratio) <= log_budget


def _log_window(a: float, start: int, end: int) -> Tuple[float, int]:
    """Σ_{k=start}^{end−1} log|−2a·F^k(1;a)| と符号"""
    y = 1.0
    for _ in range(start):
        y = 1.0 - a * y * y
    tail = orbit_log_derivative(y, a, end - start)
    if tail.vanishes:
        raise DegenerateDerivative(f"窓 [{start}, {end}) で相微分が消えました (a={a!r})")
    return tail.log_mag, tail.sign


def bounded_distortion(
    a: ParameterLike, eta: float, j: int, bound_period: Optional[int] = None
) -> DistortionReport:
    """
    |∂ₓF^j(1−aη²;a) / ∂ₓF^j(1;a)| を対数の差として計算（予算 2）

    Args:
        a: パラメータ
        eta: 臨界点からのずれ η
        j: ステップ数
        bound_period: 測定済みの束縛期間。j がこれを超えると holds=None

    Raises:
        DegenerateDerivative: どちらかの微分が消える場合
    """
    a_value = as_parameter(a)
    shifted = orbit_log_derivative(1.0 - a_value * eta * eta, a_value, j)
    reference = orbit_log_derivative(1.0, a_value, j)
    if shifted.vanishes or reference.vanishes:
        raise DegenerateDerivative(f"有界歪みの微分が消えました (a={a_value!r}, j={j})")

    log_ratio = shifted.log_mag - reference.log_mag
    holds: Optional[bool] = _two_sided(log_ratio, math.log(BOUNDED_DISTORTION_BUDGET))
    if bound_period is not None and j > bound_period:
        holds = None
    return DistortionReport(
        ratio=safe_exp(log_ratio),
        log_ratio=log_ratio,
        window=(0, j),
        budget=BOUNDED_DISTORTION_BUDGET,
        holds=holds,
    )


def phase_param_window(a: ParameterLike, n_range: Sequence[int]) -> PhaseParamWindow:
    """
    相-パラメータ比の窓を計算し、T と A を当てはめる

    T は窓の最後の 1/4 の |比| の平均、A は窓全体での |比|/T − 1 の最大偏差。
    D_A = (1+A)/(1−A)（A ≥ 1 なら inf）。

    Raises:
        DegenerateDerivative: 窓の中で微分が消える場合
    """
    a_value = as_parameter(a)
    ns = list(n_range)
    if not ns:
        raise ValueError("窓が空です")

    entries = [(n, tsujii_ratio(a_value, n)) for n in ns]
    quartile = max(1, len(entries) // 4)
    tail = [abs(ratio) for _, ratio in entries[-quartile:]]
    T = math.fsum(tail) / len(tail)
    if T == 0.0:
        raise DegenerateDerivative(f"比の末尾平均が 0 です (a={a_value!r})")

    A = max(abs(abs(ratio) / T - 1.0) for _, ratio in entries)
    D_A = (1.0 + A) / (1.0 - A) if A < 1.0 else math.inf
    return PhaseParamWindow(entries=entries, T=T, A=A, D_A=D_A)


def window_log_ratio(a: ParameterLike, b: ParameterLike, start: int, end: int) -> float:
    """窓 [start, end) での log|∂ₓ(1;a)| − log|∂ₓ(1;b)|"""
    log_a, _ = _log_window(as_parameter(a), start, end)
    log_b, _ = _log_window(as_parameter(b), start, end)
    return log_a - log_b


def main_distortion(
    a: ParameterLike,
    b: ParameterLike,
    j: int,
    m_k: int,
    d1: float,
    start: int = 0,
) -> DistortionReport:
    """
    同じ区間の 2 点での |∂ₓF^j(1;a)| / |∂ₓF^j(1;b)| を予算 D₁^{(log* m_k)²} と比較

    Args:
        a, b: 区間内の 2 つのパラメータ
        j: 窓の終わり
        m_k: 直前の完全回帰の時刻
        d1: 予算の底 D₁
        start: 窓の始まり（連鎖の検査用）
    """
    log_ratio = window_log_ratio(a, b, start, j)
    exponent = log_star(m_k) ** 2
    log_budget = exponent * math.log(d1)
    return DistortionReport(
        ratio=safe_exp(log_ratio),
        log_ratio=log_ratio,
        window=(start, j),
        budget=safe_exp(log_budget),
        holds=_two_sided(log_ratio, log_budget),
    )


def restore_derivative_check(
    samples: Iterable[ParameterLike],
    n: int,
    gamma_b: float,
    c_b: float,
    gamma: float,
    c: float,
) -> RestoreDecision:
    """
    回帰時刻 n での微分回復規則

    あるサンプルで log|∂ₓF^{n−1}(1;a′)| ≥ log C_B + γ_B(n−1) なら全体を残し、
    弱い (γ, C) 評価を破るサンプルを報告する。どのサンプルも満たさなければ全体を除く。
    """
    params = [as_parameter(a) for a in samples]
    if not params:
        raise ValueError("サンプルが空です")

    logs = [phase_derivative(a, max(n - 1, 0)).log_mag for a in params]
    best = max(range(len(params)), key=lambda i: logs[i])
    strong = math.log(c_b) + gamma_b * (n - 1)

    if logs[best] < strong:
        logger.debug(f"微分回復に失敗: n={n}, 最大 log 微分={logs[best]!r}")
        return RestoreDecision(keep=False, witness=None, witness_log=logs[best], violations=[])

    weak = math.log(c) + gamma * (n - 1)
    violations = [a for a, value in zip(params, logs) if value < weak]
    return RestoreDecision(
        keep=True, witness=params[best], witness_log=logs[best], violations=violations
    )
