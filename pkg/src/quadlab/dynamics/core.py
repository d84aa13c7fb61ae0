"""二次族 F(x;a) = 1 − ax² の軌道・微分計算モジュール"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from quadlab.utils.errors import DegenerateDerivative, ParameterOutOfRange
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

A_MIN = 1.0
A_MAX = 2.0

# 中心差分の相対刻み幅
FD_RELATIVE_STEP = 1e-6

# math.exp がオーバーフローしない上限
_EXP_LIMIT = 709.78


@dataclass(frozen=True)
class Parameter:
    """パラメータ a（1 ≤ a ≤ 2）"""

    value: float

    def __post_init__(self) -> None:
        value = float(self.value)
        if math.isnan(value) or not (A_MIN <= value <= A_MAX):
            raise ParameterOutOfRange(
                f"パラメータ a は [{A_MIN}, {A_MAX}] の範囲で指定してください: {self.value}"
            )
        object.__setattr__(self, "value", value)

    def __float__(self) -> float:
        return self.value


ParameterLike = Union[float, int, Parameter]


def as_parameter(a: ParameterLike) -> float:
    """パラメータを検証して float で返す"""
    if isinstance(a, Parameter):
        return a.value
    return Parameter(float(a)).value


def safe_exp(value: float) -> float:
    """オーバーフロー時に inf を返す exp"""
    if value > _EXP_LIMIT:
        return math.inf
    return math.exp(value)


class LogDerivative(NamedTuple):
    """対数空間で保持した微分（log|D|, 符号）"""

    log_mag: float
    sign: int

    @property
    def vanishes(self) -> bool:
        return self.sign == 0

    def value(self) -> float:
        """実数値に戻す（表現できない場合は ±inf）"""
        if self.sign == 0:
            return 0.0
        return self.sign * safe_exp(self.log_mag)


@dataclass(frozen=True)
class OrbitState:
    """臨界軌道の 1 ステップ分の状態

    x = ξ_n(a)、微分は ∂ₓFⁿ(1;a) の対数絶対値と符号。
    臨界点に当たった後は log_deriv_mag = −inf、deriv_sign = 0。
    """

    n: int
    x: float
    log_deriv_mag: float
    deriv_sign: int


@dataclass(frozen=True)
class DerivativePair:
    """相微分 ∂ₓF^{n−1}(1;a) とパラメータ微分 ∂ₐFⁿ(0;a) の組"""

    n: int
    phase: LogDerivative
    param_deriv: float
    ratio: float


@dataclass(frozen=True)
class CEEstimate:
    """有限ホライズンでの Collet–Eckmann 指数の推定値"""

    gamma_hat: float
    c_hat: float
    horizon: int
    argmin: int


@dataclass(frozen=True)
class RecurrenceStatistic:
    """−log|ξ_n| / log n の表と最大値"""

    max_exponent: float
    argmax: Optional[int]
    n: np.ndarray
    exponent: np.ndarray
    exact_hit: np.ndarray

    def rows(self) -> List[tuple]:
        """(n, 値) の行。ξ_n = 0 の行は値の代わりに "exact_hit" を返す"""
        result = []
        for n, value, hit in zip(self.n, self.exponent, self.exact_hit):
            result.append((int(n), "exact_hit" if hit else float(value)))
        return result


@dataclass(frozen=True)
class PRScreen:
    """多項式回帰条件 |ξ_j| ≥ K / j^σ の有限ホライズン検査結果"""

    sigma_hat: float
    k: float
    horizon: int
    passed: bool


def step(x: float, a: ParameterLike) -> float:
    """F(x;a) = 1 − a·x²"""
    a_value = float(a)
    return 1.0 - a_value * x * x


def critical_orbit(a: ParameterLike, n: int) -> List[float]:
    """
    臨界軌道 ξ_0, …, ξ_n を計算

    Args:
        a: パラメータ
        n: ステップ数

    Returns:
        ξ_0 = 0 から始まる n+1 個の値

    Raises:
        ValueError: n が負の場合
    """
    a_value = as_parameter(a)
    if n < 0:
        raise ValueError(f"ステップ数は 0 以上で指定してください: {n}")

    orbit = [0.0]
    x = 0.0
    for _ in range(n):
        x = 1.0 - a_value * x * x
        orbit.append(x)
    return orbit


def critical_values(a_grid: np.ndarray, n: int) -> np.ndarray:
    """パラメータ格子上の ξ_n(a) をまとめて計算"""
    a_grid = np.asarray(a_grid, dtype=float)
    x = np.zeros_like(a_grid)
    for _ in range(n):
        x = 1.0 - a_grid * x * x
    return x


def critical_deviation(
    eta: np.ndarray, a: np.ndarray, n: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    0 の近くの点 η について Fⁿ(η;a) − ξ_n(a) を差分の漸化式で計算

    d ← −a·d·(2ξ + d)。η² が丸め誤差より小さいと 1 − aη² は 1 に丸まるため、
    像どうしの引き算ではなく差分そのものを追う。

    Returns:
        (ξ_n(a), Fⁿ(η;a) − ξ_n(a))
    """
    d = np.asarray(eta, dtype=float)
    a = np.asarray(a, dtype=float)
    xi = np.zeros(np.broadcast(d, a).shape)
    for _ in range(n):
        d = -a * d * (2.0 * xi + d)
        xi = 1.0 - a * xi * xi
    return xi, d


def orbit_log_derivative(x: float, a: ParameterLike, n: int) -> LogDerivative:
    """
    任意の始点での ∂ₓFⁿ(x;a) を対数空間で計算

    各因子 −2a·F^k(x;a) の対数を補償和で足し合わせるため、
    生の積を作らずオーバーフローしない。

    Args:
        x: 始点
        a: パラメータ
        n: ステップ数

    Returns:
        (log|∂ₓFⁿ(x;a)|, 符号)。途中で臨界点に当たれば (−inf, 0)
    """
    a_value = float(a)
    if n < 0:
        raise ValueError(f"ステップ数は 0 以上で指定してください: {n}")

    log_terms: List[float] = []
    sign = 1
    y = x
    for _ in range(n):
        factor = -2.0 * a_value * y
        if factor == 0.0:
            return LogDerivative(-math.inf, 0)
        if factor < 0.0:
            sign = -sign
        log_terms.append(math.log(abs(factor)))
        y = 1.0 - a_value * y * y
    return LogDerivative(math.fsum(log_terms), sign)


def phase_derivative(a: ParameterLike, n: int) -> LogDerivative:
    """臨界値 1 から出発した相微分 ∂ₓFⁿ(1;a)"""
    a_value = as_parameter(a)
    return orbit_log_derivative(1.0, a_value, n)


def iterate_orbit(a: ParameterLike, n: int) -> List[OrbitState]:
    """ξ_0..ξ_n と ∂ₓF^k(1;a) を並べた状態列を返す"""
    a_value = as_parameter(a)
    orbit = critical_orbit(a_value, n)

    states = [OrbitState(n=0, x=0.0, log_deriv_mag=0.0, deriv_sign=1)]
    log_mag, sign = 0.0, 1
    for k in range(1, n + 1):
        x = orbit[k]
        if sign != 0:
            factor = -2.0 * a_value * x
            if factor == 0.0:
                log_mag, sign = -math.inf, 0
            else:
                log_mag += math.log(abs(factor))
                if factor < 0.0:
                    sign = -sign
        states.append(OrbitState(n=k, x=x, log_deriv_mag=log_mag, deriv_sign=sign))
    return states


def _tsujii_terms(a: float, n: int) -> tuple:
    """Σ_{k<n} (−ξ_k²)/∂ₓF^k(1;a) の各項と ∂ₓF^{n−1}(1;a) を返す"""
    orbit = critical_orbit(a, n)
    terms: List[float] = []
    log_p, sign_p = 0.0, 1
    for k in range(n):
        if k > 0:
            factor = -2.0 * a * orbit[k]
            if factor == 0.0:
                raise DegenerateDerivative(
                    f"∂ₓF^{k}(1;a) が 0 になりました (a={a!r}, k={k})"
                )
            log_p += math.log(abs(factor))
            if factor < 0.0:
                sign_p = -sign_p
        xi = orbit[k]
        if xi != 0.0:
            terms.append(-sign_p * safe_exp(2.0 * math.log(abs(xi)) - log_p))
    return terms, LogDerivative(log_p, sign_p)


def tsujii_ratio(a: ParameterLike, n: int) -> float:
    """
    部分和 Σ_{k=0}^{n−1} ∂ₐF(ξ_k;a)/∂ₓF^k(1;a) を計算

    ∂ₐFⁿ(0;a) / ∂ₓF^{n−1}(1;a) に等しい。

    Raises:
        DegenerateDerivative: 窓の中で相微分が 0 になる場合
    """
    a_value = as_parameter(a)
    if n < 1:
        raise ValueError(f"n は 1 以上で指定してください: {n}")
    terms, _ = _tsujii_terms(a_value, n)
    return math.fsum(terms)


def parameter_derivative_at(x: float, a: float, j: int) -> float:
    """∂ₐF^j(x;a) を前進漸化式 D_{i+1} = −y_i² − 2a·y_i·D_i で計算"""
    y, d = x, 0.0
    for _ in range(j):
        y, d = 1.0 - a * y * y, -y * y - 2.0 * a * y * d
    return d


def param_derivative_forward(a: ParameterLike, n: int) -> float:
    """∂ₐFⁿ(0;a) を前進漸化式で計算"""
    return parameter_derivative_at(0.0, as_parameter(a), n)


def param_derivative(a: ParameterLike, n: int) -> float:
    """
    パラメータ微分 ∂ₐFⁿ(0;a) を部分和の恒等式から計算

    ∂ₐFⁿ(0;a) = ∂ₓF^{n−1}(1;a) · Σ_{k<n} (−ξ_k²)/∂ₓF^k(1;a)。
    相微分が途中で 0 になる場合は前進漸化式に切り替える。

    Args:
        a: パラメータ
        n: ステップ数（1 以上）

    Returns:
        ∂ₐFⁿ(0;a)
    """
    a_value = as_parameter(a)
    if n < 1:
        raise ValueError(f"n は 1 以上で指定してください: {n}")

    try:
        terms, phase = _tsujii_terms(a_value, n)
    except DegenerateDerivative:
        logger.debug(f"相微分が消えたため前進漸化式に切り替え: a={a_value!r}, n={n}")
        return parameter_derivative_at(0.0, a_value, n)

    partial = math.fsum(terms)
    if partial == 0.0:
        return 0.0
    sign = phase.sign * (1 if partial > 0.0 else -1)
    return sign * safe_exp(math.log(abs(partial)) + phase.log_mag)


def param_derivative_fd(a: float, n: int, h: Optional[float] = None) -> float:
    """中心差分（Richardson 外挿 1 段）による ∂ₐξ_n(a) の参照値"""
    if h is None:
        h = FD_RELATIVE_STEP * max(1.0, abs(a))

    def central(step_size: float) -> float:
        upper = critical_values(np.array([a + step_size]), n)[0]
        lower = critical_values(np.array([a - step_size]), n)[0]
        return float(upper - lower) / (2.0 * step_size)

    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def derivative_pair(a: ParameterLike, n: int) -> DerivativePair:
    """相微分・パラメータ微分・その比をまとめて返す"""
    a_value = as_parameter(a)
    if n < 1:
        raise ValueError(f"n は 1 以上で指定してください: {n}")
    phase = phase_derivative(a_value, n - 1)
    param = param_derivative(a_value, n)
    ratio = tsujii_ratio(a_value, n) if not phase.vanishes else math.nan
    return DerivativePair(n=n, phase=phase, param_deriv=param, ratio=ratio)


def ce_estimate(a: ParameterLike, N: int) -> CEEstimate:
    """
    有限ホライズン N での CE 指数を最小傾きとして推定

    gamma_hat = min_{1≤n≤N} log|∂ₓFⁿ(1;a)| / n。
    c_hat は最小を与える n で不等式が等号になるように選ぶ。
    """
    a_value = as_parameter(a)
    if N < 1:
        raise ValueError(f"ホライズン N は 1 以上で指定してください: {N}")

    log_mag = 0.0
    y = 1.0
    best_slope, best_n, best_log = math.inf, 1, 0.0
    for n in range(1, N + 1):
        factor = -2.0 * a_value * y
        if factor == 0.0:
            return CEEstimate(gamma_hat=-math.inf, c_hat=1.0, horizon=N, argmin=n)
        log_mag += math.log(abs(factor))
        slope = log_mag / n
        if slope < best_slope:
            best_slope, best_n, best_log = slope, n, log_mag
        y = 1.0 - a_value * y * y

    c_hat = safe_exp(best_log - best_slope * best_n)
    return CEEstimate(gamma_hat=best_slope, c_hat=c_hat, horizon=N, argmin=best_n)


def ce_constant(a: ParameterLike, gamma: float, N: int) -> float:
    """指数 γ を固定したときの最良の定数 C = min_{0≤n≤N} |∂ₓFⁿ(1;a)|·e^{−γn}"""
    a_value = as_parameter(a)
    log_mag = 0.0
    best = 0.0  # n = 0
    y = 1.0
    for n in range(1, N + 1):
        factor = -2.0 * a_value * y
        if factor == 0.0:
            return 0.0
        log_mag += math.log(abs(factor))
        best = min(best, log_mag - gamma * n)
        y = 1.0 - a_value * y * y
    return safe_exp(best)


def is_collet_eckmann(a: ParameterLike, gamma: float, c: float, N: int) -> bool:
    """(γ, C)-CE 条件を n ≤ N で検査"""
    return ce_constant(a, gamma, N) >= c


def recurrence_statistic(a: ParameterLike, N: int) -> RecurrenceStatistic:
    """
    回帰統計 −log|ξ_n| / log n（2 ≤ n ≤ N）を計算

    ξ_n = 0 となる n は exact_hit として最大値の計算から除く。
    """
    a_value = as_parameter(a)
    if N < 2:
        raise ValueError(f"N は 2 以上で指定してください: {N}")

    values = np.empty(N + 1)
    x = 0.0
    values[0] = x
    for n in range(1, N + 1):
        x = 1.0 - a_value * x * x
        values[n] = x

    ns = np.arange(2, N + 1)
    xi = np.abs(values[2:])
    exact_hit = xi == 0.0
    exponent = np.full(ns.shape, np.nan)
    mask = ~exact_hit
    exponent[mask] = -np.log(xi[mask]) / np.log(ns[mask])

    if mask.any():
        index = int(np.nanargmax(exponent))
        max_exponent = float(exponent[index])
        argmax: Optional[int] = int(ns[index])
    else:
        max_exponent, argmax = -math.inf, None

    return RecurrenceStatistic(
        max_exponent=max_exponent,
        argmax=argmax,
        n=ns,
        exponent=exponent,
        exact_hit=exact_hit,
    )


def pr_screen(a: ParameterLike, horizon: int, k: float, sigma_max: float) -> PRScreen:
    """
    多項式回帰 |ξ_j| ≥ K / j^σ を満たす最小の σ を当てはめて判定

    Args:
        a: パラメータ
        horizon: 検査する最大の j
        k: 定数 K
        sigma_max: 許容する σ の上限

    Returns:
        PRScreen
    """
    a_value = as_parameter(a)
    orbit = critical_orbit(a_value, horizon)
    sigma_hat = 0.0
    for j in range(1, horizon + 1):
        xi = abs(orbit[j])
        if xi == 0.0:
            sigma_hat = math.inf
            break
        if j == 1:
            if xi < k:
                sigma_hat = math.inf
                break
            continue
        sigma_hat = max(sigma_hat, math.log(k / xi) / math.log(j))
    return PRScreen(
        sigma_hat=sigma_hat, k=k, horizon=horizon, passed=sigma_hat <= sigma_max
    )
