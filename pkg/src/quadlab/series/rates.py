"""減衰率列 δ_n・反復対数・許容性・総和の診断・凝縮判定モジュール"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from quadlab.utils.errors import NotIncreasing, RateNotDefined
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

# 総和をとるときのチャンク長
CHUNK = 1 << 20

# 許容性の当てはめで試す ē の上限
DEFAULT_E_BAR_CAP = 20

DIVERGENT_LABEL = "consistent with divergence"
CONVERGENT_LABEL = "consistent with convergence"


def _tower() -> Tuple[float, ...]:
    """1, e, e^e, e^{e^e}, … を浮動小数で表せる範囲まで"""
    values = [1.0]
    while True:
        try:
            values.append(math.exp(values[-1]))
        except OverflowError:
            return tuple(values)


_TOWER = _tower()


def log_star(x: float) -> int:
    """
    反復対数 log* x（自然対数）

    x ≤ 1 なら 0、そうでなければ 1 + log*(ln x)。
    """
    if not math.isfinite(x):
        raise ValueError(f"log* には有限の値を指定してください: {x}")
    count = 0
    while x > 1.0:
        x = math.log(x)
        count += 1
    return count


def log_star_array(values: np.ndarray) -> np.ndarray:
    """log* のベクトル版（tower との比較で求める）"""
    values = np.asarray(values, dtype=float)
    result = np.zeros(values.shape, dtype=np.int64)
    for threshold in _TOWER:
        result += values > threshold
    return result


class RateKind(Enum):
    """δ_n の種類"""

    POWER_LAW = "power"
    LOG_LOG = "loglog"
    N_LOG_N = "nlogn"
    TABLE = "table"


class TailRule(Enum):
    """表の範囲を超えたときの扱い"""

    EXTEND = "extend"
    ERROR = "error"


@dataclass(frozen=True)
class RateSequence:
    """減衰率列 δ_n の指定と許容性のメタデータ (ē, N)"""

    kind: RateKind
    theta: float = 1.0
    values: Tuple[float, ...] = ()
    tail_rule: TailRule = TailRule.ERROR
    e_bar: Optional[float] = None
    n_adm: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is RateKind.POWER_LAW and not self.theta > 0.0:
            raise ValueError(f"θ は正で指定してください: {self.theta}")
        if self.kind is RateKind.TABLE and not self.values:
            raise ValueError("表形式の δ_n が空です")
        if self.e_bar is not None and self.e_bar < 0.0:
            raise ValueError(f"ē は 0 以上で指定してください: {self.e_bar}")
        if self.n_adm is not None and self.n_adm < 1:
            raise ValueError(f"N は 1 以上で指定してください: {self.n_adm}")

    @property
    def domain_start(self) -> int:
        """δ_n が定義される最小の n"""
        if self.kind is RateKind.LOG_LOG:
            return 3
        if self.kind is RateKind.N_LOG_N:
            return 2
        return 1

    @property
    def label(self) -> str:
        if self.kind is RateKind.POWER_LAW:
            return f"power:{self.theta:g}"
        if self.kind is RateKind.TABLE:
            return f"table[{len(self.values)}];{self.tail_rule.value}"
        return self.kind.value

    def value(self, n: int) -> float:
        """δ_n"""
        return float(self.values_array(np.array([n]))[0])

    def values_array(self, ns: np.ndarray) -> np.ndarray:
        """
        δ_n をまとめて評価

        Raises:
            RateNotDefined: 定義域の外の n を含む場合
        """
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size and int(ns.min()) < self.domain_start:
            raise RateNotDefined(
                f"{self.label} の δ_n は n ≥ {self.domain_start} で定義されます: n={int(ns.min())}"
            )
        n_float = ns.astype(float)
        if self.kind is RateKind.POWER_LAW:
            return n_float ** (-self.theta)
        if self.kind is RateKind.LOG_LOG:
            return 1.0 / (n_float * np.log(np.log(n_float)))
        if self.kind is RateKind.N_LOG_N:
            return 1.0 / (n_float * np.log(n_float))
        return self._table_values(ns)

    def _table_values(self, ns: np.ndarray) -> np.ndarray:
        table = np.asarray(self.values, dtype=float)
        size = table.size
        if ns.size and int(ns.max()) > size and self.tail_rule is TailRule.ERROR:
            raise RateNotDefined(f"表の範囲 n ≤ {size} を超えました: n={int(ns.max())}")
        inside = ns <= size
        result = np.empty(ns.shape, dtype=float)
        result[inside] = table[ns[inside] - 1]
        beyond = ~inside
        if beyond.any():
            # 末尾 2 項の比で幾何的に延長する（比が取れなければ定数で延長）
            ratio = table[-1] / table[-2] if size >= 2 and table[-2] != 0.0 else 1.0
            result[beyond] = table[-1] * ratio ** (ns[beyond] - size).astype(float)
        return result

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind is RateKind.POWER_LAW:
            data["theta"] = self.theta
        if self.kind is RateKind.TABLE:
            data["values"] = list(self.values)
            data["tail_rule"] = self.tail_rule.value
        if self.e_bar is not None:
            data["e_bar"] = self.e_bar
        if self.n_adm is not None:
            data["n_adm"] = self.n_adm
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RateSequence":
        """設定ファイルの {"kind": ..., ...} から生成"""
        kind = RateKind(data["kind"])
        return cls(
            kind=kind,
            theta=float(data.get("theta", 1.0)),
            values=tuple(float(v) for v in data.get("values", ())),
            tail_rule=TailRule(data.get("tail_rule", TailRule.ERROR.value)),
            e_bar=None if data.get("e_bar") is None else float(data["e_bar"]),
            n_adm=None if data.get("n_adm") is None else int(data["n_adm"]),
        )

    @classmethod
    def from_spec(cls, spec: str) -> "RateSequence":
        """
        文字列指定から生成

        power:θ / loglog / nlogn / table:v1,v2,...[;extend|error]
        """
        name, _, rest = spec.strip().partition(":")
        name = name.lower()
        if name == RateKind.POWER_LAW.value:
            return cls(kind=RateKind.POWER_LAW, theta=float(rest or 1.0))
        if name in (RateKind.LOG_LOG.value, RateKind.N_LOG_N.value):
            return cls(kind=RateKind(name))
        if name == RateKind.TABLE.value:
            body, _, rule = rest.partition(";")
            values = tuple(float(v) for v in body.split(",") if v.strip())
            return cls(
                kind=RateKind.TABLE,
                values=values,
                tail_rule=TailRule(rule or TailRule.ERROR.value),
            )
        raise ValueError(f"未知の δ_n 指定です: {spec}")


@dataclass(frozen=True)
class AdmissibilityResult:
    """許容性の判定（Yes なら ē と N、No なら反例の n）"""

    admissible: bool
    e_bar: Optional[float]
    n_adm: Optional[int]
    provisional: bool
    witness: Optional[int]
    reason: str


def _defined_horizon(rate: RateSequence, horizon: int) -> int:
    if rate.kind is RateKind.TABLE and rate.tail_rule is TailRule.ERROR:
        return min(horizon, len(rate.values))
    return horizon


def is_admissible(
    rate: RateSequence, horizon: int, e_bar_cap: int = DEFAULT_E_BAR_CAP
) -> AdmissibilityResult:
    """
    正値性・単調非増加・δ_n ≥ n^{−ē}（n ∈ [N, horizon]）を検査

    ē が宣言されていなければ、ホライズンを通る最小の整数 ē ≤ cap を
    当てはめて provisional として返す。
    """
    if horizon < 2:
        raise ValueError(f"ホライズンは 2 以上で指定してください: {horizon}")

    last = _defined_horizon(rate, horizon)
    ns = np.arange(rate.domain_start, last + 1, dtype=np.int64)
    values = rate.values_array(ns)

    bad = np.flatnonzero(~(values > 0.0))
    if bad.size:
        return AdmissibilityResult(False, None, None, False, int(ns[bad[0]]), "positivity")
    rising = np.flatnonzero(np.diff(values) > 0.0)
    if rising.size:
        return AdmissibilityResult(
            False, None, None, False, int(ns[rising[0] + 1]), "monotonicity"
        )

    start = rate.n_adm if rate.n_adm is not None else rate.domain_start
    window = ns >= start
    n_float = ns[window].astype(float)
    tail = values[window]

    def first_failure(e_bar: float) -> Optional[int]:
        lower = n_float ** (-e_bar) * (1.0 - 1e-12)
        failing = np.flatnonzero(tail < lower)
        return int(ns[window][failing[0]]) if failing.size else None

    if rate.e_bar is not None:
        witness = first_failure(rate.e_bar)
        if witness is None:
            return AdmissibilityResult(True, rate.e_bar, start, False, None, "declared")
        return AdmissibilityResult(False, rate.e_bar, start, False, witness, "lower-bound")

    witness = None
    for e_bar in range(0, e_bar_cap + 1):
        witness = first_failure(float(e_bar))
        if witness is None:
            logger.debug(f"ē を当てはめました: {e_bar} ({rate.label})")
            return AdmissibilityResult(True, float(e_bar), start, True, None, "fitted")
    return AdmissibilityResult(False, float(e_bar_cap), start, False, witness, "lower-bound")


def _summand(rate: RateSequence, tau: float, ns: np.ndarray) -> np.ndarray:
    exponents = log_star_array(ns).astype(float) ** 3
    return rate.values_array(ns) * tau**exponents / np.log(ns.astype(float))


def _segment_sum(rate: RateSequence, tau: float, first: int, last: int) -> float:
    partials: List[float] = []
    for start in range(first, last + 1, CHUNK):
        ns = np.arange(start, min(last, start + CHUNK - 1) + 1, dtype=np.int64)
        partials.append(math.fsum(_summand(rate, tau, ns).tolist()))
    return math.fsum(partials)


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"τ は (0, 1) で指定してください: {tau}")


def summability_partial(rate: RateSequence, tau: float, N: int) -> float:
    """
    部分和 Σ_{n=2}^{N} δ_n·τ^{(log* n)³} / ln n を補償和で計算

    δ_n の定義域が n = 2 より後から始まる場合はそこから足す。
    """
    if N < 2:
        raise ValueError(f"N は 2 以上で指定してください: {N}")
    _check_tau(tau)
    first = max(2, rate.domain_start)
    if N < first:
        return 0.0
    return _segment_sum(rate, tau, first, N)


@dataclass(frozen=True)
class SummabilityProfile:
    """チェックポイントごとの部分和と増分、最後の増分による診断"""

    points: List[Tuple[int, float, float]]
    threshold: float
    label: str


def summability_profile(
    rate: RateSequence,
    tau: float,
    checkpoints: Sequence[int],
    threshold: Optional[float] = None,
) -> SummabilityProfile:
    """
    部分和の成長を診断

    既定のしきい値は 0.01·τ^{(log* N_prev)³}。最後の区間の増分がしきい値以上なら
    発散と矛盾しない、未満なら収束と矛盾しない、とラベルを付ける（判定ではない）。
    """
    _check_tau(tau)
    marks = sorted(set(int(c) for c in checkpoints))
    if len(marks) < 2 or marks[0] < 2:
        raise ValueError("チェックポイントは 2 以上の値を 2 つ以上指定してください")

    first = max(2, rate.domain_start)
    points: List[Tuple[int, float, float]] = []
    running = _segment_sum(rate, tau, first, marks[0]) if marks[0] >= first else 0.0
    points.append((marks[0], running, running))
    for previous, current in zip(marks, marks[1:]):
        lo = max(previous + 1, first)
        increment = _segment_sum(rate, tau, lo, current) if current >= lo else 0.0
        running = math.fsum([running, increment])
        points.append((current, running, increment))

    if threshold is None:
        threshold = 0.01 * tau ** (log_star(marks[-2]) ** 3)
    label = DIVERGENT_LABEL if points[-1][2] >= threshold else CONVERGENT_LABEL
    return SummabilityProfile(points=points, threshold=threshold, label=label)


SequenceFunction = Callable[[np.ndarray], np.ndarray]


def summand_sequence(rate: RateSequence, tau: float) -> SequenceFunction:
    """a_n = δ_n·τ^{(log* n)³} / ln n"""
    _check_tau(tau)

    def sequence(ns: np.ndarray) -> np.ndarray:
        return _summand(rate, tau, np.asarray(ns, dtype=np.int64))

    return sequence


@dataclass(frozen=True)
class CondensationResult:
    """凝縮判定の結果"""

    direct: float
    condensed: float
    alpha: float
    lower: float
    sandwich_holds: bool
    times: List[int] = field(default_factory=list)


def _direct_sum(a_spec: SequenceFunction, first: int, stop: int) -> float:
    partials: List[float] = []
    for start in range(first, stop, CHUNK):
        ns = np.arange(start, min(stop, start + CHUNK), dtype=np.int64)
        partials.append(math.fsum(np.asarray(a_spec(ns), dtype=float).tolist()))
    return math.fsum(partials)


def condensation(a_spec: SequenceFunction, q_spec: Sequence[int], K: int) -> CondensationResult:
    """
    凝縮定理の両側評価を部分和で確かめる

    direct = Σ_{q₀ ≤ n < q_K} a_n、condensed = Σ_{k<K} (q_{k+1}−q_k)·a_{q_k}、
    alpha = max_k (q_{k+1}−q_k)/(q_k−q_{k−1})。
    α⁻¹·Σ_{k<K−1} (q_{k+2}−q_{k+1})·a_{q_{k+1}} ≤ direct ≤ condensed を検査する。

    Args:
        a_spec: 単調非増加な正の数列（ベクトル化された関数）
        q_spec: 狭義単調増加な時刻列（q_0..q_K を使う）
        K: 項数

    Raises:
        NotIncreasing: 時刻列が狭義単調増加でない場合
    """
    if K < 1:
        raise ValueError(f"K は 1 以上で指定してください: {K}")
    times = [int(q) for q in list(q_spec)[: K + 1]]
    if len(times) < K + 1:
        raise ValueError(f"時刻列の長さが足りません: {len(times)} < {K + 1}")
    if times[0] < 0:
        raise NotIncreasing(f"時刻列は 0 以上の整数で指定してください: q_0={times[0]}")
    gaps = [later - earlier for earlier, later in zip(times, times[1:])]
    for k, gap in enumerate(gaps):
        if gap <= 0:
            raise NotIncreasing(f"時刻列が狭義単調増加ではありません: q_{k}={times[k]}, q_{k + 1}={times[k + 1]}")

    alpha = max((gaps[k] / gaps[k - 1] for k in range(1, K)), default=1.0)
    at_times = np.asarray(a_spec(np.asarray(times, dtype=np.int64)), dtype=float)

    direct = _direct_sum(a_spec, times[0], times[-1])
    condensed = math.fsum(gaps[k] * float(at_times[k]) for k in range(K))
    lower = math.fsum(gaps[k + 1] * float(at_times[k + 1]) for k in range(K - 1)) / alpha

    slack = 1e-12
    sandwich = lower <= direct * (1.0 + slack) and direct <= condensed * (1.0 + slack)
    return CondensationResult(
        direct=direct,
        condensed=condensed,
        alpha=alpha,
        lower=lower,
        sandwich_holds=sandwich,
        times=times,
    )
