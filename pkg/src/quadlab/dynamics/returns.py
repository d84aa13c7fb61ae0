"""回帰の検出・分類と束縛期間・自由期間の計算モジュール"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.special import lambertw

from quadlab.dynamics.core import ParameterLike, as_parameter, orbit_log_derivative
from quadlab.dynamics.partition import (
    Interval,
    PartitionConfig,
    PartitionIndex,
    depth_of,
    interval_of,
    locate,
    slice_length,
)
from quadlab.utils.errors import (
    BoundedPeriodTruncated,
    NoReturnWithinBudget,
    NotAReturn,
    PreconditionViolated,
)
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

# 外側膨張の既定定数（a₀ = 2 で較正）
DEFAULT_C_M = 0.5
DEFAULT_GAMMA_M = 0.3

# η 格子の幾何的な幅（η_max から e^{−ETA_SPAN}·η_max まで）
ETA_SPAN = math.log(1.0e3)
DEFAULT_ETA_SAMPLES = 33


class ReturnKind(Enum):
    """回帰の分類"""

    INESSENTIAL = "inessential"
    ESSENTIAL = "essential"
    ESCAPE = "escape"
    COMPLETE = "complete"
    BOUND = "bound"


@dataclass(frozen=True)
class ReturnEvent:
    """時刻 n の回帰 1 件

    分類に応じて host / essential_interval / escape_interval のいずれか 1 つだけが入る
    （complete と bound はどれも持たない）。
    """

    n: int
    kind: ReturnKind
    image: Interval
    host: Optional[Tuple[PartitionIndex, PartitionIndex]] = None
    essential_interval: Optional[Interval] = None
    escape_interval: Optional[Interval] = None
    depth: Optional[int] = None
    omega: Optional[Interval] = None
    bound_period: Optional[int] = None

    def __post_init__(self) -> None:
        populated = {
            ReturnKind.INESSENTIAL: self.host is not None,
            ReturnKind.ESSENTIAL: self.essential_interval is not None,
            ReturnKind.ESCAPE: self.escape_interval is not None,
        }
        for kind, present in populated.items():
            if present != (kind == self.kind):
                raise ValueError(f"{self.kind.value} 回帰の付随区間が不整合です")

    def with_bound_period(self, p: int) -> "ReturnEvent":
        return ReturnEvent(
            n=self.n,
            kind=self.kind,
            image=self.image,
            host=self.host,
            essential_interval=self.essential_interval,
            escape_interval=self.escape_interval,
            depth=self.depth,
            omega=self.omega,
            bound_period=p,
        )


@dataclass(frozen=True)
class BoundedPeriodResult:
    """束縛期間の測定結果（格子による sup の近似）"""

    p: int
    r: int
    n: int
    witness_nu: Optional[int]
    truncated: bool


@dataclass(frozen=True)
class OutsideExpansionResult:
    """窓の外での膨張評価（両辺とも対数）"""

    lhs_log: float
    rhs_log: float
    holds: bool
    sharp_rhs_log: Optional[float] = None
    sharp_holds: Optional[bool] = None

    @property
    def margin(self) -> float:
        return self.lhs_log - self.rhs_log


@dataclass(frozen=True)
class EssentialBudget:
    """φ(r) = 2κ₂ log r による本質回帰の回数評価"""

    r: float
    kappa2: float
    s: int
    phi_s: float
    bound: float
    within_bound: bool
    fixed_point: Optional[float] = field(default=None)


def core_radius(delta_n: float) -> float:
    """除外の芯 (−δ_n/3, δ_n/3) の半径"""
    return delta_n / 3.0


def return_depth(image: Interval, cfg: PartitionConfig) -> int:
    """像の中で最も 0 に近い点の深さ（分割の範囲に丸める）"""
    if image.lo <= 0.0 <= image.hi:
        return cfg.r_max
    nearest = min(abs(image.lo), abs(image.hi))
    return min(max(depth_of(nearest), cfg.r_min), cfg.r_max)


def _ordering_key(idx: PartitionIndex) -> Tuple[int, int]:
    # 0 から外側に向かって増える
    return (-idx.depth, idx.l)


def _adjacent(inner: PartitionIndex, outer: PartitionIndex) -> bool:
    if inner.depth == outer.depth:
        return outer.l - inner.l == 1
    return (
        inner.depth - outer.depth == 1
        and inner.l == inner.depth * inner.depth - 1
        and outer.l == 0
    )


def host_of(
    image: Interval, cfg: PartitionConfig
) -> Optional[Tuple[PartitionIndex, PartitionIndex]]:
    """
    像が隣接する 2 枚のスライスに収まり、深い方のスライス長より短ければホストを返す

    Returns:
        (深い側, 浅い側) のスライス組。非本質回帰でなければ None
    """
    first, second = locate(image.lo, cfg), locate(image.hi, cfg)
    if not isinstance(first, PartitionIndex) or not isinstance(second, PartitionIndex):
        return None
    if first.side != second.side:
        return None

    inner, outer = sorted((first, second), key=_ordering_key)
    if inner != outer and not _adjacent(inner, outer):
        return None
    if image.length < slice_length(inner.depth):
        return (inner, outer)
    return None


def essential_interval_of(image: Interval, cfg: PartitionConfig) -> Interval:
    """像に含まれる最も外側の I_r。無ければ像の (−δ, δ) 部分"""
    sign = 1.0 if image.hi > 0.0 else -1.0
    lo, hi = (image.lo, image.hi) if sign > 0 else (-image.hi, -image.lo)
    delta = cfg.delta

    start = max(cfg.r_min, depth_of(min(hi, 1.0)))
    for r in range(start, min(start + 2, cfg.r_max) + 1):
        candidate = interval_of(r, cfg)
        if candidate.lo < lo:
            break
        if candidate.hi <= hi:
            return candidate if sign > 0 else Interval(-candidate.hi, -candidate.lo)

    clipped = Interval(max(lo, 0.0), min(hi, delta))
    return clipped if sign > 0 else Interval(-clipped.hi, -clipped.lo)


def escape_interval_of(image: Interval, cfg: PartitionConfig) -> Interval:
    """像のうち (−δ, δ) の外側の部分（長い方）"""
    delta = cfg.delta
    upper = max(0.0, image.hi - delta)
    lower = max(0.0, -delta - image.lo)
    if upper >= lower:
        return Interval(max(image.lo, delta), image.hi)
    return Interval(image.lo, min(image.hi, -delta))


def classify(image: Interval, n: int, delta_n: float, cfg: PartitionConfig) -> ReturnKind:
    """
    回帰を 4 種類に分類

    優先順位は complete > escape > essential > inessential。
    スライス 1 枚とちょうど同じ長さの像は essential とする。

    Args:
        image: ξ_n の像区間
        n: 時刻
        delta_n: 時刻 n での δ_n
        cfg: 分割設定

    Returns:
        ReturnKind

    Raises:
        NotAReturn: 像が (−δ, δ) と交わらない場合
    """
    delta = cfg.delta
    if not image.meets_open(-delta, delta):
        raise NotAReturn(f"時刻 {n} の像 {image} は (−δ, δ) と交わりません")

    core = core_radius(delta_n)
    if image.meets_open(-core, core):
        return ReturnKind.COMPLETE

    outside = max(0.0, image.hi - delta) + max(0.0, -delta - image.lo)
    if outside >= 3.0 * delta:
        return ReturnKind.ESCAPE

    if host_of(image, cfg) is not None:
        return ReturnKind.INESSENTIAL
    return ReturnKind.ESSENTIAL


def make_return_event(
    image: Interval,
    n: int,
    delta_n: float,
    cfg: PartitionConfig,
    omega: Optional[Interval] = None,
) -> ReturnEvent:
    """分類して付随区間を埋めた ReturnEvent を作る"""
    kind = classify(image, n, delta_n, cfg)
    depth = return_depth(image, cfg)
    if kind is ReturnKind.INESSENTIAL:
        return ReturnEvent(
            n=n, kind=kind, image=image, host=host_of(image, cfg), depth=depth, omega=omega
        )
    if kind is ReturnKind.ESSENTIAL:
        return ReturnEvent(
            n=n,
            kind=kind,
            image=image,
            essential_interval=essential_interval_of(image, cfg),
            depth=depth,
            omega=omega,
        )
    if kind is ReturnKind.ESCAPE:
        return ReturnEvent(
            n=n,
            kind=kind,
            image=image,
            escape_interval=escape_interval_of(image, cfg),
            depth=depth,
            omega=omega,
        )
    return ReturnEvent(n=n, kind=kind, image=image, depth=depth, omega=omega)


def eta_grid(r: int, count: int = DEFAULT_ETA_SAMPLES) -> np.ndarray:
    """
    (0, e^{−|r−1|}) 上の幾何格子

    count − 1 が 2 のべきなら、格子を倍にしたとき元の点をすべて含む。
    """
    eta_max = math.exp(-abs(r - 1)) * (1.0 - 1e-9)
    exponents = np.linspace(0.0, 1.0, count)
    return eta_max * np.exp(-ETA_SPAN * exponents)


def bounded_period(
    a_samples: Iterable[ParameterLike],
    n: int,
    r: int,
    cfg: PartitionConfig,
    max_nu: int,
    eta_samples: int = DEFAULT_ETA_SAMPLES,
    strict: bool = False,
) -> BoundedPeriodResult:
    """
    束縛条件 |ξ_ν(a) − F^ν(η;a)| ≤ |ξ_ν(a)|/(10ν²) が続く最大の ν を測る

    sup は a のサンプルと η 格子で近似する。

    Args:
        a_samples: 区間から取ったパラメータ
        n: 回帰の時刻（記録用）
        r: 回帰の深さ
        cfg: 分割設定
        max_nu: 調べる ν の上限
        eta_samples: η 格子の点数
        strict: True なら打ち切り時に例外を送出

    Returns:
        BoundedPeriodResult（打ち切りなら truncated=True、p は下界）

    Raises:
        BoundedPeriodTruncated: strict=True で maxNu まで条件が成立した場合
    """
    params = np.array([as_parameter(a) for a in a_samples], dtype=float)
    if params.size == 0:
        raise ValueError("パラメータのサンプルが空です")

    a_grid = params[:, None]
    # 差分 F^ν(η;a) − ξ_ν(a) を直接追う（深い r で 1 − aη² が 1 に丸まるため）
    d = np.broadcast_to(eta_grid(r, eta_samples)[None, :], (params.size, eta_samples))
    xi = np.zeros_like(a_grid)

    for nu in range(1, max_nu + 1):
        d = -a_grid * d * (2.0 * xi + d)
        xi = 1.0 - a_grid * xi * xi
        tolerance = np.abs(xi) / (10.0 * nu * nu)
        if not np.all(np.abs(d) <= tolerance):
            return BoundedPeriodResult(
                p=nu - 1, r=r, n=n, witness_nu=nu, truncated=False
            )

    result = BoundedPeriodResult(p=max_nu, r=r, n=n, witness_nu=None, truncated=True)
    if strict:
        raise BoundedPeriodTruncated(
            f"束縛条件が maxNu={max_nu} まで成立しました（p は下界）", result
        )
    return result


def free_period(a: ParameterLike, x: float, cfg: PartitionConfig, max_steps: int) -> int:
    """
    点 x から (−δ, δ) に入るまでのステップ数 L を返す

    Raises:
        PreconditionViolated: |x| < δ の場合
        NoReturnWithinBudget: max_steps 以内に入らない場合
    """
    a_value = as_parameter(a)
    delta = cfg.delta
    if abs(x) < delta:
        raise PreconditionViolated(f"始点 x={x!r} が臨界窓 (−δ, δ) の中にあります")

    y = x
    for steps in range(1, max_steps + 1):
        y = 1.0 - a_value * y * y
        if abs(y) < delta:
            return steps
    raise NoReturnWithinBudget(
        f"{max_steps} ステップ以内に (−δ, δ) へ戻りませんでした (a={a_value!r}, x={x!r})"
    )


def outside_expansion_check(
    a: ParameterLike,
    x: float,
    n: int,
    cfg: PartitionConfig,
    c_m: float = DEFAULT_C_M,
    gamma_m: float = DEFAULT_GAMMA_M,
) -> OutsideExpansionResult:
    """
    窓の外に留まる軌道で |∂ₓFⁿ(x;a)| ≥ δ·C_M·e^{γ_M n} が成り立つか評価

    Fⁿ(x;a) ∈ (−2δ, 2δ) のときは δ を外した強い評価も判定する。

    Raises:
        PreconditionViolated: 途中で (−δ, δ) に入る場合
    """
    a_value = as_parameter(a)
    delta = cfg.delta

    y = x
    for k in range(n):
        if abs(y) < delta:
            raise PreconditionViolated(f"軌道が {k} ステップ目で (−δ, δ) に入りました")
        y = 1.0 - a_value * y * y

    lhs = orbit_log_derivative(x, a_value, n).log_mag
    rhs = math.log(delta) + math.log(c_m) + gamma_m * n
    result = OutsideExpansionResult(lhs_log=lhs, rhs_log=rhs, holds=lhs >= rhs)

    if abs(y) < 2.0 * delta:
        sharp = math.log(c_m) + gamma_m * n
        result = OutsideExpansionResult(
            lhs_log=lhs,
            rhs_log=rhs,
            holds=result.holds,
            sharp_rhs_log=sharp,
            sharp_holds=lhs >= sharp,
        )
    return result


def _phi(r: float, kappa2: float) -> float:
    return 2.0 * kappa2 * math.log(r)


def essential_return_budget(r: float, kappa2: float) -> EssentialBudget:
    """
    本質回帰の深さの列に対する評価

    s は log_s r ≤ 2κ₂ となる最小の反復回数、φ(r) = 2κ₂ log r。
    2κ₂ ≥ 3 なら φ^s(r) ≤ 12κ₂² かつ s ≤ log* r。
    不動点は Lambert W の下側の枝から求める（2κ₂ ≥ e のときのみ）。
    """
    if kappa2 <= 0.0:
        raise ValueError(f"κ₂ は正で指定してください: {kappa2}")
    if r < 1.0:
        raise ValueError(f"r は 1 以上で指定してください: {r}")

    threshold = 2.0 * kappa2
    s, value = 0, float(r)
    while value > threshold:
        value = math.log(value)
        s += 1

    phi_s = float(r)
    for _ in range(s):
        phi_s = _phi(phi_s, kappa2)

    fixed_point: Optional[float] = None
    if threshold >= math.e:
        fixed_point = float(-threshold * lambertw(-1.0 / threshold, k=-1).real)

    bound = 12.0 * kappa2 * kappa2
    return EssentialBudget(
        r=float(r),
        kappa2=kappa2,
        s=s,
        phi_s=phi_s,
        bound=bound,
        within_bound=phi_s <= bound,
        fixed_point=fixed_point,
    )


def inessential_runs(events: List[ReturnEvent]) -> List[Tuple[int, int]]:
    """
    本質/完全回帰の後に続いた非本質回帰の合計時間 o を集計

    o は最初の非本質回帰の時刻 i₁ から、次の非本質でない回帰の時刻 i_s までの長さ
    i_s − i₁ とする。途中の非本質回帰ごとの束縛期間と自由期間をすべて含む。
    束縛期間中の訪問（bound）は区切りにしない。
    i_s に届かずに列が終わった場合は数えない。

    Returns:
        (直前の本質・完全回帰の深さ, o) の組
    """
    runs: List[Tuple[int, int]] = []
    anchor_depth: Optional[int] = None
    first_inessential: Optional[int] = None
    for event in events:
        if event.kind is ReturnKind.BOUND:
            continue
        if event.kind is ReturnKind.INESSENTIAL:
            if first_inessential is None and anchor_depth is not None:
                first_inessential = event.n
            continue
        if anchor_depth is not None and first_inessential is not None:
            runs.append((anchor_depth, event.n - first_inessential))
        first_inessential = None
        # 脱出回帰の後の非本質回帰はどの深さにも帰属させない
        anchor_depth = event.depth if event.kind is not ReturnKind.ESCAPE else None
    return runs
