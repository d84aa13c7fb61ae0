"""臨界窓 (−δ, δ) の分割 I_r / I_{rl} の幾何モジュール"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

from quadlab.utils.errors import ConfigError, RNotInPartition

# e^{−r} が正規化数に収まる深さの上限
R_MAX_LIMIT = 700


class Interval(NamedTuple):
    """実数区間 (lo, hi)。開閉は使う側の規約に従う"""

    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def meets_open(self, lo: float, hi: float) -> bool:
        """開区間 (lo, hi) と交わるか"""
        return self.lo < hi and self.hi > lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


class Location(Enum):
    """分割要素に属さない点の分類"""

    OUTSIDE = "outside"
    CRITICAL_POINT = "critical"


@dataclass(frozen=True, order=True)
class PartitionIndex:
    """分割要素 I_{rl} の番地（負の r は鏡像側）"""

    r: int
    l: int

    def __post_init__(self) -> None:
        if self.r == 0:
            raise RNotInPartition("r = 0 は分割に含まれません")
        if not 0 <= self.l < self.r * self.r:
            raise RNotInPartition(f"l は [0, r²−1] の範囲です: r={self.r}, l={self.l}")

    @property
    def depth(self) -> int:
        return abs(self.r)

    @property
    def side(self) -> int:
        return 1 if self.r > 0 else -1

    def mirror(self) -> "PartitionIndex":
        return PartitionIndex(-self.r, self.l)

    @property
    def label(self) -> str:
        return f"{self.r}:{self.l}"


LocateResult = Union[PartitionIndex, Location]


@dataclass(frozen=True)
class PartitionConfig:
    """分割の設定（δ = e^{−Δ}、大スケール係数 ε₁）"""

    delta_exponent: float
    epsilon1: float
    r_max: int = R_MAX_LIMIT

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta_exponent) or self.delta_exponent <= 0.0:
            raise ConfigError(
                f"Δ は正の有限値で指定してください: {self.delta_exponent}",
                path="delta_exponent",
            )
        if not self.epsilon1 > 1.0 / self.delta_exponent**2:
            raise ConfigError(
                f"ε₁ は 1/Δ² = {1.0 / self.delta_exponent ** 2!r} より大きくしてください: "
                f"{self.epsilon1}",
                path="epsilon1",
            )
        if not self.r_min <= self.r_max <= R_MAX_LIMIT:
            raise ConfigError(
                f"r_max は [{self.r_min}, {R_MAX_LIMIT}] の範囲で指定してください: {self.r_max}",
                path="r_max",
            )

    @property
    def delta(self) -> float:
        return math.exp(-self.delta_exponent)

    @property
    def r_min(self) -> int:
        return math.ceil(self.delta_exponent)

    def r_floor(self, inflation: float = 1.0) -> int:
        """窓 (−inflation·δ, inflation·δ) に収まる最小の深さ"""
        return max(1, math.ceil(self.delta_exponent - math.log(inflation)))


def _outer_edge(r: int) -> float:
    return math.exp(-r)


def _inner_edge(r: int) -> float:
    return math.exp(-(r + 1))


def _slice_edge(r: int, l: int) -> float:
    """I_r（r > 0）の l 番目のスライス境界。l = r² は外側の端点そのもの"""
    lo, hi = _inner_edge(r), _outer_edge(r)
    count = r * r
    if l >= count:
        return hi
    return lo + (hi - lo) * l / count


def _check_depth(r: int, cfg: PartitionConfig, inflation: float = 1.0) -> None:
    depth = abs(r)
    if depth < cfg.r_floor(inflation) or depth > cfg.r_max:
        raise RNotInPartition(
            f"深さ r={r} は分割 [{cfg.r_floor(inflation)}, {cfg.r_max}] に含まれません"
        )


def interval_of(r: int, cfg: PartitionConfig, inflation: float = 1.0) -> Interval:
    """
    分割要素 I_r を返す

    r > 0 は (e^{−r−1}, e^{−r}]、r < 0 はその鏡像 [−e^{r}, −e^{r−1})。

    Raises:
        RNotInPartition: |r| < ⌈Δ⌉ または |r| > r_max の場合
    """
    _check_depth(r, cfg, inflation)
    depth = abs(r)
    lo, hi = _inner_edge(depth), _outer_edge(depth)
    if r > 0:
        return Interval(lo, hi)
    return Interval(-hi, -lo)


def subinterval_of(
    idx: PartitionIndex, cfg: PartitionConfig, inflation: float = 1.0
) -> Interval:
    """スライス I_{rl}（l は 0 から外側に向かって増える）"""
    _check_depth(idx.r, cfg, inflation)
    depth = idx.depth
    lo, hi = _slice_edge(depth, idx.l), _slice_edge(depth, idx.l + 1)
    if idx.r > 0:
        return Interval(lo, hi)
    return Interval(-hi, -lo)


def slice_length(r: int) -> float:
    """I_r のスライス 1 枚の長さ |I_r| / r²"""
    depth = abs(r)
    return (_outer_edge(depth) - _inner_edge(depth)) / (depth * depth)


def max_slice_length(cfg: PartitionConfig) -> float:
    return slice_length(cfg.r_min)


def large_scale(cfg: PartitionConfig) -> float:
    """大スケール S = ε₁·δ"""
    return cfg.epsilon1 * cfg.delta


def mirror(idx: PartitionIndex) -> PartitionIndex:
    return idx.mirror()


def depth_of(x: float) -> int:
    """0 < |x| ≤ 1 を含む I_r の深さ r（分割の範囲は見ない）"""
    ax = abs(x)
    r = int(math.floor(-math.log(ax)))
    while r > 0 and ax > _outer_edge(r):
        r -= 1
    while ax <= _inner_edge(r):
        r += 1
    return r


def locate(x: float, cfg: PartitionConfig, inflation: float = 1.0) -> LocateResult:
    """
    点 x を含む分割要素を探す

    Args:
        x: |x| ≤ 1 の点
        cfg: 分割設定
        inflation: 窓の拡大率（既定 1 は正準な (−δ, δ)）

    Returns:
        PartitionIndex、窓の外なら Location.OUTSIDE、x = 0 なら Location.CRITICAL_POINT
    """
    if x == 0.0:
        return Location.CRITICAL_POINT
    ax = abs(x)
    if ax > inflation * cfg.delta:
        return Location.OUTSIDE

    r = depth_of(ax)
    if r < cfg.r_floor(inflation):
        # Δ が整数でないときの (e^{−⌈Δ⌉}, δ] はどの I_r にも属さない
        return Location.OUTSIDE
    if r > cfg.r_max:
        return PartitionIndex(cfg.r_max if x > 0 else -cfg.r_max, 0)

    count = r * r
    lo, hi = _inner_edge(r), _outer_edge(r)
    l = int((ax - lo) / (hi - lo) * count)
    l = min(max(l, 0), count - 1)
    while l > 0 and ax <= _slice_edge(r, l):
        l -= 1
    while l < count - 1 and ax > _slice_edge(r, l + 1):
        l += 1

    return PartitionIndex(r if x > 0 else -r, l)
