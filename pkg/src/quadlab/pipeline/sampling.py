"""パラメータ区間上の ξ_n(ω) の標本像とキーによる分割モジュール

ξ_n は ω 上で単調とは限らないため、像はサンプル格子で近似する。
隣り合うサンプルの像が局所的なスライス長より離れていれば中点を足す。
"""

import math
from dataclasses import dataclass
from typing import Callable, Hashable, List, Optional

import numpy as np

from quadlab.dynamics.core import critical_values
from quadlab.dynamics.partition import Interval, PartitionConfig, large_scale
from quadlab.pipeline.run_config import SamplingSpec
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

KeyFunction = Callable[[float], Hashable]
KeyPredicate = Callable[[Hashable], bool]


@dataclass(frozen=True)
class KeyedRun:
    """同じキーを持つ連続したパラメータ区間"""

    key: Hashable
    lo: float
    hi: float
    params: np.ndarray
    values: np.ndarray

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def outermost(self) -> float:
        """サンプル像の最大の |x|"""
        return float(np.max(np.abs(self.values)))


def local_resolution(left: np.ndarray, right: np.ndarray, cfg: PartitionConfig) -> np.ndarray:
    """隣り合うサンプルの像に許す差（窓の中ではスライス長、外では S）"""
    nearest = np.minimum(np.abs(left), np.abs(right))
    with np.errstate(divide="ignore"):
        raw_depth = np.floor(-np.log(nearest))
    depth = np.clip(np.nan_to_num(raw_depth, posinf=cfg.r_max), cfg.r_min, cfg.r_max)
    slices = (np.exp(-depth) - np.exp(-depth - 1.0)) / (depth * depth)
    return np.where(nearest < cfg.delta, slices, large_scale(cfg))


class ImageTracker:
    """
    区間 [lo, hi] 上のサンプル格子と ξ_n の値を時刻とともに進める

    値は 1 ステップずつ更新するので、同じ格子点を critical_values で
    計算した結果とビット単位で一致する。
    """

    def __init__(
        self, lo: float, hi: float, n: int, cfg: PartitionConfig, spec: SamplingSpec
    ) -> None:
        if not lo < hi:
            raise ValueError(f"区間が空です: [{lo!r}, {hi!r}]")
        self.cfg = cfg
        self.spec = spec
        self.n = n
        self.params = np.linspace(lo, hi, spec.base_points)
        self.values = critical_values(self.params, n)

    @property
    def lo(self) -> float:
        return float(self.params[0])

    @property
    def hi(self) -> float:
        return float(self.params[-1])

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def size(self) -> int:
        return int(self.params.size)

    @property
    def image(self) -> Interval:
        return Interval(float(self.values.min()), float(self.values.max()))

    def step(self) -> None:
        """n → n+1"""
        self.n += 1
        self.values = 1.0 - self.params * self.values * self.values

    def _insert(self, new_params: np.ndarray) -> None:
        new_params = np.setdiff1d(new_params, self.params)
        if new_params.size == 0:
            return
        params = np.concatenate([self.params, new_params])
        values = np.concatenate([self.values, critical_values(new_params, self.n)])
        order = np.argsort(params, kind="stable")
        self.params, self.values = params[order], values[order]

    def refine(self) -> int:
        """
        像の差が局所分解能を超える隙間に中点を足す（max_points まで）

        Returns:
            追加した点の数
        """
        added = 0
        while self.size < self.spec.max_points:
            gaps = np.abs(np.diff(self.values))
            widths = np.diff(self.params)
            limit = local_resolution(self.values[:-1], self.values[1:], self.cfg)
            need = np.flatnonzero((gaps > limit) & (widths > self.spec.min_width))
            if need.size == 0:
                break
            room = self.spec.max_points - self.size
            if need.size > room:
                # 差の大きい隙間を優先
                order = np.argsort(-gaps[need], kind="stable")[:room]
                need = np.sort(need[order])
            mids = 0.5 * (self.params[need] + self.params[need + 1])
            before = self.size
            self._insert(mids)
            if self.size == before:
                break
            added += self.size - before
        return added

    def restrict(self, lo: float, hi: float) -> None:
        """格子を [lo, hi] に制限する（端点は必ず格子に含める）"""
        inside = (self.params > lo) & (self.params < hi)
        self.params, self.values = self.params[inside], self.values[inside]
        self._insert(np.array([lo, hi]))

    def pick(self, count: int) -> np.ndarray:
        """端点を含む等間隔の添字でサンプルを選ぶ"""
        index = np.unique(np.round(np.linspace(0, self.size - 1, count)).astype(int))
        return self.params[index]

    def _bisect(
        self, left: np.ndarray, right: np.ndarray, left_keys: List[Hashable], key_fn: KeyFunction
    ) -> None:
        """左端のキーが変わる点を各区間で同時に二分探索し、両側の点を格子に足す"""
        for _ in range(self.spec.bisect_steps):
            mid = 0.5 * (left + right)
            active = (mid > left) & (mid < right)
            if not active.any():
                break
            mid_values = critical_values(mid, self.n)
            same = np.array(
                [key_fn(float(v)) == k for v, k in zip(mid_values, left_keys)], dtype=bool
            )
            left = np.where(active & same, mid, left)
            right = np.where(active & ~same, mid, right)
        self._insert(np.concatenate([left, right]))

    def split(
        self, key_fn: KeyFunction, absorbing: Optional[KeyPredicate] = None
    ) -> List[KeyedRun]:
        """
        キーが一定の連続区間に分割する

        境界は二分探索で binary64 の分解能まで詰め、隣り合う区間の共有端点にする。
        absorbing が真を返すキーの区間に隣接する境界は、相手側のサンプル上に置く
        （境界をまたぐ部分は absorbing 側に入る）。

        Returns:
            [lo, hi] をちょうど覆う KeyedRun の列（長さ 0 の区間は除く）
        """
        for _ in range(self.spec.split_rounds):
            keys = [key_fn(float(v)) for v in self.values]
            changes = [
                i
                for i in range(self.size - 1)
                if keys[i] != keys[i + 1]
                and self.params[i + 1] - self.params[i] > 2.0 * np.spacing(self.params[i + 1])
            ]
            if not changes:
                break
            index = np.array(changes)
            self._bisect(
                self.params[index].copy(),
                self.params[index + 1].copy(),
                [keys[i] for i in changes],
                key_fn,
            )
        else:
            logger.debug(f"分割の反復が上限に達しました: n={self.n}, 点数={self.size}")

        keys = [key_fn(float(v)) for v in self.values]
        return _runs_from_keys(self.params, self.values, keys, absorbing)


def _runs_from_keys(
    params: np.ndarray,
    values: np.ndarray,
    keys: List[Hashable],
    absorbing: Optional[KeyPredicate],
) -> List[KeyedRun]:
    groups: List[List[int]] = []
    for i, key in enumerate(keys):
        if groups and keys[groups[-1][0]] == key:
            groups[-1].append(i)
        else:
            groups.append([i])

    def absorbs(key: Hashable) -> bool:
        return absorbing is not None and absorbing(key)

    edges = [float(params[0])]
    for current, following in zip(groups, groups[1:]):
        last, first = current[-1], following[0]
        if absorbs(keys[first]) and not absorbs(keys[last]):
            edges.append(float(params[last]))
        elif absorbs(keys[last]) and not absorbs(keys[first]):
            edges.append(float(params[first]))
        else:
            edges.append(0.5 * (float(params[last]) + float(params[first])))
    edges.append(float(params[-1]))

    runs: List[KeyedRun] = []
    for j, group in enumerate(groups):
        lo, hi = edges[j], edges[j + 1]
        if not hi > lo:
            continue
        runs.append(
            KeyedRun(
                key=keys[group[0]],
                lo=lo,
                hi=hi,
                params=params[group],
                values=values[group],
            )
        )
    return runs


def covered_length(runs: List[KeyedRun]) -> float:
    """区間列の長さの合計（補償和）"""
    return math.fsum(run.length for run in runs)
