"""パラメータ除外の帰納法を机上規模で模擬するモジュール

開始区間 ω₀ から完全回帰ごとに (−δ_n/3, δ_n/3) に入るパラメータを除き、
残った区間を次の世代として進める。区間の像はすべてサンプル格子による近似。
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from quadlab.dynamics.core import (
    A_MAX,
    A_MIN,
    CEEstimate,
    PRScreen,
    as_parameter,
    ce_estimate,
    pr_screen,
)
from quadlab.dynamics.distortion import restore_derivative_check
from quadlab.dynamics.partition import (
    Interval,
    Location,
    PartitionConfig,
    PartitionIndex,
    depth_of,
    large_scale,
    locate,
)
from quadlab.dynamics.returns import (
    ReturnEvent,
    ReturnKind,
    bounded_period,
    core_radius,
    make_return_event,
    return_depth,
)
from quadlab.pipeline.run_config import RunConfig, SamplingSpec, StartupSpec
from quadlab.pipeline.sampling import ImageTracker, KeyedRun
from quadlab.series.rates import RateSequence, log_star
from quadlab.utils.errors import (
    BudgetExhausted,
    DomainError,
    NoExpansionWithinBudget,
    StartupRejected,
)
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

RETIRE_BUDGET = "budget"
RETIRE_RESOLUTION = "resolution"
RETIRE_CAPACITY = "capacity"
EXCLUDE_BASIC_ASSUMPTION = "basic-assumption"

STARTUP_BISECT_STEPS = 24
TAU_CAP = 1.0 - 1e-12

CORE_KEY: Tuple[str, ...] = ("core",)
KEEP_KEY: Tuple[str, ...] = ("keep",)


class IntervalTag(Enum):
    """区間の由来（直近の分割で何に写されたか）"""

    START = "start"
    N = "N"
    T = "T"


@dataclass(frozen=True)
class ParamInterval:
    """パラメータ区間 [lo, hi] と直近の完全回帰の時刻 m"""

    lo: float
    hi: float
    m: int
    tag: IntervalTag
    history: Tuple[ReturnEvent, ...] = ()

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"区間が空です: [{self.lo!r}, {self.hi!r}]")
        if self.lo < A_MIN or self.hi > A_MAX:
            raise DomainError(f"区間 [{self.lo!r}, {self.hi!r}] が [1, 2] の外にはみ出しています")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def as_interval(self) -> Interval:
        return Interval(self.lo, self.hi)


@dataclass(frozen=True)
class StartupResult:
    """開始区間の探索結果"""

    omega0: ParamInterval
    m0: int
    epsilon: float
    degenerate: bool
    monotone: bool
    ce: CEEstimate
    pr: PRScreen


@dataclass
class AdvanceResult:
    """1 区間を完全回帰まで進めた結果"""

    events: List[ReturnEvent] = field(default_factory=list)
    pieces: List[ParamInterval] = field(default_factory=list)
    excluded: List[Interval] = field(default_factory=list)
    completed: Optional[ParamInterval] = None
    complete_n: Optional[int] = None
    retired: Optional[Interval] = None
    retire_reason: Optional[str] = None
    removed: bool = False
    time_violation: bool = False


@dataclass(frozen=True)
class ExclusionResult:
    """完全回帰での除外 E と残りの区間"""

    excluded: List[Interval]
    survivors: List[ParamInterval]


@dataclass(frozen=True)
class GenerationState:
    """世代 k の区間集合 Δ_k と累計の除外量"""

    k: int
    intervals: Tuple[ParamInterval, ...]
    excluded: float
    retired: float
    measure: float
    max_m: int
    counts: Dict[str, int]
    survival: float = 1.0

    def row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "k": self.k,
            "measure": self.measure,
            "excluded_len": self.excluded,
            "retired_len": self.retired,
            "n_intervals": len(self.intervals),
            "max_m": self.max_m,
        }
        for kind in ReturnKind:
            row[kind.value] = self.counts.get(kind.value, 0)
        return row


@dataclass(frozen=True)
class DecayRow:
    """世代 k での測度の減少と上界の比較"""

    k: int
    m_k: int
    measured_ratio: float
    survival_ratio: float
    bound: float
    calibrated_bound: float
    holds: bool


@dataclass(frozen=True)
class DecayReport:
    """測度減少の報告"""

    tau: float
    tau_calibrated: Optional[float]
    rows: List[DecayRow]
    interval_tau_min: Optional[float]
    complete_returns: int
    advance_calls: int
    time_violations: int

    @property
    def time_violation_fraction(self) -> float:
        if self.advance_calls == 0:
            return 0.0
        return self.time_violations / self.advance_calls


@dataclass(frozen=True)
class RunResult:
    """run の結果一式"""

    startup: StartupResult
    states: List[GenerationState]
    events: List[Tuple[int, ReturnEvent]]
    decay: DecayReport
    retired_by_reason: Dict[str, float]
    basic_assumption_exclusions: int


@dataclass(frozen=True)
class MSequence:
    """m_{k+1} = ⌈m_k + κ log m_k⌉ と隣接差の比の評価"""

    times: List[int]
    ratios: List[float]
    ratio_bound: float
    ratio_bound_holds: bool


@dataclass
class _IntervalOutcome:
    advance: AdvanceResult
    survivors: List[ParamInterval]
    excluded: List[Interval]


# --- キー関数 -------------------------------------------------------------


def _window_key(x: float, cfg: PartitionConfig) -> Hashable:
    where = locate(x, cfg)
    if isinstance(where, PartitionIndex):
        return ("slice", where.r, where.l)
    if where is Location.CRITICAL_POINT:
        return CORE_KEY
    sign = 1 if x > 0.0 else -1
    if abs(x) > cfg.delta:
        return ("out", sign)
    return ("sliver", sign)


def _tag_for(run: KeyedRun, cfg: PartitionConfig) -> IntervalTag:
    if run.key[0] == "out" or (run.key == KEEP_KEY and run.outermost > cfg.delta):
        return IntervalTag.T
    return IntervalTag.N


def _pieces_from(
    runs: Sequence[KeyedRun],
    skip: Optional[KeyedRun],
    m: int,
    history: Tuple[ReturnEvent, ...],
    cfg: PartitionConfig,
) -> List[ParamInterval]:
    return [
        ParamInterval(lo=run.lo, hi=run.hi, m=m, tag=_tag_for(run, cfg), history=history)
        for run in runs
        if run is not skip
    ]


# --- 開始区間 -------------------------------------------------------------


def _first_break(
    a0: float, epsilon: float, conf: RunConfig, spec: StartupSpec
) -> Tuple[int, Interval, bool]:
    """距離条件が最初に破れる時刻 j と区間、ξ_j の標本単調性"""
    cfg = conf.partition
    delta, scale = cfg.delta, large_scale(cfg)
    lo, hi = max(A_MIN, a0 - epsilon), min(A_MAX, a0 + epsilon)
    params = np.linspace(lo, hi, spec.grid_points)
    x = np.zeros_like(params)

    for j in range(1, conf.max_steps + 1):
        x = 1.0 - params * x * x
        image = Interval(float(x.min()), float(x.max()))
        if image.lo <= 0.0 <= image.hi:
            limit = 0.0
        elif image.meets_open(-delta, delta):
            r = return_depth(image, cfg)
            limit = math.exp(-r) / (r * r)
        else:
            limit = scale
        if image.length > limit:
            steps = np.diff(x)
            monotone = bool(np.all(steps >= 0.0) or np.all(steps <= 0.0))
            return j, Interval(lo, hi), monotone

    raise NoExpansionWithinBudget(
        f"{conf.max_steps} ステップ以内に距離条件が破れませんでした (a₀={a0!r}, ε={epsilon!r})"
    )


def startup(
    a0: float, conf: RunConfig, spec: Optional[StartupSpec] = None
) -> StartupResult:
    """
    a₀ のまわりに開始区間 ω₀ を作る

    CE と多項式回帰のスクリーニングを通過した a₀ について、ξ_j(ω₀) の像が
    距離条件を満たし続ける限り j を進め、最初に破れた j を m₀ とする。
    m₀ が conf.m0 より小さければ ε を半分にし、二分法で最大の ε に詰める。

    Raises:
        StartupRejected: スクリーニングに通らない、または ε を縮めきれない場合
        NoExpansionWithinBudget: max_steps 以内に条件が破れない場合
    """
    spec = spec or StartupSpec()
    a = as_parameter(a0)

    ce = ce_estimate(a, spec.ce_horizon)
    if not ce.gamma_hat > spec.ce_gamma_min:
        raise StartupRejected(
            f"CE スクリーニングに通りません: a₀={a!r}, γ̂={ce.gamma_hat!r}"
        )
    pr = pr_screen(a, spec.ce_horizon, spec.pr_k, spec.pr_sigma_max)
    if not pr.passed:
        raise StartupRejected(
            f"多項式回帰スクリーニングに通りません: a₀={a!r}, σ̂={pr.sigma_hat!r}"
        )

    epsilon = spec.epsilon
    m0, omega, monotone = _first_break(a, epsilon, conf, spec)

    if spec.shrink and m0 < conf.m0:
        too_large = epsilon
        while m0 < conf.m0:
            too_large = epsilon
            epsilon /= 2.0
            if epsilon < conf.sampling.min_width:
                raise StartupRejected(
                    f"ε を {conf.sampling.min_width!r} まで縮めても m₀ ≥ {conf.m0} になりません"
                )
            m0, omega, monotone = _first_break(a, epsilon, conf, spec)
        for _ in range(STARTUP_BISECT_STEPS):
            trial = math.sqrt(epsilon * too_large)
            m_trial, omega_trial, monotone_trial = _first_break(a, trial, conf, spec)
            if m_trial >= conf.m0:
                epsilon, m0, omega, monotone = trial, m_trial, omega_trial, monotone_trial
            else:
                too_large = trial

    degenerate = m0 < conf.m0
    if degenerate:
        logger.warning(f"開始時刻が退化しています: m₀={m0} < {conf.m0}")
    if not monotone:
        logger.warning(f"ξ_{m0} は ω₀ 上で標本的に単調ではありません")

    omega0 = ParamInterval(lo=omega.lo, hi=omega.hi, m=m0, tag=IntervalTag.START)
    logger.info(f"開始区間: [{omega.lo!r}, {omega.hi!r}], m₀={m0}, ε={epsilon!r}")
    return StartupResult(
        omega0=omega0,
        m0=m0,
        epsilon=epsilon,
        degenerate=degenerate,
        monotone=monotone,
        ce=ce,
        pr=pr,
    )


# --- 完全回帰まで進める ---------------------------------------------------


def _essential_inner_edge(event: ReturnEvent) -> Optional[float]:
    """本質区間が I_r そのものなら内側の端 e^{−r−1}、そうでなければ None"""
    target = event.essential_interval
    if target is None:
        return None
    outer = max(abs(target.lo), abs(target.hi))
    inner = min(abs(target.lo), abs(target.hi))
    r = depth_of(outer)
    if math.isclose(outer, math.exp(-r)) and math.isclose(inner, math.exp(-r - 1)):
        return inner
    return None


def _split_essential(
    tracker: ImageTracker,
    event: ReturnEvent,
    n: int,
    history: Tuple[ReturnEvent, ...],
    cfg: PartitionConfig,
) -> List[ParamInterval]:
    """本質区間より内側に写る部分をスライスごとに切り離す"""
    inner = _essential_inner_edge(event)
    if inner is None:
        return []

    def key(x: float) -> Hashable:
        return KEEP_KEY if abs(x) > inner else _window_key(x, cfg)

    runs = tracker.split(key)
    kept = [run for run in runs if run.key == KEEP_KEY]
    if len(runs) <= 1 or not kept:
        return []
    chosen = max(kept, key=lambda run: (run.outermost, -run.lo))
    tracker.restrict(chosen.lo, chosen.hi)
    return _pieces_from(runs, chosen, n, history, cfg)


def _split_escape(
    tracker: ImageTracker,
    n: int,
    history: Tuple[ReturnEvent, ...],
    cfg: PartitionConfig,
) -> List[ParamInterval]:
    """窓の中に写る部分を切り離し、最も外側の脱出部分で続ける"""
    runs = tracker.split(lambda x: _window_key(x, cfg))
    outside = [run for run in runs if run.key[0] == "out"]
    if len(runs) <= 1 or not outside:
        return []
    chosen = max(outside, key=lambda run: (run.outermost, -run.lo))
    tracker.restrict(chosen.lo, chosen.hi)
    return _pieces_from(runs, chosen, n, history, cfg)


def advance_to_complete(omega: ParamInterval, conf: RunConfig) -> AdvanceResult:
    """
    区間 ω を次の完全回帰まで進める

    各回帰を分類し、非本質・本質・脱出回帰では微分回復規則を適用する
    （失敗すれば区間全体を除外）。本質回帰ではより深いスライスに写る部分を、
    脱出回帰では窓の中に写る部分を m = n の新しい区間として切り離す。
    束縛期間中に芯に当たらない回帰は bound として記録するだけ。

    Returns:
        AdvanceResult（完全回帰に達した場合は completed と complete_n が入る）

    Raises:
        BudgetExhausted: max_steps 以内に完全回帰に達しない場合（result に途中経過）
    """
    cfg = conf.partition
    spec = conf.sampling
    delta = cfg.delta
    tracker = ImageTracker(omega.lo, omega.hi, omega.m, cfg, spec)
    result = AdvanceResult()
    history: Tuple[ReturnEvent, ...] = omega.history
    bound_until = omega.m
    time_limit = conf.kappa * math.log(max(omega.m, 1)) + 1.0

    for n in range(omega.m + 1, omega.m + conf.max_steps + 1):
        tracker.step()
        current = Interval(tracker.lo, tracker.hi)
        if tracker.width < spec.min_width:
            logger.warning(f"区間幅が分解能を下回ったため退役: {current}, n={n}")
            result.retired, result.retire_reason = current, RETIRE_RESOLUTION
            return result

        tracker.refine()
        image = tracker.image
        delta_n = conf.rate.value(n)

        if image.meets_open(-core_radius(delta_n), core_radius(delta_n)):
            event = ReturnEvent(
                n=n,
                kind=ReturnKind.COMPLETE,
                image=image,
                depth=return_depth(image, cfg),
                omega=current,
            )
            result.events.append(event)
            result.completed = ParamInterval(
                lo=current.lo,
                hi=current.hi,
                m=omega.m,
                tag=omega.tag,
                history=history + (event,),
            )
            result.complete_n = n
            result.time_violation = n - omega.m > time_limit
            if result.time_violation:
                logger.warning(
                    f"完全回帰までの時間が長すぎます: n − m = {n - omega.m} > κ log m + 1 = {time_limit:.3f}"
                )
            return result

        if not image.meets_open(-delta, delta):
            continue

        if n <= bound_until:
            event = ReturnEvent(
                n=n,
                kind=ReturnKind.BOUND,
                image=image,
                depth=return_depth(image, cfg),
                omega=current,
            )
            result.events.append(event)
            history = history + (event,)
            continue

        event = make_return_event(image, n, delta_n, cfg, omega=current)
        samples = tracker.pick(spec.a_samples)
        decision = restore_derivative_check(
            samples, n, conf.gamma_b, conf.c_b, conf.gamma, conf.c
        )
        if not decision.keep:
            logger.debug(f"微分回復に失敗したため区間全体を除外: {current}, n={n}")
            result.events.append(event)
            result.excluded.append(current)
            result.removed = True
            return result
        if decision.violations:
            logger.debug(f"弱い指数評価を破るサンプル: {len(decision.violations)} 点, n={n}")

        period = bounded_period(
            samples, n, event.depth or cfg.r_min, cfg, conf.bound_max_nu, spec.eta_samples
        )
        event = event.with_bound_period(period.p)
        result.events.append(event)
        history = history + (event,)
        bound_until = n + period.p
        logger.debug(f"回帰 n={n}: {event.kind.value}, 深さ={event.depth}, p={period.p}")

        if event.kind is ReturnKind.ESSENTIAL:
            result.pieces.extend(_split_essential(tracker, event, n, history, cfg))
        elif event.kind is ReturnKind.ESCAPE:
            result.pieces.extend(_split_escape(tracker, n, history, cfg))

    result.retired = Interval(tracker.lo, tracker.hi)
    result.retire_reason = RETIRE_BUDGET
    raise BudgetExhausted(
        f"{conf.max_steps} ステップ以内に完全回帰に達しませんでした: {result.retired}",
        result=result,
    )


# --- 完全回帰での除外 -----------------------------------------------------


def exclude_at_complete(
    omega: ParamInterval,
    n: int,
    rate: RateSequence,
    cfg: PartitionConfig,
    sampling: Optional[SamplingSpec] = None,
) -> ExclusionResult:
    """
    完全回帰の時刻 n で芯 (−δ_n/3, δ_n/3) に写るパラメータを除く

    残りは像のスライス I_{rl}（N 型）または窓の外（T 型）ごとに分け、m = n を付ける。
    境界をまたぐサンプル間の隙間は除外側に入れる。
    """
    spec = sampling or SamplingSpec()
    tracker = ImageTracker(omega.lo, omega.hi, n, cfg, spec)
    tracker.refine()
    core = core_radius(rate.value(n))

    def key(x: float) -> Hashable:
        return CORE_KEY if abs(x) < core else _window_key(x, cfg)

    runs = tracker.split(key, absorbing=lambda k: k == CORE_KEY)
    excluded = [Interval(run.lo, run.hi) for run in runs if run.key == CORE_KEY]
    if not excluded:
        logger.warning(f"完全回帰のはずの区間が芯に当たりません: [{omega.lo!r}, {omega.hi!r}], n={n}")
    survivors = [
        ParamInterval(lo=run.lo, hi=run.hi, m=n, tag=_tag_for(run, cfg), history=omega.history)
        for run in runs
        if run.key != CORE_KEY
    ]
    return ExclusionResult(excluded=excluded, survivors=survivors)


# --- 世代の境界での検査 ---------------------------------------------------


def basic_assumption_violation(
    omega: ParamInterval, m_start: int, rate: RateSequence
) -> Optional[int]:
    """
    端点と中点で m_start ≤ j ≤ m の |ξ_j(a)| ≥ δ_j/3 を再計算する

    Returns:
        最初に破れた j。すべて満たせば None
    """
    first = max(m_start, rate.domain_start)
    if omega.m < first:
        return None
    thresholds = rate.values_array(np.arange(first, omega.m + 1)) / 3.0
    params = np.array([omega.lo, omega.midpoint, omega.hi])
    x = np.zeros_like(params)
    for j in range(1, omega.m + 1):
        x = 1.0 - params * x * x
        if j >= first and np.any(np.abs(x) < thresholds[j - first]):
            return j
    return None


def _apply_capacity(
    intervals: List[ParamInterval], capacity: int
) -> Tuple[List[ParamInterval], List[ParamInterval]]:
    """長い順に capacity 個まで残し、残りを退役させる"""
    if len(intervals) <= capacity:
        return intervals, []
    ordered = sorted(intervals, key=lambda w: (-w.length, w.lo))
    active = sorted(ordered[:capacity], key=lambda w: (w.lo, w.hi))
    return active, ordered[capacity:]


def _process_interval(omega: ParamInterval, conf: RunConfig) -> _IntervalOutcome:
    try:
        advance = advance_to_complete(omega, conf)
    except BudgetExhausted as e:
        logger.warning(str(e))
        advance = e.result

    survivors: List[ParamInterval] = []
    excluded: List[Interval] = []
    if advance.completed is not None and advance.complete_n is not None:
        split = exclude_at_complete(
            advance.completed, advance.complete_n, conf.rate, conf.partition, conf.sampling
        )
        survivors, excluded = split.survivors, split.excluded
    return _IntervalOutcome(advance=advance, survivors=survivors, excluded=excluded)


# --- 減衰の評価 -----------------------------------------------------------


def m_sequence(m0: int, kappa: float, K: int) -> MSequence:
    """
    支配列 m_{k+1} = ⌈m_k + κ log m_k⌉ と比 (m_{k+1}−m_k)/(m_k−m_{k−1}) の評価

    比の上界は 1 + (κ + 1 + 1/κ)/log m₀。

    Raises:
        ValueError: κ ≤ 0 または m₀ < 2 の場合
    """
    if not kappa > 0.0:
        raise ValueError(f"κ は正で指定してください（κ = 0 では列が増えません）: {kappa}")
    if m0 < 2:
        raise ValueError(f"m₀ は 2 以上で指定してください: {m0}")
    if K < 0:
        raise ValueError(f"K は 0 以上で指定してください: {K}")

    times = [m0]
    for _ in range(K):
        m = times[-1]
        times.append(math.ceil(m + kappa * math.log(m)))

    gaps = [b - a for a, b in zip(times, times[1:])]
    ratios = [after / before for before, after in zip(gaps, gaps[1:])]
    bound = 1.0 + (kappa + 1.0 + 1.0 / kappa) / math.log(m0)
    return MSequence(
        times=times,
        ratios=ratios,
        ratio_bound=bound,
        ratio_bound_holds=all(ratio <= bound for ratio in ratios),
    )


def decay_bound(ms: Sequence[int], rate: RateSequence, tau: float) -> float:
    """
    Π (1 − δ_m τ^{(log* m)³}) を対数の補償和で計算

    Raises:
        RateNotDefined: δ_m が定義されない場合
        DomainError: 因子が正でなくなる場合
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"τ は [0, 1) の範囲で指定してください: {tau}")
    logs: List[float] = []
    for m in ms:
        x = rate.value(m) * tau ** (log_star(m) ** 3)
        if x >= 1.0:
            raise DomainError(f"減衰因子 1 − δ_m τ^(log* m)³ が正ではありません: m={m}")
        logs.append(math.log1p(-x))
    return math.exp(math.fsum(logs))


def calibrate_tau(factors: Sequence[Tuple[float, int]], rate: RateSequence) -> Optional[float]:
    """
    世代ごとの生存率 f_j が f_j ≤ 1 − δ_{m_j} τ^{(log* m_j)³} を満たす最大の τ

    Args:
        factors: (f_j, m_j) の列
    """
    taus: List[float] = []
    for survival, m in factors:
        exponent = log_star(m) ** 3
        if exponent == 0:
            continue
        fraction = max(0.0, 1.0 - survival) / rate.value(m)
        taus.append(min(fraction, 1.0) ** (1.0 / exponent))
    if not taus:
        return None
    return min(min(taus), TAU_CAP)


def _interval_tau(excluded: float, length: float, n: int, rate: RateSequence) -> float:
    exponent = max(1, log_star(n) ** 3)
    return min(excluded / length / rate.value(n), 1.0) ** (1.0 / exponent)


def _decay_report(
    states: List[GenerationState],
    ms: List[int],
    conf: RunConfig,
    interval_taus: List[float],
    advance_calls: int,
    time_violations: int,
) -> DecayReport:
    generations = states[1:]
    tau_calibrated = calibrate_tau(
        [(state.survival, m) for state, m in zip(generations, ms)], conf.rate
    )
    rows: List[DecayRow] = []
    survival = 1.0
    for index, state in enumerate(generations):
        survival *= state.survival
        prefix = ms[: index + 1]
        bound = decay_bound(prefix, conf.rate, conf.tau)
        calibrated = decay_bound(prefix, conf.rate, tau_calibrated or 0.0)
        rows.append(
            DecayRow(
                k=state.k,
                m_k=ms[index],
                measured_ratio=state.measure / states[0].measure,
                survival_ratio=survival,
                bound=bound,
                calibrated_bound=calibrated,
                holds=survival <= calibrated * (1.0 + 1e-12),
            )
        )
    return DecayReport(
        tau=conf.tau,
        tau_calibrated=tau_calibrated,
        rows=rows,
        interval_tau_min=min(interval_taus) if interval_taus else None,
        complete_returns=len(interval_taus),
        advance_calls=advance_calls,
        time_violations=time_violations,
    )


# --- 帰納法のループ -------------------------------------------------------


def _empty_counts() -> Dict[str, int]:
    return {kind.value: 0 for kind in ReturnKind}


def run(
    conf: RunConfig,
    a0: float,
    startup_spec: Optional[StartupSpec] = None,
    workers: int = 1,
) -> RunResult:
    """
    開始区間から max_generations 世代まで除外を繰り返す

    同じ世代の区間は互いに独立なので workers 個のスレッドで処理する。
    結果は入力順にまとめ、(lo, hi) で並べ直すので出力は決定的。

    Returns:
        RunResult（世代ごとの状態・回帰イベント・減衰の報告）
    """
    start = startup(a0, conf, startup_spec)
    omega0 = start.omega0
    states = [
        GenerationState(
            k=0,
            intervals=(omega0,),
            excluded=0.0,
            retired=0.0,
            measure=omega0.length,
            max_m=start.m0,
            counts=_empty_counts(),
        )
    ]
    events: List[Tuple[int, ReturnEvent]] = []
    retired_by_reason: Dict[str, float] = {
        RETIRE_BUDGET: 0.0,
        RETIRE_RESOLUTION: 0.0,
        RETIRE_CAPACITY: 0.0,
    }
    ms: List[int] = []
    interval_taus: List[float] = []
    advance_calls = time_violations = ba_exclusions = 0
    excluded_total = retired_total = 0.0
    max_m = start.m0
    current = [omega0]

    for k in range(1, conf.max_generations + 1):
        if not current:
            logger.info(f"世代 {k}: 残っている区間がないため終了します")
            break

        previous_measure = math.fsum(w.length for w in current)
        active, overflow = _apply_capacity(current, conf.max_active_intervals)
        retired_now = [w.length for w in overflow]
        retired_by_reason[RETIRE_CAPACITY] += math.fsum(retired_now)
        if overflow:
            logger.warning(f"世代 {k}: 区間数の上限を超えたため {len(overflow)} 個を退役")

        if workers > 1 and len(active) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(lambda w: _process_interval(w, conf), active))
        else:
            outcomes = [_process_interval(w, conf) for w in active]

        counts = _empty_counts()
        excluded_now: List[float] = []
        survivors: List[ParamInterval] = []
        generation_m = max_m
        for omega, outcome in zip(active, outcomes):
            advance = outcome.advance
            advance_calls += 1
            time_violations += int(advance.time_violation)
            for event in advance.events:
                counts[event.kind.value] += 1
                events.append((k, event))
            if advance.retired is not None and advance.retire_reason is not None:
                retired_now.append(advance.retired.length)
                retired_by_reason[advance.retire_reason] += advance.retired.length
            excluded_now.extend(interval.length for interval in advance.excluded)
            excluded_now.extend(interval.length for interval in outcome.excluded)
            survivors.extend(advance.pieces)
            survivors.extend(outcome.survivors)
            if advance.complete_n is not None:
                generation_m = max(generation_m, advance.complete_n)
                removed = math.fsum(interval.length for interval in outcome.excluded)
                interval_taus.append(
                    _interval_tau(removed, omega.length, advance.complete_n, conf.rate)
                )

        kept: List[ParamInterval] = []
        for omega in survivors:
            violation = basic_assumption_violation(omega, start.m0, conf.rate)
            if violation is None:
                kept.append(omega)
                continue
            ba_exclusions += 1
            excluded_now.append(omega.length)
            logger.debug(f"基本仮定を j={violation} で破る区間を除外: [{omega.lo!r}, {omega.hi!r}]")

        kept.sort(key=lambda w: (w.lo, w.hi))
        measure = math.fsum(w.length for w in kept)
        excluded_total += math.fsum(excluded_now)
        retired_total += math.fsum(retired_now)
        tracked = previous_measure - math.fsum(retired_now)
        survival = measure / tracked if tracked > 0.0 else 1.0
        max_m = generation_m
        ms.append(max_m)

        states.append(
            GenerationState(
                k=k,
                intervals=tuple(kept),
                excluded=excluded_total,
                retired=retired_total,
                measure=measure,
                max_m=max_m,
                counts=counts,
                survival=min(survival, 1.0),
            )
        )
        logger.info(
            f"世代 {k}: 区間数={len(kept)}, 測度={measure!r}, 除外={excluded_total!r}, "
            f"退役={retired_total!r}, max m={max_m}"
        )
        current = kept

    decay = _decay_report(states, ms, conf, interval_taus, advance_calls, time_violations)
    return RunResult(
        startup=start,
        states=states,
        events=events,
        decay=decay,
        retired_by_reason=retired_by_reason,
        basic_assumption_exclusions=ba_exclusions,
    )
